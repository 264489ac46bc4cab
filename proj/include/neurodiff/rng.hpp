#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace neurodiff {

/// Counter-based random stream. The value at position `i` depends only on
/// (seed, stream, i), so results are identical across platforms and
/// independent of how many values other streams consumed.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

    std::uint64_t next_u64() noexcept;

    /// Uniform in the open interval (0, 1) with 53-bit resolution.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) noexcept;

    /// Standard normal via Box-Muller on two consecutive uniforms.
    double normal() noexcept;

    void fill_normal(std::span<double> out) noexcept;

    std::uint64_t position() const noexcept { return m_counter; }

    /// Derives an independent stream keyed by `tag`.
    Rng fork(std::uint64_t tag) const noexcept;

private:
    std::uint64_t m_key;
    std::uint64_t m_counter = 0;
    double m_spare = 0.0;
    bool m_has_spare = false;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace neurodiff
