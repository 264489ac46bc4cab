#pragma once

#include <cstddef>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace neurodiff {

/// Discrete linear-beta diffusion schedule. Immutable once built; only the
/// three defining parameters are ever serialized.
class NoiseSchedule {
public:
    static constexpr int default_steps = 1000;
    static constexpr double default_beta_start = 1e-4;
    static constexpr double default_beta_end = 0.02;

    NoiseSchedule() : NoiseSchedule(default_steps, default_beta_start, default_beta_end) {}
    NoiseSchedule(int steps, double beta_start, double beta_end);

    int steps() const noexcept { return static_cast<int>(m_beta.size()); }
    double beta_start() const noexcept { return m_beta_start; }
    double beta_end() const noexcept { return m_beta_end; }

    const std::vector<double>& beta() const noexcept { return m_beta; }
    const std::vector<double>& alpha() const noexcept { return m_alpha; }
    const std::vector<double>& alpha_bar() const noexcept { return m_alpha_bar; }

    double alpha_bar(int t) const { return m_alpha_bar.at(static_cast<std::size_t>(t)); }

private:
    double m_beta_start;
    double m_beta_end;
    std::vector<double> m_beta;
    std::vector<double> m_alpha;
    std::vector<double> m_alpha_bar;
};

NoiseSchedule build_linear_schedule(int steps, double beta_start, double beta_end);

/// Uniform-stride subsequence of {0..steps-1} with `count` entries whose last
/// element is steps-1. Ascending; samplers walk it in reverse.
std::vector<int> ddim_timesteps(int steps, int count);

void to_json(nlohmann::json& j, const NoiseSchedule& s);
void from_json(const nlohmann::json& j, NoiseSchedule& s);

}  // namespace neurodiff
