#pragma once

#include <span>
#include <vector>

#include "neurodiff/param.hpp"
#include "neurodiff/schedule.hpp"
#include "neurodiff/volume.hpp"

namespace neurodiff {

/// Time-conditioned predictor. Implementations must be safe to call
/// concurrently through a const reference.
class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual PredictionKind kind() const = 0;

    /// Prediction of the denoiser's kind for noised field `xt` at step `t`.
    virtual Field predict(std::span<const double> xt, const Dims& shape, int t) const = 0;
};

/// Exact denoiser for data distributed as N(mean, variance * I).
class GaussianOracle final : public Denoiser {
public:
    GaussianOracle(PredictionKind kind, Field mean, double variance, NoiseSchedule schedule);
    /// Constant mean over every voxel.
    GaussianOracle(PredictionKind kind, double mean, double variance, NoiseSchedule schedule);

    PredictionKind kind() const override { return m_kind; }
    Field predict(std::span<const double> xt, const Dims& shape, int t) const override;

    /// E[x0 | xt] at cumulative signal level ab.
    Field posterior_mean(std::span<const double> xt, double ab) const;

    double variance() const noexcept { return m_variance; }
    const NoiseSchedule& schedule() const noexcept { return m_schedule; }

private:
    double mean_at(std::size_t i) const noexcept {
        return m_mean.size() == 1 ? m_mean[0] : m_mean[i];
    }

    PredictionKind m_kind;
    Field m_mean;
    double m_variance;
    NoiseSchedule m_schedule;
};

}  // namespace neurodiff
