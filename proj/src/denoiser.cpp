#include "neurodiff/denoiser.hpp"

#include <cmath>

#include "neurodiff/error.hpp"

namespace neurodiff {

GaussianOracle::GaussianOracle(PredictionKind kind, Field mean, double variance,
                               NoiseSchedule schedule)
    : m_kind(kind), m_mean(std::move(mean)), m_variance(variance), m_schedule(std::move(schedule)) {
    if (m_mean.empty()) {
        throw Error(Errc::invalid_parameter, "oracle mean is empty");
    }
    if (!(variance >= 0.0)) {
        throw Error(Errc::invalid_parameter, "oracle variance must be nonnegative");
    }
}

GaussianOracle::GaussianOracle(PredictionKind kind, double mean, double variance,
                               NoiseSchedule schedule)
    : GaussianOracle(kind, Field{mean}, variance, std::move(schedule)) {}

Field GaussianOracle::posterior_mean(std::span<const double> xt, double ab) const {
    if (m_mean.size() != 1 && m_mean.size() != xt.size()) {
        throw Error(Errc::shape_mismatch, "oracle mean does not match input size");
    }
    const double a = std::sqrt(ab);
    const double denom = ab * m_variance + (1.0 - ab);
    Field out(xt.size());
    for (std::size_t i = 0; i < xt.size(); ++i) {
        out[i] = (a * m_variance * xt[i] + (1.0 - ab) * mean_at(i)) / denom;
    }
    return out;
}

Field GaussianOracle::predict(std::span<const double> xt, const Dims& shape, int t) const {
    if (shape.size() != xt.size()) {
        throw Error(Errc::shape_mismatch, "field size does not match shape");
    }
    if (t < 0 || t >= m_schedule.steps()) {
        throw Error(Errc::invalid_parameter, "timestep outside schedule");
    }
    const double ab = m_schedule.alpha_bar(t);
    Field x0 = posterior_mean(xt, ab);
    if (m_kind == PredictionKind::Sample) {
        return x0;
    }
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    Field eps(xt.size());
    for (std::size_t i = 0; i < xt.size(); ++i) {
        eps[i] = (xt[i] - a * x0[i]) / b;
    }
    return make_target(m_kind, x0, eps, ab);
}

}  // namespace neurodiff
