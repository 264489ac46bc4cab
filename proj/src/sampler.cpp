#include "neurodiff/sampler.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <string>

#include "neurodiff/error.hpp"
#include "neurodiff/rng.hpp"

namespace neurodiff {

double ddim_sigma(double ab_t, double ab_prev, double eta) {
    if (eta == 0.0) {
        return 0.0;
    }
    return eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_prev);
}

Field ddim_step(std::span<const double> xt, std::span<const double> x0_hat,
                std::span<const double> eps_hat, double ab_t, double ab_prev, double eta,
                std::span<const double> noise) {
    if (xt.size() != x0_hat.size() || xt.size() != eps_hat.size()) {
        throw Error(Errc::shape_mismatch, "ddim_step operands differ in size");
    }
    if (!(ab_t > 0.0 && ab_t < 1.0 && ab_prev > 0.0 && ab_prev <= 1.0)) {
        throw Error(Errc::degenerate_ab, "alpha_bar outside (0, 1]");
    }
    if (ab_prev < ab_t) {
        throw Error(Errc::invalid_ab_ordering, "ab_prev must be >= ab_t");
    }
    if (eta < 0.0 || eta > 1.0) {
        throw Error(Errc::invalid_parameter, "eta must lie in [0, 1]");
    }
    const double sigma = ddim_sigma(ab_t, ab_prev, eta);
    if (sigma > 0.0 && noise.size() != xt.size()) {
        throw Error(Errc::shape_mismatch, "noise field size");
    }
    const double a_prev = std::sqrt(ab_prev);
    const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
    Field out(xt.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a_prev * x0_hat[i] + dir * eps_hat[i];
        if (sigma > 0.0) {
            out[i] += sigma * noise[i];
        }
    }
    return out;
}

Field initial_noise(std::uint64_t seed, std::size_t size) {
    Rng rng(seed, /*stream=*/0);
    Field out(size);
    rng.fill_normal(out);
    return out;
}

Field generate_field(const Denoiser& denoiser, const NoiseSchedule& schedule,
                     const SamplerConfig& cfg, GenerationStats* stats) {
    if (cfg.steps < 1) {
        throw Error(Errc::invalid_parameter, "sampler needs at least one step");
    }
    if (cfg.steps > schedule.steps()) {
        throw Error(Errc::invalid_parameter, "more inference steps than schedule steps");
    }
    const std::size_t n = cfg.shape.size();
    if (n == 0) {
        throw Error(Errc::shape_mismatch, "empty output shape");
    }
    const std::vector<int> timesteps = ddim_timesteps(schedule.steps(), cfg.steps);
    const PredictionKind kind = denoiser.kind();

    Field x = initial_noise(cfg.seed, n);
    Rng step_noise(cfg.seed, /*stream=*/1);
    Field noise;

    for (std::size_t i = timesteps.size(); i-- > 0;) {
        const int t = timesteps[i];
        const double ab_t = schedule.alpha_bar(t);
        const double ab_prev = i > 0 ? schedule.alpha_bar(timesteps[i - 1]) : 1.0;

        const Field pred = denoiser.predict(x, cfg.shape, t);
        if (pred.size() != n) {
            throw Error(Errc::shape_mismatch, "denoiser changed the field size");
        }
        const Field x0_hat = predict_x0(kind, pred, x, ab_t);
        const Field eps_hat = predict_eps(kind, pred, x, ab_t);
        if (ddim_sigma(ab_t, ab_prev, cfg.eta) > 0.0) {
            noise.resize(n);
            step_noise.fill_normal(noise);
        }
        x = ddim_step(x, x0_hat, eps_hat, ab_t, ab_prev, cfg.eta, noise);
#ifndef NDEBUG
        for (double v : x) {
            assert(std::isfinite(v) && "non-finite value in DDIM chain");
        }
#endif
    }

    if (stats != nullptr) {
        const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
        stats->min = *lo;
        stats->max = *hi;
    }
    return x;
}

Volume generate(const Denoiser& denoiser, const NoiseSchedule& schedule, const SamplerConfig& cfg,
                GenerationStats* stats) {
    return from_field(generate_field(denoiser, schedule, cfg, stats), cfg.shape);
}

}  // namespace neurodiff
