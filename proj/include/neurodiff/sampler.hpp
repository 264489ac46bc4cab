#pragma once

#include <cstdint>
#include <span>

#include "neurodiff/denoiser.hpp"
#include "neurodiff/param.hpp"
#include "neurodiff/schedule.hpp"
#include "neurodiff/volume.hpp"

namespace neurodiff {

struct SamplerConfig {
    int steps = 64;
    double eta = 0.0;
    std::uint64_t seed = 0;
    Dims shape{16, 16, 16};
};

/// One DDIM update from level ab_t to ab_prev. `noise` is only read when
/// eta > 0 and may then be empty otherwise.
Field ddim_step(std::span<const double> xt, std::span<const double> x0_hat,
                std::span<const double> eps_hat, double ab_t, double ab_prev, double eta,
                std::span<const double> noise);

/// Stochastic scale of ddim_step.
double ddim_sigma(double ab_t, double ab_prev, double eta);

/// Seeded unit Gaussian field; depends only on (seed, size).
Field initial_noise(std::uint64_t seed, std::size_t size);

struct GenerationStats {
    double min = 0.0;
    double max = 0.0;
};

/// Runs the reverse DDIM chain from pure noise; returns the final field in
/// 64-bit precision, unclamped.
Field generate_field(const Denoiser& denoiser, const NoiseSchedule& schedule,
                     const SamplerConfig& cfg, GenerationStats* stats = nullptr);

/// Runs the reverse DDIM chain from pure noise to a volume of cfg.shape.
Volume generate(const Denoiser& denoiser, const NoiseSchedule& schedule, const SamplerConfig& cfg,
                GenerationStats* stats = nullptr);

}  // namespace neurodiff
