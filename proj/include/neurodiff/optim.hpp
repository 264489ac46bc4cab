#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace neurodiff {

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam update in place. Throws training-diverged, leaving
/// weights and state untouched, when any gradient entry is non-finite.
void adam_step(std::span<double> weights, std::span<const double> grads, AdamState& state,
               double lr);

/// Exponential moving average of end-of-epoch weights.
struct EmaState {
    std::vector<double> shadow;
    double momentum = 0.1;
    bool initialized = false;
};

/// shadow <- (1 - momentum) shadow + momentum weights; the first call copies.
void ema_update(EmaState& ema, std::span<const double> weights);

}  // namespace neurodiff
