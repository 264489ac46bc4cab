#include "neurodiff/optim.hpp"

#include <cmath>

#include "neurodiff/error.hpp"

namespace neurodiff {

void adam_step(std::span<double> weights, std::span<const double> grads, AdamState& state,
               double lr) {
    if (weights.size() != grads.size()) {
        throw Error(Errc::dimension_mismatch, "weights and gradients differ in size");
    }
    for (double g : grads) {
        if (!std::isfinite(g)) {
            throw Error(Errc::training_diverged, "non-finite gradient");
        }
    }
    if (state.m.size() != weights.size()) {
        state.m.assign(weights.size(), 0.0);
        state.v.assign(weights.size(), 0.0);
        state.step = 0;
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < weights.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        weights[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

void ema_update(EmaState& ema, std::span<const double> weights) {
    if (!ema.initialized) {
        ema.shadow.assign(weights.begin(), weights.end());
        ema.initialized = true;
        return;
    }
    if (ema.shadow.size() != weights.size()) {
        throw Error(Errc::dimension_mismatch, "EMA shadow and weights differ in size");
    }
    const double keep = 1.0 - ema.momentum;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        ema.shadow[i] = keep * ema.shadow[i] + ema.momentum * weights[i];
    }
}

}  // namespace neurodiff
