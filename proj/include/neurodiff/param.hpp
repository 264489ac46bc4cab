#pragma once

#include <span>
#include <string_view>
#include <vector>

namespace neurodiff {

/// What the denoiser is trained to output.
enum class PredictionKind { Sample, Velocity, Flow };

std::string_view to_string(PredictionKind kind);
PredictionKind parse_prediction_kind(std::string_view text);

using Field = std::vector<double>;

/// sqrt(ab) * x0 + sqrt(1 - ab) * eps
Field forward_diffuse(std::span<const double> x0, std::span<const double> eps, double ab);

/// Sample -> x0, Velocity -> sqrt(ab) eps - sqrt(1-ab) x0, Flow -> eps - x0.
Field make_target(PredictionKind kind, std::span<const double> x0, std::span<const double> eps,
                  double ab);

/// Clean-image estimate implied by a network output at noise level ab.
Field predict_x0(PredictionKind kind, std::span<const double> pred, std::span<const double> xt,
                 double ab);

/// Noise estimate implied by a network output at noise level ab.
Field predict_eps(PredictionKind kind, std::span<const double> pred, std::span<const double> xt,
                  double ab);

/// Velocity-only closed form: sqrt(ab) v + sqrt(1-ab) xt.
Field velocity_eps(std::span<const double> pred, std::span<const double> xt, double ab);

/// Mean squared error over all elements.
double training_loss(std::span<const double> pred, std::span<const double> target);

}  // namespace neurodiff
