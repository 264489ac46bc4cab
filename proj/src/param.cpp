#include "neurodiff/param.hpp"

#include <cmath>
#include <string>

#include "neurodiff/error.hpp"

namespace neurodiff {
namespace {

void require_same(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(Errc::shape_mismatch,
                    std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " elements");
    }
}

void require_open_unit(double ab) {
    if (!(ab > 0.0 && ab < 1.0)) {
        throw Error(Errc::degenerate_ab, "alpha_bar must lie in (0, 1), got " + std::to_string(ab));
    }
}

}  // namespace

std::string_view to_string(PredictionKind kind) {
    switch (kind) {
        case PredictionKind::Sample: return "sample";
        case PredictionKind::Velocity: return "velocity";
        case PredictionKind::Flow: return "flow";
    }
    return "sample";
}

PredictionKind parse_prediction_kind(std::string_view text) {
    if (text == "sample") return PredictionKind::Sample;
    if (text == "velocity") return PredictionKind::Velocity;
    if (text == "flow") return PredictionKind::Flow;
    throw Error(Errc::invalid_parameter, "unknown prediction kind '" + std::string(text) + "'");
}

Field forward_diffuse(std::span<const double> x0, std::span<const double> eps, double ab) {
    require_same(x0, eps);
    require_open_unit(ab);
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    Field out(x0.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a * x0[i] + b * eps[i];
    }
    return out;
}

Field make_target(PredictionKind kind, std::span<const double> x0, std::span<const double> eps,
                  double ab) {
    require_same(x0, eps);
    require_open_unit(ab);
    Field out(x0.size());
    switch (kind) {
        case PredictionKind::Sample:
            out.assign(x0.begin(), x0.end());
            break;
        case PredictionKind::Velocity: {
            const double a = std::sqrt(ab);
            const double b = std::sqrt(1.0 - ab);
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] = a * eps[i] - b * x0[i];
            }
            break;
        }
        case PredictionKind::Flow:
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] = eps[i] - x0[i];
            }
            break;
    }
    return out;
}

Field predict_x0(PredictionKind kind, std::span<const double> pred, std::span<const double> xt,
                 double ab) {
    require_same(pred, xt);
    require_open_unit(ab);
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    Field out(pred.size());
    switch (kind) {
        case PredictionKind::Sample:
            out.assign(pred.begin(), pred.end());
            break;
        case PredictionKind::Velocity:
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] = a * xt[i] - b * pred[i];
            }
            break;
        case PredictionKind::Flow: {
            // Solves {xt = a x0 + b eps, pred = eps - x0} for x0.
            const double denom = a + b;
            if (!(denom > 0.0) || !std::isfinite(denom)) {
                throw Error(Errc::degenerate_ab, "sqrt(ab) + sqrt(1-ab) vanished");
            }
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] = (xt[i] - b * pred[i]) / denom;
            }
            break;
        }
    }
    return out;
}

Field predict_eps(PredictionKind kind, std::span<const double> pred, std::span<const double> xt,
                  double ab) {
    const Field x0 = predict_x0(kind, pred, xt, ab);
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    if (!(b > 0.0)) {
        throw Error(Errc::degenerate_ab, "1 - alpha_bar underflowed");
    }
    Field out(x0.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (xt[i] - a * x0[i]) / b;
    }
    return out;
}

Field velocity_eps(std::span<const double> pred, std::span<const double> xt, double ab) {
    require_same(pred, xt);
    require_open_unit(ab);
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    Field out(pred.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a * pred[i] + b * xt[i];
    }
    return out;
}

double training_loss(std::span<const double> pred, std::span<const double> target) {
    require_same(pred, target);
    if (pred.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        sum += d * d;
    }
    return sum / static_cast<double>(pred.size());
}

}  // namespace neurodiff
