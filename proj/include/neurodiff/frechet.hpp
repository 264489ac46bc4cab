#pragma once

#include <cstddef>
#include <vector>

#include "neurodiff/features.hpp"

namespace neurodiff {

/// Gaussian summary of a feature population.
struct FeatureStats {
    std::vector<double> mu;
    std::vector<double> sigma;  // d x d, row-major
    std::size_t n = 0;

    std::size_t dim() const noexcept { return mu.size(); }
};

/// Sample mean and unbiased (n - 1) covariance.
FeatureStats fit_stats(const FeatureMatrix& features);

/// |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}), the root taken through
/// the symmetric eigendecomposition of sqrt(Sa) Sb sqrt(Sa).
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

}  // namespace neurodiff
