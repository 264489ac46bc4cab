#include "neurodiff/frechet.hpp"

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "neurodiff/error.hpp"

namespace neurodiff {
namespace {

using Matrix = Eigen::MatrixXd;

Matrix as_matrix(const FeatureStats& s) {
    const auto d = static_cast<Eigen::Index>(s.dim());
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        s.sigma.data(), d, d);
}

/// Symmetric PSD square root; eigenvalues above -tol*trace are clamped to 0.
Matrix psd_sqrt(const Matrix& m, const char* what) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
    Eigen::VectorXd values = eig.eigenvalues();
    const double tol = 1e-8 * std::max(std::abs(m.trace()), 1e-300);
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (values[i] < -tol) {
            throw Error(Errc::non_psd, std::string(what) + " has eigenvalue " + std::to_string(values[i]));
        }
        values[i] = std::sqrt(std::max(values[i], 0.0));
    }
    return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

FeatureStats fit_stats(const FeatureMatrix& features) {
    if (features.rows < 2) {
        throw Error(Errc::insufficient_samples, "need at least two feature rows");
    }
    const std::size_t n = features.rows;
    const std::size_t d = features.cols;
    FeatureStats s;
    s.n = n;
    s.mu.assign(d, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) s.mu[c] += features.at(r, c);
    for (double& m : s.mu) m /= static_cast<double>(n);

    s.sigma.assign(d * d, 0.0);
    std::vector<double> centred(d);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) centred[c] = features.at(r, c) - s.mu[c];
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i; j < d; ++j) s.sigma[i * d + j] += centred[i] * centred[j];
    }
    const double denom = static_cast<double>(n - 1);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            s.sigma[i * d + j] /= denom;
            s.sigma[j * d + i] = s.sigma[i * d + j];
        }
    }
    return s;
}

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
    if (a.dim() != b.dim() || a.sigma.size() != a.dim() * a.dim() ||
        b.sigma.size() != b.dim() * b.dim()) {
        throw Error(Errc::dimension_mismatch, "feature statistics differ in dimension");
    }
    double mean_term = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        const double diff = a.mu[i] - b.mu[i];
        mean_term += diff * diff;
    }
    const Matrix sa = as_matrix(a);
    const Matrix sb = as_matrix(b);
    const Matrix root_a = psd_sqrt(sa, "first covariance");
    psd_sqrt(sb, "second covariance");
    Matrix inner = root_a * sb * root_a;
    inner = 0.5 * (inner + inner.transpose());
    const Matrix cross = psd_sqrt(inner, "cross term");
    const double value = mean_term + sa.trace() + sb.trace() - 2.0 * cross.trace();
    return std::max(value, 0.0);
}

}  // namespace neurodiff
