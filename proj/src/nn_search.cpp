#include "neurodiff/nn_search.hpp"

#include <algorithm>

#include "neurodiff/error.hpp"
#include "neurodiff/nifti.hpp"

namespace neurodiff {

Volume NiftiFileSource::load(std::size_t index) const { return read_nifti(m_paths.at(index)); }

double mean_squared_error(const Volume& a, const Volume& b) {
    if (!(a.dims() == b.dims())) {
        throw Error(Errc::shape_mismatch, "volumes differ in shape");
    }
    const auto& x = a.data();
    const auto& y = b.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
        acc += d * d;
    }
    return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

std::vector<Neighbor> nn_search(const Volume& query, const VolumeSource& candidates, std::size_t k) {
    if (candidates.size() == 0) {
        throw Error(Errc::empty_candidates, "no candidate volumes");
    }
    if (k == 0) {
        throw Error(Errc::invalid_parameter, "k must be positive");
    }
    auto before = [](const Neighbor& a, const Neighbor& b) {
        return a.mse < b.mse || (a.mse == b.mse && a.index < b.index);
    };
    std::vector<Neighbor> best;
    best.reserve(k + 1);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const Neighbor n{i, mean_squared_error(query, candidates.load(i))};
        if (best.size() == k && !before(n, best.back())) continue;
        best.insert(std::upper_bound(best.begin(), best.end(), n, before), n);
        if (best.size() > k) best.pop_back();
    }
    return best;
}

}  // namespace neurodiff
