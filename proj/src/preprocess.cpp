#include "neurodiff/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "neurodiff/error.hpp"

namespace neurodiff {

Volume reorient_axial(const Volume& v) {
    validate(v);
    const Mat3& dir = v.direction();

    std::array<std::size_t, 3> best_perm{0, 1, 2};
    std::array<int, 3> best_sign{1, 1, 1};
    double best_score = -std::numeric_limits<double>::infinity();
    std::array<std::size_t, 3> perm{0, 1, 2};
    do {
        for (int mask = 0; mask < 8; ++mask) {
            std::array<int, 3> sign{};
            double score = 0.0;
            for (std::size_t a = 0; a < 3; ++a) {
                sign[a] = (mask >> a) & 1 ? -1 : 1;
                score += sign[a] * dir[a][perm[a]];
            }
            if (score > best_score + 1e-12) {
                best_score = score;
                best_perm = perm;
                best_sign = sign;
            }
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    const Dims& in = v.dims();
    const Dims out_dims{in[best_perm[0]], in[best_perm[1]], in[best_perm[2]]};
    Vec3 spacing{};
    Mat3 direction{};
    Vec3 start{};
    for (std::size_t a = 0; a < 3; ++a) {
        const std::size_t src_axis = best_perm[a];
        spacing[a] = v.spacing()[src_axis];
        for (std::size_t r = 0; r < 3; ++r) {
            direction[r][a] = best_sign[a] * dir[r][src_axis];
        }
        start[src_axis] = best_sign[a] > 0 ? 0.0 : static_cast<double>(in[src_axis] - 1);
    }

    Volume out(out_dims, spacing, direction, v.world(start), v.dtype());
    auto& dst = out.data();
    const auto& src = v.data();
    std::array<std::size_t, 3> idx{};
    std::array<std::size_t, 3> o{};
    for (o[2] = 0; o[2] < out_dims.nz; ++o[2]) {
        for (o[1] = 0; o[1] < out_dims.ny; ++o[1]) {
            for (o[0] = 0; o[0] < out_dims.nx; ++o[0]) {
                for (std::size_t a = 0; a < 3; ++a) {
                    const std::size_t src_axis = best_perm[a];
                    idx[src_axis] = best_sign[a] > 0 ? o[a] : in[src_axis] - 1 - o[a];
                }
                dst[out_dims.index(o[0], o[1], o[2])] = src[in.index(idx[0], idx[1], idx[2])];
            }
        }
    }
    return out;
}

std::array<double, 4> catmull_rom_weights(double t) {
    const double t2 = t * t;
    const double t3 = t2 * t;
    return {0.5 * (-t3 + 2.0 * t2 - t), 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t), 0.5 * (t3 - t2)};
}

namespace {

/// Resamples one axis of a double buffer.
std::vector<double> resample_axis(const std::vector<double>& src, const Dims& in, std::size_t axis,
                                  std::size_t n_out, double step, Dims& out_dims) {
    out_dims = in;
    if (axis == 0) out_dims.nx = n_out;
    else if (axis == 1) out_dims.ny = n_out;
    else out_dims.nz = n_out;

    const std::size_t n_in = in[axis];
    struct Tap {
        std::array<std::size_t, 4> idx;
        std::array<double, 4> w;
    };
    std::vector<Tap> taps(n_out);
    for (std::size_t k = 0; k < n_out; ++k) {
        const double pos = static_cast<double>(k) * step;
        const double base = std::floor(pos);
        const auto w = catmull_rom_weights(pos - base);
        const long b = static_cast<long>(base);
        for (int m = 0; m < 4; ++m) {
            const long i = std::clamp(b - 1 + m, 0L, static_cast<long>(n_in) - 1);
            taps[k].idx[static_cast<std::size_t>(m)] = static_cast<std::size_t>(i);
            taps[k].w[static_cast<std::size_t>(m)] = w[static_cast<std::size_t>(m)];
        }
    }

    std::vector<double> out(out_dims.size());
    const std::array<std::size_t, 3> stride_in{1, in.nx, in.nx * in.ny};
    for (std::size_t z = 0; z < out_dims.nz; ++z) {
        for (std::size_t y = 0; y < out_dims.ny; ++y) {
            for (std::size_t x = 0; x < out_dims.nx; ++x) {
                std::array<std::size_t, 3> p{x, y, z};
                const Tap& tap = taps[p[axis]];
                p[axis] = 0;
                const std::size_t base = p[0] + p[1] * stride_in[1] + p[2] * stride_in[2];
                double acc = 0.0;
                for (std::size_t m = 0; m < 4; ++m) {
                    if (tap.w[m] != 0.0) {
                        acc += tap.w[m] * src[base + tap.idx[m] * stride_in[axis]];
                    }
                }
                out[out_dims.index(x, y, z)] = acc;
            }
        }
    }
    return out;
}

}  // namespace

Volume resample_isotropic(const Volume& v, double target_mm) {
    validate(v);
    if (!(target_mm > 0.0)) {
        throw Error(Errc::degenerate_spacing, "target spacing must be positive");
    }
    for (double s : v.spacing()) {
        if (s > 10.0) {
            throw Error(Errc::degenerate_spacing,
                        "voxel spacing " + std::to_string(s) + " mm exceeds 10 mm");
        }
    }
    const auto [lo_it, hi_it] = std::minmax_element(v.data().begin(), v.data().end());
    const double lo = *lo_it;
    const double hi = *hi_it;

    std::vector<double> buf(v.data().begin(), v.data().end());
    Dims dims = v.dims();
    for (std::size_t axis = 0; axis < 3; ++axis) {
        const double ratio = target_mm / v.spacing()[axis];
        const double extent = static_cast<double>(dims[axis] - 1) / ratio;
        const std::size_t n_out = static_cast<std::size_t>(std::floor(extent + 1e-9)) + 1;
        Dims next{};
        buf = resample_axis(buf, dims, axis, n_out, ratio, next);
        dims = next;
    }

    const bool integral = v.dtype() == DType::U16;
    std::vector<float> data(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
        double x = std::clamp(buf[i], lo, hi);
        if (integral) x = std::round(x);
        data[i] = static_cast<float>(x);
    }
    return Volume(dims, std::move(data), {target_mm, target_mm, target_mm}, v.direction(), v.origin(),
                  v.dtype());
}

Volume clip_to_range(const Volume& v, double lo, double hi) {
    Volume out = v;
    for (float& x : out.data()) {
        x = static_cast<float>(std::clamp(static_cast<double>(x), lo, hi));
    }
    return out;
}

Vec3 center_of_mass(const Volume& mask) {
    const Dims& d = mask.dims();
    double total = 0.0;
    Vec3 acc{0.0, 0.0, 0.0};
    for (std::size_t k = 0; k < d.nz; ++k) {
        for (std::size_t j = 0; j < d.ny; ++j) {
            for (std::size_t i = 0; i < d.nx; ++i) {
                const double w = mask.at(i, j, k);
                if (w == 0.0) continue;
                total += w;
                acc[0] += w * static_cast<double>(i);
                acc[1] += w * static_cast<double>(j);
                acc[2] += w * static_cast<double>(k);
            }
        }
    }
    if (!(total > 0.0)) {
        throw Error(Errc::empty_mask, "mask has no positive voxels");
    }
    return mask.world({acc[0] / total, acc[1] / total, acc[2] / total});
}

Volume pad_crop(const Volume& v, const Vec3& center_mm, Dims shape) {
    const Vec3 c = v.index_of(center_mm);
    std::array<long, 3> offset{};
    for (std::size_t a = 0; a < 3; ++a) {
        offset[a] = static_cast<long>(std::floor(c[a] - (static_cast<double>(shape[a]) - 1.0) / 2.0 + 0.5));
    }
    const Vec3 new_origin = v.world({static_cast<double>(offset[0]), static_cast<double>(offset[1]),
                                     static_cast<double>(offset[2])});
    Volume out(shape, v.spacing(), v.direction(), new_origin, v.dtype());
    const Dims& in = v.dims();
    auto& dst = out.data();
    const auto& src = v.data();
    for (std::size_t k = 0; k < shape.nz; ++k) {
        const long sk = static_cast<long>(k) + offset[2];
        if (sk < 0 || sk >= static_cast<long>(in.nz)) continue;
        for (std::size_t j = 0; j < shape.ny; ++j) {
            const long sj = static_cast<long>(j) + offset[1];
            if (sj < 0 || sj >= static_cast<long>(in.ny)) continue;
            for (std::size_t i = 0; i < shape.nx; ++i) {
                const long si = static_cast<long>(i) + offset[0];
                if (si < 0 || si >= static_cast<long>(in.nx)) continue;
                dst[shape.index(i, j, k)] = src[in.index(static_cast<std::size_t>(si),
                                                          static_cast<std::size_t>(sj),
                                                          static_cast<std::size_t>(sk))];
            }
        }
    }
    return out;
}

Volume normalize_quantize(const Volume& v) {
    const auto [lo_it, hi_it] = std::minmax_element(v.data().begin(), v.data().end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!(hi > lo)) {
        throw Error(Errc::constant_volume, "cannot min-max normalize a constant volume");
    }
    Volume out = v;
    out.set_dtype(DType::U16);
    for (float& x : out.data()) {
        x = static_cast<float>(std::round(65535.0 * (static_cast<double>(x) - lo) / (hi - lo)));
    }
    return out;
}

double otsu_threshold(const Volume& v) {
    const auto [lo_it, hi_it] = std::minmax_element(v.data().begin(), v.data().end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!(hi > lo)) {
        return lo;
    }
    constexpr std::size_t bins = 256;
    std::array<double, bins> hist{};
    const double width = (hi - lo) / bins;
    for (float x : v.data()) {
        auto b = static_cast<std::size_t>((x - lo) / width);
        hist[std::min(b, bins - 1)] += 1.0;
    }
    const double total = static_cast<double>(v.data().size());
    double sum_all = 0.0;
    for (std::size_t b = 0; b < bins; ++b) sum_all += static_cast<double>(b) * hist[b];
    double w0 = 0.0, sum0 = 0.0, best = -1.0;
    std::size_t best_bin = 0;
    for (std::size_t b = 0; b + 1 < bins; ++b) {
        w0 += hist[b];
        sum0 += static_cast<double>(b) * hist[b];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double m0 = sum0 / w0;
        const double m1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_bin = b;
        }
    }
    return lo + width * static_cast<double>(best_bin + 1);
}

Volume fallback_brain_mask(const Volume& v) {
    const double thr = otsu_threshold(v);
    const Dims& d = v.dims();
    const std::size_t n = d.size();
    std::vector<int> label(n, 0);
    int best_label = 0;
    std::size_t best_size = 0;
    int next = 0;
    std::vector<std::size_t> stack;
    for (std::size_t seed = 0; seed < n; ++seed) {
        if (label[seed] != 0 || !(v.data()[seed] > thr)) continue;
        ++next;
        std::size_t size = 0;
        stack.push_back(seed);
        label[seed] = next;
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            ++size;
            const std::size_t i = p % d.nx;
            const std::size_t j = (p / d.nx) % d.ny;
            const std::size_t k = p / (d.nx * d.ny);
            auto visit = [&](std::size_t q) {
                if (label[q] == 0 && v.data()[q] > thr) {
                    label[q] = next;
                    stack.push_back(q);
                }
            };
            if (i > 0) visit(p - 1);
            if (i + 1 < d.nx) visit(p + 1);
            if (j > 0) visit(p - d.nx);
            if (j + 1 < d.ny) visit(p + d.nx);
            if (k > 0) visit(p - d.nx * d.ny);
            if (k + 1 < d.nz) visit(p + d.nx * d.ny);
        }
        if (size > best_size) {
            best_size = size;
            best_label = next;
        }
    }
    Volume mask(d, v.spacing(), v.direction(), v.origin(), DType::F32);
    for (std::size_t p = 0; p < n; ++p) {
        mask.data()[p] = (best_label != 0 && label[p] == best_label) ? 1.0f : 0.0f;
    }
    return mask;
}

Volume preprocess_volume(const Volume& image, const std::optional<Volume>& mask,
                         const PreprocessOptions& options) {
    // The centroid is a world point, so it can be taken on the raw mask.
    const Vec3 centre = center_of_mass(mask ? *mask : fallback_brain_mask(image));
    const auto [lo_it, hi_it] = std::minmax_element(image.data().begin(), image.data().end());
    Volume v = reorient_axial(image);
    v = resample_isotropic(v, options.target_mm);
    v = clip_to_range(v, *lo_it, *hi_it);
    v = pad_crop(v, centre, options.shape);
    return normalize_quantize(v);
}

std::vector<Slice2D> extract_slices(const Volume& v, double spacing_mm) {
    const Vec3& sp = v.spacing();
    if (!(spacing_mm > 0.0)) {
        throw Error(Errc::invalid_parameter, "slice spacing must be positive");
    }
    const Dims& d = v.dims();
    std::array<std::size_t, 3> step{};
    for (std::size_t a = 0; a < 3; ++a) {
        step[a] = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(spacing_mm / sp[a])));
    }
    std::vector<Slice2D> out;
    for (std::size_t k = 0; k < d.nz; k += step[2]) {
        Slice2D s{d.nx, d.ny, std::vector<float>(d.nx * d.ny)};
        for (std::size_t j = 0; j < d.ny; ++j)
            for (std::size_t i = 0; i < d.nx; ++i) s.data[j * d.nx + i] = v.at(i, j, k);
        out.push_back(std::move(s));
    }
    for (std::size_t j = 0; j < d.ny; j += step[1]) {
        Slice2D s{d.nx, d.nz, std::vector<float>(d.nx * d.nz)};
        for (std::size_t k = 0; k < d.nz; ++k)
            for (std::size_t i = 0; i < d.nx; ++i) s.data[k * d.nx + i] = v.at(i, j, k);
        out.push_back(std::move(s));
    }
    for (std::size_t i = 0; i < d.nx; i += step[0]) {
        Slice2D s{d.ny, d.nz, std::vector<float>(d.ny * d.nz)};
        for (std::size_t k = 0; k < d.nz; ++k)
            for (std::size_t j = 0; j < d.ny; ++j) s.data[k * d.ny + j] = v.at(i, j, k);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace neurodiff
