#include "neurodiff/augment.hpp"

#include <cmath>
#include <numbers>

#include "neurodiff/error.hpp"
#include "neurodiff/rng.hpp"

namespace neurodiff {
namespace {

Mat3 rotation_matrix(const Vec3& deg) {
    const double rad = std::numbers::pi / 180.0;
    const double cx = std::cos(deg[0] * rad), sx = std::sin(deg[0] * rad);
    const double cy = std::cos(deg[1] * rad), sy = std::sin(deg[1] * rad);
    const double cz = std::cos(deg[2] * rad), sz = std::sin(deg[2] * rad);
    const Mat3 rx{{{1, 0, 0}, {0, cx, -sx}, {0, sx, cx}}};
    const Mat3 ry{{{cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy}}};
    const Mat3 rz{{{cz, -sz, 0}, {sz, cz, 0}, {0, 0, 1}}};
    auto mul = [](const Mat3& a, const Mat3& b) {
        Mat3 c{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
        return c;
    };
    return mul(rz, mul(ry, rx));
}

}  // namespace

Volume apply_rigid(const Volume& v, const RigidTransform& transform) {
    const Vec3& sp = v.spacing();
    if (std::abs(sp[0] - sp[1]) > 1e-6 || std::abs(sp[0] - sp[2]) > 1e-6) {
        throw Error(Errc::invalid_parameter, "augmentation needs isotropic spacing");
    }
    const Dims& d = v.dims();
    const Mat3 r = rotation_matrix(transform.rotation_deg);
    const Vec3 centre{(static_cast<double>(d.nx) - 1.0) / 2.0, (static_cast<double>(d.ny) - 1.0) / 2.0,
                      (static_cast<double>(d.nz) - 1.0) / 2.0};
    const Vec3 shift{transform.translation_mm[0] / sp[0], transform.translation_mm[1] / sp[0],
                     transform.translation_mm[2] / sp[0]};

    const auto& src = v.data();
    auto sample = [&](long i, long j, long k) -> double {
        if (i < 0 || j < 0 || k < 0 || i >= static_cast<long>(d.nx) || j >= static_cast<long>(d.ny) ||
            k >= static_cast<long>(d.nz)) {
            return 0.0;
        }
        return src[d.index(static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                           static_cast<std::size_t>(k))];
    };

    Volume out(d, v.spacing(), v.direction(), v.origin(), v.dtype());
    auto& dst = out.data();
    for (std::size_t k = 0; k < d.nz; ++k) {
        for (std::size_t j = 0; j < d.ny; ++j) {
            for (std::size_t i = 0; i < d.nx; ++i) {
                const Vec3 p{static_cast<double>(i) - centre[0] - shift[0],
                             static_cast<double>(j) - centre[1] - shift[1],
                             static_cast<double>(k) - centre[2] - shift[2]};
                // Inverse map: source = R^T (p - shift) + centre.
                Vec3 q{};
                for (int a = 0; a < 3; ++a) {
                    q[a] = r[0][a] * p[0] + r[1][a] * p[1] + r[2][a] * p[2] + centre[a];
                }
                const double fx = std::floor(q[0]), fy = std::floor(q[1]), fz = std::floor(q[2]);
                const double tx = q[0] - fx, ty = q[1] - fy, tz = q[2] - fz;
                const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy),
                           z0 = static_cast<long>(fz);
                double acc = 0.0;
                for (int dz = 0; dz < 2; ++dz) {
                    const double wz = dz ? tz : 1.0 - tz;
                    if (wz == 0.0) continue;
                    for (int dy = 0; dy < 2; ++dy) {
                        const double wy = dy ? ty : 1.0 - ty;
                        if (wy == 0.0) continue;
                        for (int dx = 0; dx < 2; ++dx) {
                            const double wx = dx ? tx : 1.0 - tx;
                            if (wx == 0.0) continue;
                            acc += wx * wy * wz * sample(x0 + dx, y0 + dy, z0 + dz);
                        }
                    }
                }
                dst[d.index(i, j, k)] = static_cast<float>(acc);
            }
        }
    }
    return out;
}

RigidTransform random_rigid(std::uint64_t seed, const AugmentLimits& limits) {
    Rng rng(seed, /*stream=*/0x617567);
    RigidTransform t;
    for (double& a : t.rotation_deg) {
        a = rng.uniform(-limits.max_rotation_deg, limits.max_rotation_deg);
    }
    for (double& s : t.translation_mm) {
        s = rng.uniform(-limits.max_translation_mm, limits.max_translation_mm);
    }
    return t;
}

Volume augment(const Volume& v, std::uint64_t seed, const AugmentLimits& limits) {
    return apply_rigid(v, random_rigid(seed, limits));
}

}  // namespace neurodiff
