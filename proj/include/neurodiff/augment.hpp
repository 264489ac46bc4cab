#pragma once

#include <cstdint>

#include "neurodiff/volume.hpp"

namespace neurodiff {

struct RigidTransform {
    Vec3 rotation_deg{0.0, 0.0, 0.0};   // about x, y, z; composed Rz * Ry * Rx
    Vec3 translation_mm{0.0, 0.0, 0.0};
};

struct AugmentLimits {
    double max_rotation_deg = 10.0;
    double max_translation_mm = 5.0;
};

/// Resamples `v` under a rigid transform about the grid centre with trilinear
/// interpolation; samples outside the field read as zero.
Volume apply_rigid(const Volume& v, const RigidTransform& transform);

/// Per-axis angles and shifts drawn uniformly within the limits.
RigidTransform random_rigid(std::uint64_t seed, const AugmentLimits& limits = {});

Volume augment(const Volume& v, std::uint64_t seed, const AugmentLimits& limits = {});

}  // namespace neurodiff
