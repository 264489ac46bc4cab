#pragma once

#include <optional>
#include <vector>

#include "neurodiff/volume.hpp"

namespace neurodiff {

inline constexpr Dims standard_shape{192, 224, 192};

/// Permutes and flips voxel axes so the direction matrix becomes the signed
/// permutation closest to identity (RAS). Voxel values are moved, never
/// interpolated.
Volume reorient_axial(const Volume& v);

/// Separable Catmull-Rom resampling onto an isotropic grid with the same
/// origin, edge samples clamped, output clipped to the input range.
Volume resample_isotropic(const Volume& v, double target_mm = 1.0);

/// Catmull-Rom tap weights for the four samples around fractional offset t.
std::array<double, 4> catmull_rom_weights(double t);

Volume clip_to_range(const Volume& v, double lo, double hi);

/// Intensity-weighted centroid in world millimetres.
Vec3 center_of_mass(const Volume& mask);

/// Integer-voxel pad/crop so the output grid of `shape` is centred on the
/// world point `center_mm`; outside voxels are zero.
Volume pad_crop(const Volume& v, const Vec3& center_mm, Dims shape = standard_shape);

/// round(65535 (x - min) / (max - min)) into a u16-tagged volume.
Volume normalize_quantize(const Volume& v);

/// Otsu threshold over a 256-bin histogram.
double otsu_threshold(const Volume& v);

/// Foreground by Otsu threshold, reduced to its largest 6-connected component.
Volume fallback_brain_mask(const Volume& v);

struct PreprocessOptions {
    double target_mm = 1.0;
    Dims shape = standard_shape;
};

/// reorient -> resample -> clip -> pad/crop about the mask centroid -> quantize.
/// Without a mask the Otsu fallback supplies one.
Volume preprocess_volume(const Volume& image, const std::optional<Volume>& mask,
                         const PreprocessOptions& options = {});

struct Slice2D {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<float> data;  // row-major, width fastest

    float at(std::size_t x, std::size_t y) const { return data[y * width + x]; }
};

/// Every `spacing_mm` along each axis: axial planes first, then coronal,
/// then sagittal, ascending index within each.
std::vector<Slice2D> extract_slices(const Volume& v, double spacing_mm = 4.0);

}  // namespace neurodiff
