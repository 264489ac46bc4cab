#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "neurodiff/preprocess.hpp"

namespace neurodiff {

/// Row-major n x d feature matrix.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
    std::string extractor;

    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

inline constexpr std::string_view projection_extractor_id = "randproj-pool8-d64";
inline constexpr std::size_t pooled_grid = 8;
inline constexpr std::size_t projection_dim = 64;

/// Mean of each cell of an 8x8 partition of the slice (cell edges at
/// floor(i * size / 8)), flattened row-major.
std::vector<double> pool_slice(const Slice2D& slice);

/// Seeded 64 x 64 Gaussian projection matrix scaled by 1/8, row-major.
std::vector<double> projection_matrix(std::uint64_t seed);

/// Deterministic default extractor: pool to 8x8 then project to 64 dims.
/// `extractor` must equal projection_extractor_id.
FeatureMatrix extract_features(const std::vector<Slice2D>& slices, std::string_view extractor,
                               std::uint64_t seed);

/// Feature files: one JSON header line {d, n, extractor} then n*d
/// little-endian float64 values, row-major.
void write_feature_file(const std::filesystem::path& path, const FeatureMatrix& features);
FeatureMatrix read_feature_file(const std::filesystem::path& path);

}  // namespace neurodiff
