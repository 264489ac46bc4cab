#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "neurodiff/denoiser.hpp"
#include "neurodiff/schedule.hpp"
#include "neurodiff/unet.hpp"

namespace neurodiff {

// Weight files are one line of JSON (the header) terminated by '\n',
// followed by the parameters as little-endian IEEE-754 float32 in
// declaration order. Gaussian-oracle stubs carry an empty blob.

struct WeightsHeader {
    PredictionKind kind = PredictionKind::Sample;
    UNetConfig unet;
    NoiseSchedule schedule;
    int epoch = 0;
    double ema_momentum = 0.1;
    Dims shape{16, 16, 16};
    /// Model space is (stored - offset) / scale.
    double intensity_offset = 0.0;
    double intensity_scale = 1.0;
};

void save_unet_weights(const std::filesystem::path& path, const TinyUNet& net,
                       const WeightsHeader& header, std::span<const double> params);

/// Oracle stub for data N(mean, variance) at every voxel.
void save_oracle_stub(const std::filesystem::path& path, PredictionKind kind, double mean,
                      double variance, const NoiseSchedule& schedule, Dims shape);

struct LoadedModel {
    std::unique_ptr<Denoiser> denoiser;
    NoiseSchedule schedule;
    Dims shape;
    double intensity_offset = 0.0;
    double intensity_scale = 1.0;
    nlohmann::json header;
};

/// Throws unreadable-weights on any I/O or format problem.
LoadedModel load_model(const std::filesystem::path& path);

/// Shared helpers for "JSON line + binary blob" files.
void write_header_line(std::ostream& os, const nlohmann::json& header);
nlohmann::json read_header_line(std::istream& is);
void write_f32_le(std::ostream& os, std::span<const double> values);
void write_f64_le(std::ostream& os, std::span<const double> values);
std::vector<double> read_f32_le(std::istream& is, std::size_t count);
std::vector<double> read_f64_le(std::istream& is, std::size_t count);

}  // namespace neurodiff
