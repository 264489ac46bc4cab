#include "neurodiff/model_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "neurodiff/error.hpp"

namespace neurodiff {
namespace {

template <typename UInt>
void put_le(std::ostream& os, UInt bits) {
    char bytes[sizeof(UInt)];
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
    }
    os.write(bytes, sizeof(UInt));
}

template <typename UInt>
UInt get_le(const unsigned char* bytes) {
    UInt bits = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        bits |= static_cast<UInt>(bytes[i]) << (8 * i);
    }
    return bits;
}

nlohmann::json dims_json(const Dims& d) { return nlohmann::json::array({d.nx, d.ny, d.nz}); }

Dims dims_from(const nlohmann::json& j) {
    return Dims{j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>(), j.at(2).get<std::size_t>()};
}

}  // namespace

void write_header_line(std::ostream& os, const nlohmann::json& header) {
    os << header.dump() << '\n';
}

nlohmann::json read_header_line(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) {
        throw Error(Errc::truncated_file, "missing header line");
    }
    try {
        return nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::parse_error, e.what());
    }
}

void write_f32_le(std::ostream& os, std::span<const double> values) {
    for (double v : values) {
        put_le(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
}

void write_f64_le(std::ostream& os, std::span<const double> values) {
    for (double v : values) {
        put_le(os, std::bit_cast<std::uint64_t>(v));
    }
}

std::vector<double> read_f32_le(std::istream& is, std::size_t count) {
    std::vector<unsigned char> raw(count * 4);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(is.gcount()) != raw.size()) {
        throw Error(Errc::truncated_file, "float32 blob shorter than header promises");
    }
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = std::bit_cast<float>(get_le<std::uint32_t>(raw.data() + 4 * i));
    }
    return out;
}

std::vector<double> read_f64_le(std::istream& is, std::size_t count) {
    std::vector<unsigned char> raw(count * 8);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(is.gcount()) != raw.size()) {
        throw Error(Errc::truncated_file, "float64 blob shorter than header promises");
    }
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = std::bit_cast<double>(get_le<std::uint64_t>(raw.data() + 8 * i));
    }
    return out;
}

void save_unet_weights(const std::filesystem::path& path, const TinyUNet& net,
                       const WeightsHeader& header, std::span<const double> params) {
    if (params.size() != net.parameter_count()) {
        throw Error(Errc::dimension_mismatch, "parameter vector does not match model");
    }
    nlohmann::json j;
    j["format"] = "neurodiff-weights";
    j["model"] = "unet";
    j["kind"] = std::string(to_string(header.kind));
    j["widths"] = header.unet.widths;
    j["blocks_per_level"] = header.unet.blocks_per_level;
    j["time_dim"] = header.unet.time_dim;
    j["max_groups"] = header.unet.max_groups;
    j["schedule"] = header.schedule;
    j["epoch"] = header.epoch;
    j["ema_momentum"] = header.ema_momentum;
    j["shape"] = dims_json(header.shape);
    j["intensity"] = {{"offset", header.intensity_offset}, {"scale", header.intensity_scale}};
    j["count"] = params.size();
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw Error(Errc::io_error, "cannot write " + path.string());
    }
    write_header_line(os, j);
    write_f32_le(os, params);
}

void save_oracle_stub(const std::filesystem::path& path, PredictionKind kind, double mean,
                      double variance, const NoiseSchedule& schedule, Dims shape) {
    nlohmann::json j;
    j["format"] = "neurodiff-weights";
    j["model"] = "gaussian_oracle";
    j["kind"] = std::string(to_string(kind));
    j["mean"] = mean;
    j["variance"] = variance;
    j["schedule"] = schedule;
    j["shape"] = dims_json(shape);
    j["count"] = 0;
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw Error(Errc::io_error, "cannot write " + path.string());
    }
    write_header_line(os, j);
}

LoadedModel load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw Error(Errc::unreadable_weights, "cannot open " + path.string());
    }
    try {
        LoadedModel out;
        out.header = read_header_line(is);
        const auto& h = out.header;
        if (h.value("format", "") != "neurodiff-weights") {
            throw Error(Errc::bad_magic, "not a weights file");
        }
        const PredictionKind kind = parse_prediction_kind(h.at("kind").get<std::string>());
        out.schedule = h.at("schedule").get<NoiseSchedule>();
        out.shape = dims_from(h.at("shape"));
        if (h.contains("intensity")) {
            out.intensity_offset = h["intensity"].at("offset").get<double>();
            out.intensity_scale = h["intensity"].at("scale").get<double>();
            if (!(out.intensity_scale > 0.0)) {
                throw Error(Errc::invalid_parameter, "intensity scale must be positive");
            }
        }
        const std::string model = h.at("model").get<std::string>();
        if (model == "gaussian_oracle") {
            out.denoiser = std::make_unique<GaussianOracle>(kind, h.at("mean").get<double>(),
                                                            h.at("variance").get<double>(),
                                                            out.schedule);
        } else if (model == "unet") {
            UNetConfig cfg;
            cfg.widths = h.at("widths").get<std::vector<int>>();
            cfg.blocks_per_level = h.at("blocks_per_level").get<int>();
            cfg.time_dim = h.at("time_dim").get<int>();
            cfg.max_groups = h.at("max_groups").get<int>();
            auto net = std::make_unique<TinyUNet>(cfg, kind);
            const auto count = h.at("count").get<std::size_t>();
            if (count != net->parameter_count()) {
                throw Error(Errc::dimension_mismatch, "header parameter count disagrees with widths");
            }
            net->set_parameters(read_f32_le(is, count));
            out.denoiser = std::move(net);
        } else {
            throw Error(Errc::parse_error, "unknown model type '" + model + "'");
        }
        return out;
    } catch (const Error& e) {
        throw Error(Errc::unreadable_weights, path.string() + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::unreadable_weights, path.string() + ": " + e.what());
    }
}

}  // namespace neurodiff
