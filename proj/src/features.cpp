#include "neurodiff/features.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "neurodiff/error.hpp"
#include "neurodiff/model_io.hpp"
#include "neurodiff/rng.hpp"

namespace neurodiff {

std::vector<double> pool_slice(const Slice2D& slice) {
    if (slice.width < pooled_grid || slice.height < pooled_grid) {
        throw Error(Errc::size_mismatch, "slice smaller than the 8x8 pooling grid");
    }
    std::vector<double> out(pooled_grid * pooled_grid, 0.0);
    for (std::size_t cy = 0; cy < pooled_grid; ++cy) {
        const std::size_t y0 = cy * slice.height / pooled_grid;
        const std::size_t y1 = (cy + 1) * slice.height / pooled_grid;
        for (std::size_t cx = 0; cx < pooled_grid; ++cx) {
            const std::size_t x0 = cx * slice.width / pooled_grid;
            const std::size_t x1 = (cx + 1) * slice.width / pooled_grid;
            double acc = 0.0;
            for (std::size_t y = y0; y < y1; ++y)
                for (std::size_t x = x0; x < x1; ++x) acc += slice.at(x, y);
            out[cy * pooled_grid + cx] = acc / static_cast<double>((y1 - y0) * (x1 - x0));
        }
    }
    return out;
}

std::vector<double> projection_matrix(std::uint64_t seed) {
    Rng rng(seed, /*stream=*/0x70726f6a);
    const std::size_t in = pooled_grid * pooled_grid;
    std::vector<double> m(projection_dim * in);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : m) v = scale * rng.normal();
    return m;
}

FeatureMatrix extract_features(const std::vector<Slice2D>& slices, std::string_view extractor,
                               std::uint64_t seed) {
    if (extractor != projection_extractor_id) {
        throw Error(Errc::unknown_extractor, std::string(extractor));
    }
    const std::vector<double> proj = projection_matrix(seed);
    const std::size_t in = pooled_grid * pooled_grid;
    FeatureMatrix out;
    out.rows = slices.size();
    out.cols = projection_dim;
    out.extractor = std::string(extractor);
    out.values.assign(out.rows * out.cols, 0.0);
    for (std::size_t r = 0; r < slices.size(); ++r) {
        const std::vector<double> pooled = pool_slice(slices[r]);
        for (std::size_t o = 0; o < projection_dim; ++o) {
            double acc = 0.0;
            for (std::size_t i = 0; i < in; ++i) acc += proj[o * in + i] * pooled[i];
            out.values[r * out.cols + o] = acc;
        }
    }
    return out;
}

void write_feature_file(const std::filesystem::path& path, const FeatureMatrix& features) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw Error(Errc::io_error, "cannot write " + path.string());
    }
    write_header_line(os, {{"d", features.cols}, {"n", features.rows}, {"extractor", features.extractor}});
    write_f64_le(os, features.values);
}

FeatureMatrix read_feature_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw Error(Errc::io_error, "cannot open " + path.string());
    }
    const auto header = read_header_line(is);
    FeatureMatrix out;
    try {
        out.cols = header.at("d").get<std::size_t>();
        out.rows = header.at("n").get<std::size_t>();
        out.extractor = header.at("extractor").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::parse_error, e.what());
    }
    out.values = read_f64_le(is, out.rows * out.cols);
    return out;
}

}  // namespace neurodiff
