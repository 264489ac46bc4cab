#include "neurodiff/volume.hpp"

#include <cmath>
#include <string>

#include "neurodiff/error.hpp"

namespace neurodiff {

std::string_view to_string(DType dtype) { return dtype == DType::U16 ? "u16" : "f32"; }

Volume::Volume(Dims dims, Vec3 spacing, Mat3 direction, Vec3 origin, DType dtype)
    : Volume(dims, std::vector<float>(dims.size(), 0.0f), spacing, direction, origin, dtype) {}

Volume::Volume(Dims dims, std::vector<float> data, Vec3 spacing, Mat3 direction, Vec3 origin,
               DType dtype)
    : m_dims(dims), m_data(std::move(data)), m_direction(direction), m_origin(origin),
      m_dtype(dtype) {
    if (m_data.size() != dims.size()) {
        throw Error(Errc::size_mismatch, "voxel buffer does not match grid dimensions");
    }
    set_spacing(spacing);
}

void Volume::set_spacing(const Vec3& spacing) {
    for (double s : spacing) {
        if (!(s > 0.0) || !std::isfinite(s)) {
            throw Error(Errc::degenerate_spacing, "voxel spacing must be positive");
        }
    }
    m_spacing = spacing;
}

Vec3 Volume::world(const Vec3& index) const noexcept {
    Vec3 out = m_origin;
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            out[r] += m_direction[r][c] * m_spacing[c] * index[c];
        }
    }
    return out;
}

Vec3 Volume::index_of(const Vec3& world) const noexcept {
    // Direction is orthonormal, so its inverse is the transpose.
    Vec3 d{world[0] - m_origin[0], world[1] - m_origin[1], world[2] - m_origin[2]};
    Vec3 out{};
    for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < 3; ++r) {
            acc += m_direction[r][c] * d[r];
        }
        out[c] = acc / m_spacing[c];
    }
    return out;
}

bool Volume::is_isotropic(double spacing, double tol) const noexcept {
    for (double s : m_spacing) {
        if (std::abs(s - spacing) > tol) {
            return false;
        }
    }
    return true;
}

double orthonormality_error(const Mat3& m) noexcept {
    double worst = 0.0;
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = 0; b < 3; ++b) {
            double dot = 0.0;
            for (std::size_t r = 0; r < 3; ++r) {
                dot += m[r][a] * m[r][b];
            }
            worst = std::max(worst, std::abs(dot - (a == b ? 1.0 : 0.0)));
        }
    }
    return worst;
}

void validate(const Volume& v) {
    if (v.dims().size() == 0) {
        throw Error(Errc::invalid_parameter, "volume has an empty grid");
    }
    if (orthonormality_error(v.direction()) > 1e-4) {
        throw Error(Errc::non_orthonormal, "direction cosines are not orthonormal");
    }
}

std::vector<double> to_field(const Volume& v) {
    return std::vector<double>(v.data().begin(), v.data().end());
}

Volume from_field(const std::vector<double>& field, Dims dims) {
    std::vector<float> data(field.begin(), field.end());
    return Volume(dims, std::move(data));
}

}  // namespace neurodiff
