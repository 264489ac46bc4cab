#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

namespace neurodiff {

using Vec3 = std::array<double, 3>;
/// Row-major 3x3; column j is the world direction of voxel axis j.
using Mat3 = std::array<std::array<double, 3>, 3>;

constexpr Mat3 identity3() { return {{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}}; }

/// Grid extent; x is the fastest-varying axis in memory.
struct Dims {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t nz = 0;

    constexpr std::size_t size() const noexcept { return nx * ny * nz; }
    constexpr std::size_t operator[](std::size_t axis) const noexcept {
        return axis == 0 ? nx : (axis == 1 ? ny : nz);
    }
    constexpr std::size_t index(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return i + nx * (j + ny * k);
    }
    friend constexpr bool operator==(const Dims&, const Dims&) = default;
};

enum class DType { U16, F32 };

std::string_view to_string(DType dtype);

/// 3D scalar image with voxel spacing (mm) and a world orientation.
class Volume {
public:
    Volume() = default;
    Volume(Dims dims, Vec3 spacing = {1.0, 1.0, 1.0}, Mat3 direction = identity3(),
           Vec3 origin = {0.0, 0.0, 0.0}, DType dtype = DType::F32);
    Volume(Dims dims, std::vector<float> data, Vec3 spacing = {1.0, 1.0, 1.0},
           Mat3 direction = identity3(), Vec3 origin = {0.0, 0.0, 0.0},
           DType dtype = DType::F32);

    const Dims& dims() const noexcept { return m_dims; }
    const Vec3& spacing() const noexcept { return m_spacing; }
    const Mat3& direction() const noexcept { return m_direction; }
    const Vec3& origin() const noexcept { return m_origin; }
    DType dtype() const noexcept { return m_dtype; }

    void set_spacing(const Vec3& spacing);
    void set_direction(const Mat3& direction) { m_direction = direction; }
    void set_origin(const Vec3& origin) { m_origin = origin; }
    void set_dtype(DType dtype) noexcept { m_dtype = dtype; }

    std::vector<float>& data() noexcept { return m_data; }
    const std::vector<float>& data() const noexcept { return m_data; }

    float& at(std::size_t i, std::size_t j, std::size_t k) { return m_data[m_dims.index(i, j, k)]; }
    float at(std::size_t i, std::size_t j, std::size_t k) const {
        return m_data[m_dims.index(i, j, k)];
    }

    /// World position (mm) of a continuous voxel index.
    Vec3 world(const Vec3& index) const noexcept;
    /// Continuous voxel index of a world position.
    Vec3 index_of(const Vec3& world) const noexcept;

    bool is_isotropic(double spacing, double tol = 1e-4) const noexcept;

private:
    Dims m_dims;
    std::vector<float> m_data;
    Vec3 m_spacing{1.0, 1.0, 1.0};
    Mat3 m_direction = identity3();
    Vec3 m_origin{0.0, 0.0, 0.0};
    DType m_dtype = DType::F32;
};

/// Max |D^T D - I| entry.
double orthonormality_error(const Mat3& m) noexcept;

/// Throws unless dims > 0, spacing > 0 and the direction is orthonormal to 1e-4.
void validate(const Volume& v);

std::vector<double> to_field(const Volume& v);
Volume from_field(const std::vector<double>& field, Dims dims);

}  // namespace neurodiff
