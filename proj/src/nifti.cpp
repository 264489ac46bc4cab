#include "neurodiff/nifti.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "neurodiff/error.hpp"

namespace neurodiff {
namespace {

constexpr std::size_t header_size = 348;
constexpr std::size_t data_offset = 352;

constexpr std::int16_t dt_int16 = 4;
constexpr std::int16_t dt_float32 = 16;
constexpr std::int16_t dt_uint16 = 512;

class HeaderReader {
public:
    HeaderReader(const unsigned char* bytes, bool swap) : m_bytes(bytes), m_swap(swap) {}

    template <typename T>
    T get(std::size_t offset) const {
        unsigned char tmp[sizeof(T)];
        std::memcpy(tmp, m_bytes + offset, sizeof(T));
        if (m_swap) {
            for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(tmp[i], tmp[sizeof(T) - 1 - i]);
        }
        T out;
        std::memcpy(&out, tmp, sizeof(T));
        return out;
    }

private:
    const unsigned char* m_bytes;
    bool m_swap;
};

template <typename T>
void put(std::vector<unsigned char>& buf, std::size_t offset, T value) {
    static_assert(std::endian::native == std::endian::little, "writer assumes a little-endian host");
    std::memcpy(buf.data() + offset, &value, sizeof(T));
}

Mat3 quaternion_to_rotation(double b, double c, double d) {
    double a = 1.0 - (b * b + c * c + d * d);
    if (a < 1e-7) {
        const double n = 1.0 / std::sqrt(b * b + c * c + d * d);
        b *= n; c *= n; d *= n;
        a = 0.0;
    } else {
        a = std::sqrt(a);
    }
    return {{{a * a + b * b - c * c - d * d, 2 * b * c - 2 * a * d, 2 * b * d + 2 * a * c},
             {2 * b * c + 2 * a * d, a * a + c * c - b * b - d * d, 2 * c * d - 2 * a * b},
             {2 * b * d - 2 * a * c, 2 * c * d + 2 * a * b, a * a + d * d - c * c - b * b}}};
}

double determinant(const Mat3& m) {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

/// Quaternion (b, c, d) and qfac of an orthonormal direction matrix.
std::array<double, 4> rotation_to_quaternion(Mat3 r) {
    double qfac = 1.0;
    if (determinant(r) < 0.0) {
        qfac = -1.0;
        for (auto& row : r) row[2] = -row[2];
    }
    const double trace = r[0][0] + r[1][1] + r[2][2] + 1.0;
    double a, b, c, d;
    if (trace > 0.5) {
        a = 0.5 * std::sqrt(trace);
        b = 0.25 * (r[2][1] - r[1][2]) / a;
        c = 0.25 * (r[0][2] - r[2][0]) / a;
        d = 0.25 * (r[1][0] - r[0][1]) / a;
    } else {
        const double xd = 1.0 + r[0][0] - (r[1][1] + r[2][2]);
        const double yd = 1.0 + r[1][1] - (r[0][0] + r[2][2]);
        const double zd = 1.0 + r[2][2] - (r[0][0] + r[1][1]);
        if (xd > 1.0) {
            b = 0.5 * std::sqrt(xd);
            c = 0.25 * (r[0][1] + r[1][0]) / b;
            d = 0.25 * (r[0][2] + r[2][0]) / b;
            a = 0.25 * (r[2][1] - r[1][2]) / b;
        } else if (yd > 1.0) {
            c = 0.5 * std::sqrt(yd);
            b = 0.25 * (r[0][1] + r[1][0]) / c;
            d = 0.25 * (r[1][2] + r[2][1]) / c;
            a = 0.25 * (r[0][2] - r[2][0]) / c;
        } else {
            d = 0.5 * std::sqrt(zd);
            b = 0.25 * (r[0][2] + r[2][0]) / d;
            c = 0.25 * (r[1][2] + r[2][1]) / d;
            a = 0.25 * (r[1][0] - r[0][1]) / d;
        }
        if (a < 0.0) {
            b = -b; c = -c; d = -d;
        }
    }
    return {b, c, d, qfac};
}

}  // namespace

Volume read_nifti(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw Error(Errc::io_error, "cannot open " + path.string());
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < header_size) {
        throw Error(Errc::truncated_file, path.string() + " is shorter than a NIfTI-1 header");
    }
    if (std::memcmp(bytes.data() + 344, "n+1\0", 4) != 0) {
        throw Error(Errc::bad_magic, path.string() + " lacks the n+1 magic");
    }
    std::int32_t sizeof_hdr;
    std::memcpy(&sizeof_hdr, bytes.data(), 4);
    bool swap = false;
    if (sizeof_hdr != 348) {
        swap = true;
        const auto u = static_cast<std::uint32_t>(sizeof_hdr);
        const std::uint32_t swapped = (u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24);
        if (swapped != 348u) {
            throw Error(Errc::bad_magic, path.string() + " has sizeof_hdr != 348");
        }
    }
    const HeaderReader h(bytes.data(), swap);

    const auto ndim = h.get<std::int16_t>(40);
    if (ndim < 1 || ndim > 7) {
        throw Error(Errc::unsupported_datatype, "dim[0] out of range");
    }
    std::array<std::size_t, 3> n{1, 1, 1};
    for (int a = 0; a < 3 && a < ndim; ++a) {
        const auto d = h.get<std::int16_t>(42 + 2 * a);
        if (d < 1) {
            throw Error(Errc::unsupported_datatype, "non-positive dimension");
        }
        n[static_cast<std::size_t>(a)] = static_cast<std::size_t>(d);
    }
    for (int a = 3; a < ndim; ++a) {
        if (h.get<std::int16_t>(42 + 2 * a) > 1) {
            throw Error(Errc::unsupported_datatype, "only single 3D volumes are supported");
        }
    }
    const auto datatype = h.get<std::int16_t>(70);
    std::size_t bytes_per_voxel = 0;
    switch (datatype) {
        case dt_int16:
        case dt_uint16: bytes_per_voxel = 2; break;
        case dt_float32: bytes_per_voxel = 4; break;
        default:
            throw Error(Errc::unsupported_datatype, "NIfTI datatype " + std::to_string(datatype));
    }

    std::array<double, 8> pixdim{};
    for (std::size_t i = 0; i < 8; ++i) {
        pixdim[i] = h.get<float>(76 + 4 * i);
    }
    const auto vox_offset = static_cast<std::size_t>(h.get<float>(108));
    const double slope = h.get<float>(112);
    const double inter = h.get<float>(116);
    const auto qform_code = h.get<std::int16_t>(252);
    const auto sform_code = h.get<std::int16_t>(254);

    const Dims dims{n[0], n[1], n[2]};
    const std::size_t count = dims.size();
    if (bytes.size() < vox_offset + count * bytes_per_voxel) {
        throw Error(Errc::truncated_file, path.string() + " voxel data is truncated");
    }

    // Affine columns give spacing (norm) and direction (unit vector).
    std::array<std::array<double, 4>, 3> affine{};
    if (sform_code > 0) {
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 4; ++c) affine[r][c] = h.get<float>(280 + 16 * r + 4 * c);
    } else if (qform_code > 0) {
        const Mat3 rot = quaternion_to_rotation(h.get<float>(256), h.get<float>(260), h.get<float>(264));
        const double qfac = pixdim[0] < 0.0 ? -1.0 : 1.0;
        for (std::size_t r = 0; r < 3; ++r) {
            for (std::size_t c = 0; c < 3; ++c) {
                affine[r][c] = rot[r][c] * std::abs(pixdim[c + 1]) * (c == 2 ? qfac : 1.0);
            }
            affine[r][3] = h.get<float>(268 + 4 * r);
        }
    } else {
        for (std::size_t c = 0; c < 3; ++c) affine[c][c] = std::abs(pixdim[c + 1]) > 0 ? std::abs(pixdim[c + 1]) : 1.0;
    }
    Vec3 spacing{};
    Mat3 direction{};
    Vec3 origin{affine[0][3], affine[1][3], affine[2][3]};
    for (std::size_t c = 0; c < 3; ++c) {
        const double norm = std::sqrt(affine[0][c] * affine[0][c] + affine[1][c] * affine[1][c] +
                                      affine[2][c] * affine[2][c]);
        if (!(norm > 0.0)) {
            throw Error(Errc::degenerate_spacing, "zero-length affine column");
        }
        spacing[c] = norm;
        for (std::size_t r = 0; r < 3; ++r) direction[r][c] = affine[r][c] / norm;
    }

    const bool scaled = slope != 0.0 && std::isfinite(slope) && (slope != 1.0 || inter != 0.0);
    std::vector<float> data(count);
    const unsigned char* raw = bytes.data() + vox_offset;
    const HeaderReader voxels(raw, swap);
    for (std::size_t i = 0; i < count; ++i) {
        double v = 0.0;
        switch (datatype) {
            case dt_int16: v = voxels.get<std::int16_t>(2 * i); break;
            case dt_uint16: v = voxels.get<std::uint16_t>(2 * i); break;
            default: v = voxels.get<float>(4 * i); break;
        }
        data[i] = scaled ? static_cast<float>(slope * v + inter) : static_cast<float>(v);
    }
    const DType dtype = (datatype == dt_uint16 && !scaled) ? DType::U16 : DType::F32;
    return Volume(dims, std::move(data), spacing, direction, origin, dtype);
}

void write_nifti(const Volume& v, const std::filesystem::path& path) {
    const Dims& d = v.dims();
    const bool u16 = v.dtype() == DType::U16;
    const std::size_t bpv = u16 ? 2 : 4;
    std::vector<unsigned char> buf(data_offset + d.size() * bpv, 0);

    put<std::int32_t>(buf, 0, 348);
    put<char>(buf, 38, 'r');
    put<std::int16_t>(buf, 40, 3);
    put<std::int16_t>(buf, 42, static_cast<std::int16_t>(d.nx));
    put<std::int16_t>(buf, 44, static_cast<std::int16_t>(d.ny));
    put<std::int16_t>(buf, 46, static_cast<std::int16_t>(d.nz));
    for (std::size_t a = 3; a < 7; ++a) put<std::int16_t>(buf, 42 + 2 * a, 1);
    put<std::int16_t>(buf, 70, u16 ? dt_uint16 : dt_float32);
    put<std::int16_t>(buf, 72, static_cast<std::int16_t>(bpv * 8));

    const auto quat = rotation_to_quaternion(v.direction());
    put<float>(buf, 76, static_cast<float>(quat[3]));
    for (std::size_t a = 0; a < 3; ++a) put<float>(buf, 80 + 4 * a, static_cast<float>(v.spacing()[a]));
    for (std::size_t a = 3; a < 7; ++a) put<float>(buf, 80 + 4 * a, 1.0f);
    put<float>(buf, 108, static_cast<float>(data_offset));
    put<float>(buf, 112, 1.0f);
    put<float>(buf, 116, 0.0f);
    put<char>(buf, 123, 2);  // NIFTI_UNITS_MM
    std::memcpy(buf.data() + 148, "neurodiff", 9);
    put<std::int16_t>(buf, 252, 1);
    put<std::int16_t>(buf, 254, 1);
    put<float>(buf, 256, static_cast<float>(quat[0]));
    put<float>(buf, 260, static_cast<float>(quat[1]));
    put<float>(buf, 264, static_cast<float>(quat[2]));
    for (std::size_t r = 0; r < 3; ++r) put<float>(buf, 268 + 4 * r, static_cast<float>(v.origin()[r]));
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            put<float>(buf, 280 + 16 * r + 4 * c,
                       static_cast<float>(v.direction()[r][c] * v.spacing()[c]));
        }
        put<float>(buf, 280 + 16 * r + 12, static_cast<float>(v.origin()[r]));
    }
    std::memcpy(buf.data() + 344, "n+1\0", 4);

    unsigned char* out = buf.data() + data_offset;
    const auto& data = v.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (u16) {
            const double clamped = std::min(65535.0, std::max(0.0, std::round(static_cast<double>(data[i]))));
            const auto value = static_cast<std::uint16_t>(clamped);
            std::memcpy(out + 2 * i, &value, 2);
        } else {
            std::memcpy(out + 4 * i, &data[i], 4);
        }
    }

    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw Error(Errc::io_error, "cannot write " + path.string());
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!os) {
        throw Error(Errc::io_error, "short write to " + path.string());
    }
}

}  // namespace neurodiff
