#include "neurodiff/layers.hpp"

#include <algorithm>
#include <cmath>

#include "neurodiff/error.hpp"

namespace neurodiff::nn {
namespace {

/// Calls fn(out_offset, in_offset, run) for every contiguous x-run where
/// output voxel p reads input voxel p + (dx, dy, dz) inside the grid.
template <typename Fn>
void for_each_run(const Dims& d, int dx, int dy, int dz, Fn&& fn) {
    const auto nx = static_cast<long>(d.nx);
    const auto ny = static_cast<long>(d.ny);
    const auto nz = static_cast<long>(d.nz);
    const long x0 = std::max(0L, -static_cast<long>(dx));
    const long x1 = std::min(nx, nx - dx);
    if (x1 <= x0) {
        return;
    }
    const long y0 = std::max(0L, -static_cast<long>(dy));
    const long y1 = std::min(ny, ny - dy);
    const long z0 = std::max(0L, -static_cast<long>(dz));
    const long z1 = std::min(nz, nz - dz);
    for (long z = z0; z < z1; ++z) {
        for (long y = y0; y < y1; ++y) {
            const long out_row = (z * ny + y) * nx;
            const long in_row = ((z + dz) * ny + (y + dy)) * nx;
            fn(static_cast<std::size_t>(out_row + x0), static_cast<std::size_t>(in_row + x0 + dx),
               static_cast<std::size_t>(x1 - x0));
        }
    }
}

void check_kernel(int kernel) {
    if (kernel != 1 && kernel != 3) {
        throw Error(Errc::invalid_parameter, "conv kernel must be 1 or 3");
    }
}

}  // namespace

void conv3d_forward(const Tensor& in, std::span<const double> weight, std::span<const double> bias,
                    int out_channels, int kernel, Tensor& out) {
    check_kernel(kernel);
    const int taps = kernel * kernel * kernel;
    const int half = kernel / 2;
    const std::size_t per_out = static_cast<std::size_t>(in.channels) * taps;
    if (weight.size() != per_out * static_cast<std::size_t>(out_channels)) {
        throw Error(Errc::size_mismatch, "conv weight size");
    }
    out = Tensor(out_channels, in.dims);
    for (int co = 0; co < out_channels; ++co) {
        std::span<double> dst = out.channel(co);
        if (!bias.empty()) {
            std::fill(dst.begin(), dst.end(), bias[static_cast<std::size_t>(co)]);
        }
        for (int ci = 0; ci < in.channels; ++ci) {
            std::span<const double> src = in.channel(ci);
            const double* w = weight.data() + static_cast<std::size_t>(co) * per_out +
                              static_cast<std::size_t>(ci) * taps;
            int tap = 0;
            for (int dz = -half; dz <= half; ++dz) {
                for (int dy = -half; dy <= half; ++dy) {
                    for (int dx = -half; dx <= half; ++dx, ++tap) {
                        const double wv = w[tap];
                        if (wv == 0.0) {
                            continue;
                        }
                        for_each_run(in.dims, dx, dy, dz,
                                     [&](std::size_t o, std::size_t i, std::size_t n) {
                                         double* __restrict po = dst.data() + o;
                                         const double* __restrict pi = src.data() + i;
                                         for (std::size_t k = 0; k < n; ++k) {
                                             po[k] += wv * pi[k];
                                         }
                                     });
                    }
                }
            }
        }
    }
}

void conv3d_backward(const Tensor& in, std::span<const double> weight, int out_channels, int kernel,
                     const Tensor& grad_out, Tensor* grad_in, std::span<double> grad_weight,
                     std::span<double> grad_bias) {
    check_kernel(kernel);
    const int taps = kernel * kernel * kernel;
    const int half = kernel / 2;
    const std::size_t per_out = static_cast<std::size_t>(in.channels) * taps;
    if (grad_in != nullptr) {
        *grad_in = Tensor(in.channels, in.dims);
    }
    for (int co = 0; co < out_channels; ++co) {
        std::span<const double> g = grad_out.channel(co);
        if (!grad_bias.empty()) {
            double acc = 0.0;
            for (double v : g) {
                acc += v;
            }
            grad_bias[static_cast<std::size_t>(co)] += acc;
        }
        for (int ci = 0; ci < in.channels; ++ci) {
            std::span<const double> src = in.channel(ci);
            const std::size_t base = static_cast<std::size_t>(co) * per_out +
                                     static_cast<std::size_t>(ci) * taps;
            int tap = 0;
            for (int dz = -half; dz <= half; ++dz) {
                for (int dy = -half; dy <= half; ++dy) {
                    for (int dx = -half; dx <= half; ++dx, ++tap) {
                        const double wv = weight[base + tap];
                        double acc = 0.0;
                        double* gi = grad_in != nullptr ? grad_in->channel(ci).data() : nullptr;
                        for_each_run(in.dims, dx, dy, dz,
                                     [&](std::size_t o, std::size_t i, std::size_t n) {
                                         const double* __restrict pg = g.data() + o;
                                         const double* __restrict pi = src.data() + i;
                                         double local = 0.0;
                                         for (std::size_t k = 0; k < n; ++k) {
                                             local += pg[k] * pi[k];
                                         }
                                         acc += local;
                                         if (gi != nullptr && wv != 0.0) {
                                             double* __restrict pgi = gi + i;
                                             for (std::size_t k = 0; k < n; ++k) {
                                                 pgi[k] += wv * pg[k];
                                             }
                                         }
                                     });
                        grad_weight[base + tap] += acc;
                    }
                }
            }
        }
    }
}

void group_norm_forward(const Tensor& in, int groups, std::span<const double> gamma,
                        std::span<const double> beta, Tensor& out, GroupNormCache& cache) {
    if (groups < 1 || in.channels % groups != 0) {
        throw Error(Errc::invalid_parameter, "group count must divide channel count");
    }
    const int per_group = in.channels / groups;
    const std::size_t n = in.voxels();
    const double count = static_cast<double>(per_group) * static_cast<double>(n);
    out = Tensor(in.channels, in.dims);
    cache.normalized = Tensor(in.channels, in.dims);
    cache.inv_std.assign(static_cast<std::size_t>(groups), 0.0);
    for (int g = 0; g < groups; ++g) {
        double mean = 0.0;
        for (int c = g * per_group; c < (g + 1) * per_group; ++c) {
            for (double v : in.channel(c)) {
                mean += v;
            }
        }
        mean /= count;
        double var = 0.0;
        for (int c = g * per_group; c < (g + 1) * per_group; ++c) {
            for (double v : in.channel(c)) {
                var += (v - mean) * (v - mean);
            }
        }
        var /= count;
        const double inv = 1.0 / std::sqrt(var + group_norm_eps);
        cache.inv_std[static_cast<std::size_t>(g)] = inv;
        for (int c = g * per_group; c < (g + 1) * per_group; ++c) {
            std::span<const double> src = in.channel(c);
            std::span<double> xhat = cache.normalized.channel(c);
            std::span<double> dst = out.channel(c);
            const double gm = gamma[static_cast<std::size_t>(c)];
            const double bt = beta[static_cast<std::size_t>(c)];
            for (std::size_t i = 0; i < n; ++i) {
                xhat[i] = (src[i] - mean) * inv;
                dst[i] = gm * xhat[i] + bt;
            }
        }
    }
}

void group_norm_backward(const Tensor& grad_out, int groups, std::span<const double> gamma,
                         const GroupNormCache& cache, Tensor& grad_in,
                         std::span<double> grad_gamma, std::span<double> grad_beta) {
    const int channels = grad_out.channels;
    const int per_group = channels / groups;
    const std::size_t n = grad_out.voxels();
    const double count = static_cast<double>(per_group) * static_cast<double>(n);
    grad_in = Tensor(channels, grad_out.dims);
    for (int g = 0; g < groups; ++g) {
        double sum_dxhat = 0.0;
        double sum_dxhat_xhat = 0.0;
        for (int c = g * per_group; c < (g + 1) * per_group; ++c) {
            std::span<const double> dy = grad_out.channel(c);
            std::span<const double> xhat = cache.normalized.channel(c);
            const double gm = gamma[static_cast<std::size_t>(c)];
            double dg = 0.0;
            double db = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                dg += dy[i] * xhat[i];
                db += dy[i];
            }
            grad_gamma[static_cast<std::size_t>(c)] += dg;
            grad_beta[static_cast<std::size_t>(c)] += db;
            sum_dxhat += gm * db;
            sum_dxhat_xhat += gm * dg;
        }
        const double inv = cache.inv_std[static_cast<std::size_t>(g)];
        for (int c = g * per_group; c < (g + 1) * per_group; ++c) {
            std::span<const double> dy = grad_out.channel(c);
            std::span<const double> xhat = cache.normalized.channel(c);
            std::span<double> dx = grad_in.channel(c);
            const double gm = gamma[static_cast<std::size_t>(c)];
            for (std::size_t i = 0; i < n; ++i) {
                dx[i] = inv * (gm * dy[i] - (sum_dxhat + xhat[i] * sum_dxhat_xhat) / count);
            }
        }
    }
}

void silu_forward(const Tensor& in, Tensor& out) {
    out = Tensor(in.channels, in.dims);
    for (std::size_t i = 0; i < in.values.size(); ++i) {
        const double x = in.values[i];
        out.values[i] = x / (1.0 + std::exp(-x));
    }
}

void silu_backward(const Tensor& in, const Tensor& grad_out, Tensor& grad_in) {
    grad_in = Tensor(in.channels, in.dims);
    for (std::size_t i = 0; i < in.values.size(); ++i) {
        const double x = in.values[i];
        const double s = 1.0 / (1.0 + std::exp(-x));
        grad_in.values[i] = grad_out.values[i] * (s + x * s * (1.0 - s));
    }
}

void avg_pool2_forward(const Tensor& in, Tensor& out) {
    const Dims& d = in.dims;
    if (d.nx % 2 != 0 || d.ny % 2 != 0 || d.nz % 2 != 0) {
        throw Error(Errc::indivisible_shape, "pooling needs even dimensions");
    }
    const Dims h{d.nx / 2, d.ny / 2, d.nz / 2};
    out = Tensor(in.channels, h);
    for (int c = 0; c < in.channels; ++c) {
        std::span<const double> src = in.channel(c);
        std::span<double> dst = out.channel(c);
        for (std::size_t z = 0; z < d.nz; ++z) {
            for (std::size_t y = 0; y < d.ny; ++y) {
                for (std::size_t x = 0; x < d.nx; ++x) {
                    dst[h.index(x / 2, y / 2, z / 2)] += 0.125 * src[d.index(x, y, z)];
                }
            }
        }
    }
}

void avg_pool2_backward(const Tensor& grad_out, const Dims& in_dims, Tensor& grad_in) {
    const Dims& h = grad_out.dims;
    grad_in = Tensor(grad_out.channels, in_dims);
    for (int c = 0; c < grad_out.channels; ++c) {
        std::span<const double> g = grad_out.channel(c);
        std::span<double> dst = grad_in.channel(c);
        for (std::size_t z = 0; z < in_dims.nz; ++z) {
            for (std::size_t y = 0; y < in_dims.ny; ++y) {
                for (std::size_t x = 0; x < in_dims.nx; ++x) {
                    dst[in_dims.index(x, y, z)] = 0.125 * g[h.index(x / 2, y / 2, z / 2)];
                }
            }
        }
    }
}

void upsample2_forward(const Tensor& in, Tensor& out) {
    const Dims& h = in.dims;
    const Dims d{h.nx * 2, h.ny * 2, h.nz * 2};
    out = Tensor(in.channels, d);
    for (int c = 0; c < in.channels; ++c) {
        std::span<const double> src = in.channel(c);
        std::span<double> dst = out.channel(c);
        for (std::size_t z = 0; z < d.nz; ++z) {
            for (std::size_t y = 0; y < d.ny; ++y) {
                for (std::size_t x = 0; x < d.nx; ++x) {
                    dst[d.index(x, y, z)] = src[h.index(x / 2, y / 2, z / 2)];
                }
            }
        }
    }
}

void upsample2_backward(const Tensor& grad_out, Tensor& grad_in) {
    const Dims& d = grad_out.dims;
    const Dims h{d.nx / 2, d.ny / 2, d.nz / 2};
    grad_in = Tensor(grad_out.channels, h);
    for (int c = 0; c < grad_out.channels; ++c) {
        std::span<const double> g = grad_out.channel(c);
        std::span<double> dst = grad_in.channel(c);
        for (std::size_t z = 0; z < d.nz; ++z) {
            for (std::size_t y = 0; y < d.ny; ++y) {
                for (std::size_t x = 0; x < d.nx; ++x) {
                    dst[h.index(x / 2, y / 2, z / 2)] += g[d.index(x, y, z)];
                }
            }
        }
    }
}

void concat_channels(const Tensor& a, const Tensor& b, Tensor& out) {
    if (!(a.dims == b.dims)) {
        throw Error(Errc::shape_mismatch, "concat of differently sized tensors");
    }
    out = Tensor(a.channels + b.channels, a.dims);
    std::copy(a.values.begin(), a.values.end(), out.values.begin());
    std::copy(b.values.begin(), b.values.end(),
              out.values.begin() + static_cast<std::ptrdiff_t>(a.values.size()));
}

void split_channels(const Tensor& joined, int first_channels, Tensor& a, Tensor& b) {
    a = Tensor(first_channels, joined.dims);
    b = Tensor(joined.channels - first_channels, joined.dims);
    const auto cut = static_cast<std::ptrdiff_t>(a.values.size());
    std::copy(joined.values.begin(), joined.values.begin() + cut, a.values.begin());
    std::copy(joined.values.begin() + cut, joined.values.end(), b.values.begin());
}

std::vector<double> timestep_embedding(int t, int dim) {
    std::vector<double> out(static_cast<std::size_t>(dim), 0.0);
    const int half = dim / 2;
    for (int k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / half);
        const double arg = static_cast<double>(t) * freq;
        out[static_cast<std::size_t>(k)] = std::sin(arg);
        out[static_cast<std::size_t>(k + half)] = std::cos(arg);
    }
    return out;
}

void linear_forward(std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
    const std::size_t n_in = in.size();
    for (std::size_t o = 0; o < out.size(); ++o) {
        double acc = bias.empty() ? 0.0 : bias[o];
        for (std::size_t i = 0; i < n_in; ++i) {
            acc += weight[o * n_in + i] * in[i];
        }
        out[o] = acc;
    }
}

void linear_backward(std::span<const double> in, std::span<const double> grad_out,
                     std::span<double> grad_weight, std::span<double> grad_bias) {
    const std::size_t n_in = in.size();
    for (std::size_t o = 0; o < grad_out.size(); ++o) {
        for (std::size_t i = 0; i < n_in; ++i) {
            grad_weight[o * n_in + i] += grad_out[o] * in[i];
        }
        if (!grad_bias.empty()) {
            grad_bias[o] += grad_out[o];
        }
    }
}

}  // namespace neurodiff::nn
