#pragma once

#include <span>
#include <vector>

#include "neurodiff/volume.hpp"

// Primitive 3D network layers with hand-written reverse passes.
namespace neurodiff::nn {

/// Channel-major activation: values[c * voxels + voxel].
struct Tensor {
    int channels = 0;
    Dims dims;
    std::vector<double> values;

    Tensor() = default;
    Tensor(int channels, Dims dims)
        : channels(channels), dims(dims), values(static_cast<std::size_t>(channels) * dims.size()) {}

    std::size_t voxels() const noexcept { return dims.size(); }
    std::span<double> channel(int c) {
        return {values.data() + static_cast<std::size_t>(c) * voxels(), voxels()};
    }
    std::span<const double> channel(int c) const {
        return {values.data() + static_cast<std::size_t>(c) * voxels(), voxels()};
    }
};

/// Same-padded convolution with cubic kernel of side 1 or 3. Weight layout
/// [out][in][kz][ky][kx]; `bias` may be empty.
void conv3d_forward(const Tensor& in, std::span<const double> weight, std::span<const double> bias,
                    int out_channels, int kernel, Tensor& out);
/// Accumulates into grad_weight / grad_bias; overwrites *grad_in when given.
void conv3d_backward(const Tensor& in, std::span<const double> weight, int out_channels, int kernel,
                     const Tensor& grad_out, Tensor* grad_in, std::span<double> grad_weight,
                     std::span<double> grad_bias);

struct GroupNormCache {
    std::vector<double> inv_std;
    Tensor normalized;
};

inline constexpr double group_norm_eps = 1e-5;

void group_norm_forward(const Tensor& in, int groups, std::span<const double> gamma,
                        std::span<const double> beta, Tensor& out, GroupNormCache& cache);
void group_norm_backward(const Tensor& grad_out, int groups, std::span<const double> gamma,
                         const GroupNormCache& cache, Tensor& grad_in,
                         std::span<double> grad_gamma, std::span<double> grad_beta);

void silu_forward(const Tensor& in, Tensor& out);
void silu_backward(const Tensor& in, const Tensor& grad_out, Tensor& grad_in);

/// 2x2x2 mean pooling; every dimension must be even.
void avg_pool2_forward(const Tensor& in, Tensor& out);
void avg_pool2_backward(const Tensor& grad_out, const Dims& in_dims, Tensor& grad_in);

/// Nearest-neighbour 2x upsampling.
void upsample2_forward(const Tensor& in, Tensor& out);
void upsample2_backward(const Tensor& grad_out, Tensor& grad_in);

void concat_channels(const Tensor& a, const Tensor& b, Tensor& out);
void split_channels(const Tensor& joined, int first_channels, Tensor& a, Tensor& b);

/// Sinusoidal features [sin(t f_k), cos(t f_k)], f_k = 10000^(-k / (dim/2)).
std::vector<double> timestep_embedding(int t, int dim);

/// out = W in + b, W laid out [out][in].
void linear_forward(std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
/// Accumulates parameter gradients; input gradient is not needed by callers.
void linear_backward(std::span<const double> in, std::span<const double> grad_out,
                     std::span<double> grad_weight, std::span<double> grad_bias);

}  // namespace neurodiff::nn
