#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "neurodiff/denoiser.hpp"
#include "neurodiff/layers.hpp"

namespace neurodiff {

struct UNetConfig {
    /// Channel width per resolution level, finest first.
    std::vector<int> widths{8, 16};
    /// Conv + GroupNorm + SiLU blocks per level on each path.
    int blocks_per_level = 1;
    int time_dim = 16;
    int max_groups = 4;
};

/// One contiguous slice of the flat parameter vector.
struct ParamSlot {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
};

/// Small time-conditioned 3D encoder/decoder with skip connections. All
/// weights live in one flat vector in declaration order.
class TinyUNet final : public Denoiser {
public:
    TinyUNet(UNetConfig config, PredictionKind kind);

    PredictionKind kind() const override { return m_kind; }
    Field predict(std::span<const double> xt, const Dims& shape, int t) const override {
        return forward(xt, shape, t);
    }

    const UNetConfig& config() const noexcept { return m_config; }
    std::size_t parameter_count() const noexcept { return m_params.size(); }
    const std::vector<ParamSlot>& layout() const noexcept { return m_layout; }

    std::span<double> parameters() noexcept { return m_params; }
    std::span<const double> parameters() const noexcept { return m_params; }
    void set_parameters(std::span<const double> values);

    /// Seeded fan-in scaled Gaussian init; norm gains 1, biases 0.
    void initialize(std::uint64_t seed);

    Field forward(std::span<const double> xt, const Dims& shape, int t) const;

    /// Gradient of <upstream, forward(xt, t)> with respect to every parameter.
    Field backward(std::span<const double> xt, const Dims& shape, int t,
                   std::span<const double> upstream) const;

    /// Forward pass plus parameter gradient of <upstream_fn(output), output>
    /// where the caller supplies d(loss)/d(output) from the output.
    template <typename UpstreamFn>
    Field forward_backward(std::span<const double> xt, const Dims& shape, int t,
                           UpstreamFn&& upstream_fn, std::span<double> grad) const;

    /// Number of parameters implied by a config.
    static std::size_t count_parameters(const UNetConfig& config);

    struct Cache;

private:
    struct Block {
        std::size_t conv_w, conv_b, gamma, beta;
        int in_channels, out_channels, groups;
    };
    struct TimeProj {
        std::size_t weight, bias;
        int out_channels;
    };

    void check_shape(const Dims& shape, std::size_t n) const;
    Field run_forward(std::span<const double> xt, const Dims& shape, int t, Cache& cache) const;
    void run_backward(const Cache& cache, std::span<const double> upstream,
                      std::span<double> grad) const;

    std::span<const double> slot(std::size_t offset, std::size_t size) const {
        return {m_params.data() + offset, size};
    }

    UNetConfig m_config;
    PredictionKind m_kind;
    std::vector<double> m_params;
    std::vector<ParamSlot> m_layout;
    std::vector<std::vector<Block>> m_encoder;
    std::vector<std::vector<Block>> m_decoder;  // indexed by level, last level empty
    std::vector<TimeProj> m_enc_time;
    std::vector<TimeProj> m_dec_time;
    std::size_t m_head = 0;
};

struct TinyUNet::Cache {
    struct BlockCache {
        nn::Tensor input;
        nn::Tensor conv_out;
        nn::GroupNormCache norm;
        nn::Tensor norm_out;
    };
    std::vector<double> embedding;
    std::vector<std::vector<BlockCache>> encoder;
    std::vector<std::vector<BlockCache>> decoder;
    std::vector<nn::Tensor> skips;
    std::vector<Dims> level_dims;
    nn::Tensor head_input;
};

template <typename UpstreamFn>
Field TinyUNet::forward_backward(std::span<const double> xt, const Dims& shape, int t,
                                 UpstreamFn&& upstream_fn, std::span<double> grad) const {
    Cache cache;
    Field out = run_forward(xt, shape, t, cache);
    const Field upstream = upstream_fn(std::span<const double>(out));
    run_backward(cache, upstream, grad);
    return out;
}

}  // namespace neurodiff
