#include "neurodiff/unet.hpp"

#include <cmath>
#include <string>

#include "neurodiff/error.hpp"
#include "neurodiff/rng.hpp"

namespace neurodiff {
namespace {

int pick_groups(int channels, int max_groups) {
    for (int g = std::min(max_groups, channels); g > 1; --g) {
        if (channels % g == 0) {
            return g;
        }
    }
    return 1;
}

void add_time(nn::Tensor& h, std::span<const double> proj) {
    for (int c = 0; c < h.channels; ++c) {
        const double v = proj[static_cast<std::size_t>(c)];
        for (double& x : h.channel(c)) {
            x += v;
        }
    }
}

}  // namespace

TinyUNet::TinyUNet(UNetConfig config, PredictionKind kind)
    : m_config(std::move(config)), m_kind(kind) {
    if (m_config.widths.empty() || m_config.blocks_per_level < 1 || m_config.time_dim < 2 ||
        m_config.time_dim % 2 != 0 || m_config.max_groups < 1) {
        throw Error(Errc::invalid_parameter, "invalid U-Net configuration");
    }
    for (int w : m_config.widths) {
        if (w < 1) {
            throw Error(Errc::invalid_parameter, "U-Net widths must be positive");
        }
    }

    std::size_t cursor = 0;
    auto reserve = [&](const std::string& name, std::size_t size) {
        m_layout.push_back({name, cursor, size});
        cursor += size;
        return m_layout.back().offset;
    };
    auto make_block = [&](const std::string& name, int cin, int cout) {
        Block b{};
        b.in_channels = cin;
        b.out_channels = cout;
        b.groups = pick_groups(cout, m_config.max_groups);
        b.conv_w = reserve(name + ".conv.weight", static_cast<std::size_t>(cout) * cin * 27);
        b.conv_b = reserve(name + ".conv.bias", static_cast<std::size_t>(cout));
        b.gamma = reserve(name + ".norm.weight", static_cast<std::size_t>(cout));
        b.beta = reserve(name + ".norm.bias", static_cast<std::size_t>(cout));
        return b;
    };
    auto make_time = [&](const std::string& name, int cout) {
        TimeProj p{};
        p.out_channels = cout;
        p.weight = reserve(name + ".weight",
                           static_cast<std::size_t>(cout) * static_cast<std::size_t>(m_config.time_dim));
        p.bias = reserve(name + ".bias", static_cast<std::size_t>(cout));
        return p;
    };

    const auto& widths = m_config.widths;
    const std::size_t levels = widths.size();
    m_encoder.resize(levels);
    m_decoder.resize(levels);
    for (std::size_t l = 0; l < levels; ++l) {
        int cin = l == 0 ? 1 : widths[l - 1];
        for (int b = 0; b < m_config.blocks_per_level; ++b) {
            m_encoder[l].push_back(make_block(
                "down" + std::to_string(l) + ".block" + std::to_string(b), cin, widths[l]));
            cin = widths[l];
        }
        m_enc_time.push_back(make_time("down" + std::to_string(l) + ".time", widths[l]));
    }
    m_dec_time.resize(levels);
    for (std::size_t l = levels - 1; l-- > 0;) {
        int cin = widths[l + 1] + widths[l];
        for (int b = 0; b < m_config.blocks_per_level; ++b) {
            m_decoder[l].push_back(make_block(
                "up" + std::to_string(l) + ".block" + std::to_string(b), cin, widths[l]));
            cin = widths[l];
        }
        m_dec_time[l] = make_time("up" + std::to_string(l) + ".time", widths[l]);
    }
    m_head = reserve("head.weight", static_cast<std::size_t>(widths[0]));
    m_params.assign(cursor, 0.0);
}

std::size_t TinyUNet::count_parameters(const UNetConfig& config) {
    return TinyUNet(config, PredictionKind::Sample).parameter_count();
}

void TinyUNet::set_parameters(std::span<const double> values) {
    if (values.size() != m_params.size()) {
        throw Error(Errc::dimension_mismatch, "parameter vector has " + std::to_string(values.size()) +
                                                  " entries, model needs " +
                                                  std::to_string(m_params.size()));
    }
    m_params.assign(values.begin(), values.end());
}

void TinyUNet::initialize(std::uint64_t seed) {
    Rng rng(seed, /*stream=*/0x756e6574);
    std::fill(m_params.begin(), m_params.end(), 0.0);
    auto fill = [&](std::size_t offset, std::size_t size, double scale) {
        for (std::size_t i = 0; i < size; ++i) {
            m_params[offset + i] = scale * rng.normal();
        }
    };
    auto init_block = [&](const Block& b) {
        fill(b.conv_w, static_cast<std::size_t>(b.out_channels) * b.in_channels * 27,
             std::sqrt(2.0 / (27.0 * b.in_channels)));
        for (int c = 0; c < b.out_channels; ++c) {
            m_params[b.gamma + static_cast<std::size_t>(c)] = 1.0;
        }
    };
    auto init_time = [&](const TimeProj& p) {
        fill(p.weight, static_cast<std::size_t>(p.out_channels) * m_config.time_dim,
             1.0 / std::sqrt(static_cast<double>(m_config.time_dim)));
    };
    for (std::size_t l = 0; l < m_encoder.size(); ++l) {
        for (const Block& b : m_encoder[l]) init_block(b);
        init_time(m_enc_time[l]);
        for (const Block& b : m_decoder[l]) init_block(b);
        if (!m_decoder[l].empty()) init_time(m_dec_time[l]);
    }
    fill(m_head, static_cast<std::size_t>(m_config.widths[0]),
         1.0 / std::sqrt(static_cast<double>(m_config.widths[0])));
}

void TinyUNet::check_shape(const Dims& shape, std::size_t n) const {
    if (shape.size() != n || n == 0) {
        throw Error(Errc::shape_mismatch, "field size does not match shape");
    }
    const std::size_t factor = std::size_t{1} << (m_config.widths.size() - 1);
    for (std::size_t a = 0; a < 3; ++a) {
        if (shape[a] % factor != 0) {
            throw Error(Errc::indivisible_shape,
                        "spatial dims must be divisible by " + std::to_string(factor));
        }
    }
}

Field TinyUNet::run_forward(std::span<const double> xt, const Dims& shape, int t,
                            Cache& cache) const {
    check_shape(shape, xt.size());
    const std::size_t levels = m_config.widths.size();
    const std::size_t tdim = static_cast<std::size_t>(m_config.time_dim);
    cache.embedding = nn::timestep_embedding(t, m_config.time_dim);
    cache.encoder.assign(levels, {});
    cache.decoder.assign(levels, {});
    cache.skips.assign(levels, {});
    cache.level_dims.assign(levels, {});

    auto run_block = [&](const Block& b, nn::Tensor input, Cache::BlockCache& bc) {
        bc.input = std::move(input);
        nn::conv3d_forward(bc.input, slot(b.conv_w, static_cast<std::size_t>(b.out_channels) *
                                                        b.in_channels * 27),
                           slot(b.conv_b, static_cast<std::size_t>(b.out_channels)), b.out_channels,
                           3, bc.conv_out);
        nn::group_norm_forward(bc.conv_out, b.groups,
                               slot(b.gamma, static_cast<std::size_t>(b.out_channels)),
                               slot(b.beta, static_cast<std::size_t>(b.out_channels)), bc.norm_out,
                               bc.norm);
        nn::Tensor out;
        nn::silu_forward(bc.norm_out, out);
        return out;
    };
    auto time_proj = [&](const TimeProj& p) {
        std::vector<double> proj(static_cast<std::size_t>(p.out_channels));
        nn::linear_forward(cache.embedding,
                           slot(p.weight, static_cast<std::size_t>(p.out_channels) * tdim),
                           slot(p.bias, static_cast<std::size_t>(p.out_channels)), proj);
        return proj;
    };

    nn::Tensor h(1, shape);
    std::copy(xt.begin(), xt.end(), h.values.begin());
    for (std::size_t l = 0; l < levels; ++l) {
        if (l > 0) {
            nn::Tensor pooled;
            nn::avg_pool2_forward(h, pooled);
            h = std::move(pooled);
        }
        cache.level_dims[l] = h.dims;
        cache.encoder[l].resize(m_encoder[l].size());
        for (std::size_t b = 0; b < m_encoder[l].size(); ++b) {
            h = run_block(m_encoder[l][b], std::move(h), cache.encoder[l][b]);
            if (b == 0) {
                add_time(h, time_proj(m_enc_time[l]));
            }
        }
        if (l + 1 < levels) {
            cache.skips[l] = h;
        }
    }
    for (std::size_t l = levels - 1; l-- > 0;) {
        nn::Tensor up;
        nn::upsample2_forward(h, up);
        nn::concat_channels(up, cache.skips[l], h);
        cache.decoder[l].resize(m_decoder[l].size());
        for (std::size_t b = 0; b < m_decoder[l].size(); ++b) {
            h = run_block(m_decoder[l][b], std::move(h), cache.decoder[l][b]);
            if (b == 0) {
                add_time(h, time_proj(m_dec_time[l]));
            }
        }
    }
    cache.head_input = std::move(h);
    nn::Tensor out;
    nn::conv3d_forward(cache.head_input, slot(m_head, static_cast<std::size_t>(m_config.widths[0])),
                       {}, 1, 1, out);
    return std::move(out.values);
}

void TinyUNet::run_backward(const Cache& cache, std::span<const double> upstream,
                            std::span<double> grad) const {
    if (grad.size() != m_params.size()) {
        throw Error(Errc::dimension_mismatch, "gradient buffer size");
    }
    const std::size_t levels = m_config.widths.size();
    const std::size_t tdim = static_cast<std::size_t>(m_config.time_dim);
    auto gslot = [&](std::size_t offset, std::size_t size) {
        return std::span<double>(grad.data() + offset, size);
    };

    auto block_backward = [&](const Block& b, const Cache::BlockCache& bc, const nn::Tensor& g_out) {
        const auto co = static_cast<std::size_t>(b.out_channels);
        nn::Tensor g_norm;
        nn::silu_backward(bc.norm_out, g_out, g_norm);
        nn::Tensor g_conv;
        nn::group_norm_backward(g_norm, b.groups, slot(b.gamma, co), bc.norm, g_conv,
                                gslot(b.gamma, co), gslot(b.beta, co));
        nn::Tensor g_in;
        nn::conv3d_backward(bc.input, slot(b.conv_w, co * b.in_channels * 27), b.out_channels, 3,
                            g_conv, &g_in, gslot(b.conv_w, co * b.in_channels * 27),
                            gslot(b.conv_b, co));
        return g_in;
    };
    auto time_backward = [&](const TimeProj& p, const nn::Tensor& g) {
        std::vector<double> g_proj(static_cast<std::size_t>(p.out_channels), 0.0);
        for (int c = 0; c < p.out_channels; ++c) {
            double acc = 0.0;
            for (double v : g.channel(c)) {
                acc += v;
            }
            g_proj[static_cast<std::size_t>(c)] = acc;
        }
        nn::linear_backward(cache.embedding, g_proj,
                            gslot(p.weight, static_cast<std::size_t>(p.out_channels) * tdim),
                            gslot(p.bias, static_cast<std::size_t>(p.out_channels)));
    };
    auto stage_backward = [&](const std::vector<Block>& blocks,
                              const std::vector<Cache::BlockCache>& caches, const TimeProj& proj,
                              nn::Tensor g) {
        for (std::size_t b = blocks.size(); b-- > 0;) {
            if (b == 0) {
                time_backward(proj, g);
            }
            g = block_backward(blocks[b], caches[b], g);
        }
        return g;
    };

    nn::Tensor g_out(1, cache.head_input.dims);
    std::copy(upstream.begin(), upstream.end(), g_out.values.begin());
    nn::Tensor g;
    nn::conv3d_backward(cache.head_input, slot(m_head, static_cast<std::size_t>(m_config.widths[0])),
                        1, 1, g_out, &g, gslot(m_head, static_cast<std::size_t>(m_config.widths[0])),
                        {});

    std::vector<nn::Tensor> skip_grads(levels);
    for (std::size_t l = 0; l + 1 < levels; ++l) {
        g = stage_backward(m_decoder[l], cache.decoder[l], m_dec_time[l], std::move(g));
        nn::Tensor g_up;
        nn::split_channels(g, m_config.widths[l + 1], g_up, skip_grads[l]);
        nn::upsample2_backward(g_up, g);
    }
    for (std::size_t l = levels; l-- > 0;) {
        if (l + 1 < levels) {
            for (std::size_t i = 0; i < g.values.size(); ++i) {
                g.values[i] += skip_grads[l].values[i];
            }
        }
        g = stage_backward(m_encoder[l], cache.encoder[l], m_enc_time[l], std::move(g));
        if (l > 0) {
            nn::Tensor g_prev;
            nn::avg_pool2_backward(g, cache.level_dims[l - 1], g_prev);
            g = std::move(g_prev);
        }
    }
}

Field TinyUNet::forward(std::span<const double> xt, const Dims& shape, int t) const {
    Cache cache;
    return run_forward(xt, shape, t, cache);
}

Field TinyUNet::backward(std::span<const double> xt, const Dims& shape, int t,
                         std::span<const double> upstream) const {
    if (upstream.size() != xt.size()) {
        throw Error(Errc::shape_mismatch, "upstream gradient size");
    }
    Cache cache;
    run_forward(xt, shape, t, cache);
    Field grad(m_params.size(), 0.0);
    run_backward(cache, upstream, grad);
    return grad;
}

}  // namespace neurodiff
