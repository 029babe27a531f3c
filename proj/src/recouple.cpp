#include "fd4mm/recouple.hpp"

namespace fd4mm {

namespace nn = torch::nn;

MagnifierImpl::MagnifierImpl(int64_t channels) {
    inner = register_module("inner", nn::Conv2d(nn::Conv2dOptions(channels, channels, 1)));
    outer = register_module("outer", nn::Conv2d(nn::Conv2dOptions(channels, channels, 1)));
    init_conv_weights(*this);
}

Tensor MagnifierImpl::forward(const Tensor& l_deep_query, const Tensor& filtered_delta,
                              const Tensor& alpha) {
    require_same_shape(l_deep_query, filtered_delta, "magnifier");
    if (!torch::isfinite(alpha).all().item<bool>() || (alpha < 0).any().item<bool>()) {
        throw std::invalid_argument("magnification factor must be finite and non-negative");
    }
    Tensor scale = alpha.to(filtered_delta.dtype());
    if (scale.dim() == 1) {
        if (scale.size(0) != filtered_delta.size(0)) {
            throw ShapeError("magnifier: one alpha per batch element required");
        }
        scale = scale.view({-1, 1, 1, 1});
    } else if (scale.dim() != 0) {
        throw ShapeError("magnifier: alpha must be a scalar or (B,) tensor");
    }
    const Tensor encoded = torch::gelu(inner->forward(filtered_delta));
    return l_deep_query + torch::gelu(outer->forward(scale * encoded));
}

Tensor subpixel_shuffle(const Tensor& x) {
    const int64_t channel_dim = x.dim() - 3;
    if (x.dim() < 3 || x.size(channel_dim) % 4 != 0) {
        throw ShapeError("sub-pixel shuffle needs a channel count divisible by 4, got " +
                         shape_string(x));
    }
    return torch::pixel_shuffle(x, 2);
}

SubpixelUpsampleImpl::SubpixelUpsampleImpl(int64_t in_channels, int64_t out_channels) {
    expand = register_module("expand", nn::Conv2d(nn::Conv2dOptions(in_channels, 4 * out_channels, 1)));
    init_conv_weights(*this);
}

Tensor SubpixelUpsampleImpl::forward(const Tensor& x) { return subpixel_shuffle(expand->forward(x)); }

MixerBlockImpl::MixerBlockImpl(AttentionConfig cfg, int64_t dilation) : cfg_(cfg) {
    cfg_.validate();
    const int64_t c = cfg_.channels;
    norm = register_module("norm", ChannelNorm(c));
    split = register_module("split", FrequencySplit(c, dilation));
    q_depthwise = register_module("q_depthwise", nn::Conv2d(nn::Conv2dOptions(c, c, 3).groups(c)));
    k_depthwise = register_module("k_depthwise", nn::Conv2d(nn::Conv2dOptions(c, c, 3).groups(c)));
    v_depthwise = register_module("v_depthwise", nn::Conv2d(nn::Conv2dOptions(c, c, 3).groups(c)));
    temperature = register_module("temperature", Temperature(cfg_.heads, cfg_.head_width()));
    project_out = register_module("project_out", nn::Conv2d(nn::Conv2dOptions(c, c, 1)));
    ffn = register_module("ffn", ConvFFN(c, cfg_.ffn_expansion));
    init_conv_weights(*this);
}

AttentionResult MixerBlockImpl::forward_with_attention(const Tensor& x) {
    auto [low, high] = split->forward(norm->forward(x));
    const Tensor q = conv2d_reflect(low, q_depthwise, 1);
    const Tensor k = conv2d_reflect(high, k_depthwise, 1);
    const Tensor v = conv2d_reflect(high, v_depthwise, 1);
    auto attended = channel_attention(q, k, v, temperature->forward(), cfg_.heads, cfg_.activation);
    const Tensor y = x + project_out->forward(attended.output);
    return {ffn->forward(y), std::move(attended.attention)};
}

MixerLevelImpl::MixerLevelImpl(AttentionConfig cfg, int64_t dilation, int64_t layers)
    : channels_(cfg.channels) {
    if (layers < 1) {
        throw std::invalid_argument("mixer needs at least one layer");
    }
    compress = register_module("compress", nn::Conv2d(nn::Conv2dOptions(2 * channels_, channels_, 1)));
    for (int64_t i = 0; i < layers; ++i) {
        blocks.push_back(register_module("block" + std::to_string(i), MixerBlock(cfg, dilation)));
    }
    init_conv_weights(*this);
}

Tensor MixerLevelImpl::forward(const Tensor& low, const Tensor& high) {
    std::vector<Tensor> unused;
    return forward_collect(low, high, unused);
}

Tensor MixerLevelImpl::forward_collect(const Tensor& low, const Tensor& high,
                                       std::vector<Tensor>& attention) {
    require_same_shape(low, high, "mixer");
    if (low.size(1) != channels_) {
        throw ShapeError("mixer expects " + std::to_string(channels_) + " channels, got " +
                         shape_string(low));
    }
    Tensor y = compress->forward(torch::cat({low, high}, 1));
    for (auto& block : blocks) {
        auto result = block->forward_with_attention(y);
        attention.push_back(result.attention);
        y = result.output;
    }
    return y;
}

}  // namespace fd4mm
