#pragma once

// Magnification of the filtered motion field and level-by-level recoupling of
// the magnified low band with the filtered detail bands.

#include "fd4mm/attention.hpp"
#include "fd4mm/encoder.hpp"

#include <vector>

namespace fd4mm {

/// Point-wise nonlinear magnifier:
///   L'_d = L_d + W_out(alpha * W_in(F_L(delta))),  W(x) = GELU(conv1x1(x)).
class MagnifierImpl : public torch::nn::Module {
public:
    explicit MagnifierImpl(int64_t channels);

    /// alpha: scalar tensor or (B,) tensor of non-negative factors.
    Tensor forward(const Tensor& l_deep_query, const Tensor& filtered_delta, const Tensor& alpha);

    torch::nn::Conv2d inner{nullptr};
    torch::nn::Conv2d outer{nullptr};
};
TORCH_MODULE(Magnifier);

/// (4k, h, w) -> (k, 2h, 2w) sub-pixel rearrangement; accepts batched input.
Tensor subpixel_shuffle(const Tensor& x);

/// 1x1 convolution to 4 * out_channels followed by subpixel_shuffle.
class SubpixelUpsampleImpl : public torch::nn::Module {
public:
    SubpixelUpsampleImpl(int64_t in_channels, int64_t out_channels);
    Tensor forward(const Tensor& x);

    torch::nn::Conv2d expand{nullptr};
};
TORCH_MODULE(SubpixelUpsample);

/// One mixer layer. The normalized input is split by its own frequency split;
/// the low band provides the queries and the high band the keys and values.
class MixerBlockImpl : public torch::nn::Module {
public:
    MixerBlockImpl(AttentionConfig cfg, int64_t dilation);

    Tensor forward(const Tensor& x) { return forward_with_attention(x).output; }
    AttentionResult forward_with_attention(const Tensor& x);

    const AttentionConfig& config() const { return cfg_; }

    ChannelNorm norm{nullptr};
    FrequencySplit split{nullptr};
    torch::nn::Conv2d q_depthwise{nullptr};
    torch::nn::Conv2d k_depthwise{nullptr};
    torch::nn::Conv2d v_depthwise{nullptr};
    Temperature temperature{nullptr};
    torch::nn::Conv2d project_out{nullptr};
    ConvFFN ffn{nullptr};

private:
    AttentionConfig cfg_;
};
TORCH_MODULE(MixerBlock);

/// Mixer for one level: concat(low, high) -> 1x1 compress -> mixer blocks.
class MixerLevelImpl : public torch::nn::Module {
public:
    MixerLevelImpl(AttentionConfig cfg, int64_t dilation, int64_t layers);

    Tensor forward(const Tensor& low, const Tensor& high);
    Tensor forward_collect(const Tensor& low, const Tensor& high, std::vector<Tensor>& attention);

    int64_t layers() const { return static_cast<int64_t>(blocks.size()); }

    torch::nn::Conv2d compress{nullptr};
    std::vector<MixerBlock> blocks;

private:
    int64_t channels_;
};
TORCH_MODULE(MixerLevel);

}  // namespace fd4mm
