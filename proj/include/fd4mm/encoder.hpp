#pragma once

// Adaptive frequency decoupling encoder: a strided stem followed by a stack of
// isomorphic levels. Each level splits its input into a smooth (low) band, taken
// from a dilated convolution, and the residual detail (high) band. The low band
// is downsampled and split again at the next level.

#include "fd4mm/tensor_ops.hpp"

#include <utility>
#include <vector>

namespace fd4mm {

struct EncoderConfig {
    int64_t base_channels = 24;  // C
    int64_t dilation = 2;        // r
    int64_t levels = 3;          // shallow, middle, deep (1..4)

    void validate() const;

    /// Channel width at level i: C * 2^i.
    int64_t width(int64_t level) const { return base_channels << level; }

    /// Frame sides must be divisible by this (one halving per level).
    int64_t size_multiple() const { return int64_t{1} << levels; }
};

/// Decoupled features of one frame (or batch of frames).
struct FrequencyPyramid {
    std::vector<Tensor> high;  // one per level, shallow first
    Tensor low_deep;           // low band of the deepest level

    int64_t levels() const { return static_cast<int64_t>(high.size()); }
    const Tensor& shallow() const { return high.front(); }
    const Tensor& deep() const { return high.back(); }
};

/// delta = l_deep(query) - l_deep(reference).
struct MotionField {
    Tensor delta;
};

/// One frequency split. Applies a single dilated 3x3 convolution s = W_r x and
/// returns {GELU(s), GELU(x - s)}.
class FrequencySplitImpl : public torch::nn::Module {
public:
    FrequencySplitImpl(int64_t channels, int64_t dilation);

    /// Returns {low, high}.
    std::pair<Tensor, Tensor> forward(const Tensor& x);

    int64_t channels() const { return channels_; }
    torch::nn::Conv2d smoothing{nullptr};

private:
    int64_t channels_;
    int64_t dilation_;
};
TORCH_MODULE(FrequencySplit);

class FrequencyEncoderImpl : public torch::nn::Module {
public:
    explicit FrequencyEncoderImpl(EncoderConfig cfg);

    /// Stride-2 3x3 convolution to C channels at half resolution.
    Tensor stem(const Tensor& frames);

    /// frames: (B, 3, H, W). Throws ShapeError for sides not divisible by 2^levels.
    FrequencyPyramid forward(const Tensor& frames);

    const EncoderConfig& config() const { return cfg_; }

    torch::nn::Conv2d stem_conv{nullptr};
    std::vector<FrequencySplit> splits;
    std::vector<torch::nn::Conv2d> downsamplers;

private:
    EncoderConfig cfg_;
};
TORCH_MODULE(FrequencyEncoder);

/// Throws ShapeError when the pyramids disagree in shape.
MotionField motion_field(const FrequencyPyramid& reference, const FrequencyPyramid& query);

}  // namespace fd4mm
