#include "fd4mm/encoder.hpp"

namespace fd4mm {

namespace nn = torch::nn;

void EncoderConfig::validate() const {
    if (base_channels <= 0) {
        throw std::invalid_argument("base_channels must be positive");
    }
    if (dilation < 1) {
        throw std::invalid_argument("dilation must be >= 1");
    }
    if (levels < 1 || levels > 4) {
        throw std::invalid_argument("levels must be in [1, 4]");
    }
}

FrequencySplitImpl::FrequencySplitImpl(int64_t channels, int64_t dilation)
    : channels_(channels), dilation_(dilation) {
    smoothing = register_module(
        "smoothing", nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).dilation(dilation)));
}

std::pair<Tensor, Tensor> FrequencySplitImpl::forward(const Tensor& x) {
    if (x.dim() != 4 || x.size(1) != channels_) {
        throw ShapeError("frequency split expects " + std::to_string(channels_) +
                         " channels, got " + shape_string(x));
    }
    const Tensor smooth = conv2d_reflect(x, smoothing, dilation_);
    return {torch::gelu(smooth), torch::gelu(x - smooth)};
}

FrequencyEncoderImpl::FrequencyEncoderImpl(EncoderConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    stem_conv = register_module(
        "stem", nn::Conv2d(nn::Conv2dOptions(3, cfg_.base_channels, 3).stride(2)));
    for (int64_t level = 0; level < cfg_.levels; ++level) {
        splits.push_back(register_module("split" + std::to_string(level),
                                         FrequencySplit(cfg_.width(level), cfg_.dilation)));
        if (level + 1 < cfg_.levels) {
            downsamplers.push_back(register_module(
                "down" + std::to_string(level),
                nn::Conv2d(nn::Conv2dOptions(cfg_.width(level), cfg_.width(level + 1), 3).stride(2))));
        }
    }
    init_conv_weights(*this);
}

Tensor FrequencyEncoderImpl::stem(const Tensor& frames) {
    require_frame_batch(frames, cfg_.size_multiple());
    return conv2d_reflect(frames, stem_conv, 1);
}

FrequencyPyramid FrequencyEncoderImpl::forward(const Tensor& frames) {
    FrequencyPyramid pyramid;
    Tensor feature = stem(frames);
    for (int64_t level = 0; level < cfg_.levels; ++level) {
        auto [low, high] = splits[level]->forward(feature);
        pyramid.high.push_back(high);
        if (level + 1 < cfg_.levels) {
            feature = conv2d_reflect(low, downsamplers[level], 1);
        } else {
            pyramid.low_deep = low;
        }
    }
    return pyramid;
}

MotionField motion_field(const FrequencyPyramid& reference, const FrequencyPyramid& query) {
    if (reference.levels() != query.levels()) {
        throw ShapeError("motion field: pyramids have different level counts");
    }
    for (int64_t i = 0; i < reference.levels(); ++i) {
        require_same_shape(reference.high[i], query.high[i], "motion field");
    }
    require_same_shape(reference.low_deep, query.low_deep, "motion field");
    return {query.low_deep - reference.low_deep};
}

}  // namespace fd4mm
