#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fd4mm {

using torch::Tensor;

/// Raised when tensors do not satisfy a shape or range contract.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An RGB image, (3, H, W), finite and within [0, 1].
class Frame {
public:
    Frame() = default;

    /// Validates and takes ownership of a (3, H, W) tensor.
    explicit Frame(Tensor pixels);

    const Tensor& pixels() const { return pixels_; }
    int64_t height() const { return pixels_.size(1); }
    int64_t width() const { return pixels_.size(2); }
    bool empty() const { return !pixels_.defined(); }

    /// Adds a leading batch dimension: (1, 3, H, W).
    Tensor batched() const { return pixels_.unsqueeze(0); }

private:
    Tensor pixels_;
};

std::string shape_string(const Tensor& t);

/// Throws ShapeError unless a and b have identical sizes.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// Throws ShapeError unless `frames` is (B, 3, H, W) with H, W divisible by `multiple`.
void require_frame_batch(const Tensor& frames, int64_t multiple);

/// Mirror padding on the two spatial axes. Falls back to edge replication on
/// axes too small to mirror (reflection needs pad < size).
Tensor pad_reflect(const Tensor& x, int64_t pad);

/// Spatial convolution with mirrored borders instead of zero padding.
Tensor conv2d_reflect(const Tensor& x, torch::nn::Conv2d conv, int64_t pad);

/// LeCun-uniform weights, zero biases, for every Conv2d under `module`.
void init_conv_weights(torch::nn::Module& module);

}  // namespace fd4mm
