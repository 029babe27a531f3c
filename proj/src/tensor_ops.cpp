#include "fd4mm/tensor_ops.hpp"

#include <cmath>
#include <sstream>

namespace fd4mm {

namespace F = torch::nn::functional;

Frame::Frame(Tensor pixels) : pixels_(std::move(pixels)) {
    if (!pixels_.defined() || pixels_.dim() != 3 || pixels_.size(0) != 3) {
        throw ShapeError("frame must be (3, H, W), got " +
                         (pixels_.defined() ? shape_string(pixels_) : std::string("undefined")));
    }
    if (pixels_.size(1) < 1 || pixels_.size(2) < 1) {
        throw ShapeError("frame must have positive extent");
    }
    if (!torch::isfinite(pixels_).all().item<bool>()) {
        throw ShapeError("frame contains non-finite values");
    }
    if (pixels_.min().item<double>() < 0.0 || pixels_.max().item<double>() > 1.0) {
        throw ShapeError("frame values must lie in [0, 1]");
    }
}

std::string shape_string(const Tensor& t) {
    std::ostringstream os;
    os << "(";
    for (int64_t i = 0; i < t.dim(); ++i) {
        os << (i ? ", " : "") << t.size(i);
    }
    os << ")";
    return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.sizes() != b.sizes()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " +
                         shape_string(b));
    }
}

void require_frame_batch(const Tensor& frames, int64_t multiple) {
    if (frames.dim() != 4 || frames.size(1) != 3) {
        throw ShapeError("expected frames of shape (B, 3, H, W), got " + shape_string(frames));
    }
    if (frames.size(2) % multiple != 0 || frames.size(3) % multiple != 0) {
        throw ShapeError("dimension not divisible by " + std::to_string(multiple) + ": " +
                         shape_string(frames));
    }
}

Tensor pad_reflect(const Tensor& x, int64_t pad) {
    if (pad == 0) {
        return x;
    }
    const int64_t h = x.size(-2);
    const int64_t w = x.size(-1);
    if (pad < h && pad < w) {
        return F::pad(x, F::PadFuncOptions({pad, pad, pad, pad}).mode(torch::kReflect));
    }
    return F::pad(x, F::PadFuncOptions({pad, pad, pad, pad}).mode(torch::kReplicate));
}

Tensor conv2d_reflect(const Tensor& x, torch::nn::Conv2d conv, int64_t pad) {
    return conv->forward(pad_reflect(x, pad));
}

namespace {

void init_conv(torch::nn::Conv2dImpl& conv) {
    const auto& w = conv.weight;
    const double fan_in = static_cast<double>(w.size(1) * w.size(2) * w.size(3));
    const double bound = std::sqrt(3.0 / fan_in);
    w.uniform_(-bound, bound);
    if (conv.bias.defined()) {
        conv.bias.zero_();
    }
}

}  // namespace

void init_conv_weights(torch::nn::Module& module) {
    torch::NoGradGuard no_grad;
    if (auto* self = dynamic_cast<torch::nn::Conv2dImpl*>(&module)) {
        init_conv(*self);
    }
    // Children only: the module may still be under construction.
    for (auto& child : module.modules(/*include_self=*/false)) {
        if (auto* conv = child->as<torch::nn::Conv2dImpl>()) {
            init_conv(*conv);
        }
    }
}

}  // namespace fd4mm
