#include "fd4mm/objectives.hpp"

#include <torch/script.h>

#include <cmath>
#include <numbers>
#include <sstream>

namespace fd4mm {

namespace F = torch::nn::functional;
using nlohmann::json;

namespace {

Tensor as_batch(const Tensor& images) { return images.dim() == 3 ? images.unsqueeze(0) : images; }

/// Depthwise correlation of every channel with each kernel in `bank` (K, 1, k, k).
/// (B, C, H, W) -> (B, C * K, H, W).
Tensor depthwise_bank(const Tensor& images, const Tensor& bank) {
    const Tensor x = as_batch(images);
    const int64_t b = x.size(0);
    const int64_t c = x.size(1);
    const int64_t pad = bank.size(-1) / 2;
    const Tensor flat = pad_reflect(x.reshape({b * c, 1, x.size(2), x.size(3)}), pad);
    const Tensor out = F::conv2d(flat, bank.to(x.options()));
    return out.reshape({b, c * bank.size(0), x.size(2), x.size(3)});
}

std::string edge_name(EdgeTerm e) {
    switch (e) {
        case EdgeTerm::None: return "none";
        case EdgeTerm::LoG: return "log";
        case EdgeTerm::Sobel: return "sobel";
    }
    return "none";
}

std::string regularizer_name(Regularizer r) {
    switch (r) {
        case Regularizer::None: return "none";
        case Regularizer::Contrastive: return "contrastive";
        case Regularizer::Perceptual: return "perceptual";
    }
    return "none";
}

}  // namespace

void LossConfig::validate() const {
    if (!(epsilon > 0.0)) {
        throw std::invalid_argument("loss.epsilon must be positive");
    }
    if (!(lambda >= 0.0)) {
        throw std::invalid_argument("loss.lambda must be non-negative");
    }
    if (!(log_sigma > 0.0)) {
        throw std::invalid_argument("loss.log_sigma must be positive");
    }
    if (log_kernel < 3 || log_kernel % 2 == 0) {
        throw std::invalid_argument("loss.log_kernel must be odd and >= 3");
    }
}

void to_json(json& j, const LossConfig& cfg) {
    j = json{{"epsilon", cfg.epsilon},       {"lambda", cfg.lambda},
             {"log_sigma", cfg.log_sigma},   {"log_kernel", cfg.log_kernel},
             {"edge", edge_name(cfg.edge)},  {"regularizer", regularizer_name(cfg.regularizer)}};
}

void from_json(const json& j, LossConfig& cfg) {
    cfg.epsilon = j.value("epsilon", cfg.epsilon);
    cfg.lambda = j.value("lambda", cfg.lambda);
    cfg.log_sigma = j.value("log_sigma", cfg.log_sigma);
    cfg.log_kernel = j.value("log_kernel", cfg.log_kernel);
    const auto edge = j.value("edge", edge_name(cfg.edge));
    if (edge == "none") {
        cfg.edge = EdgeTerm::None;
    } else if (edge == "log") {
        cfg.edge = EdgeTerm::LoG;
    } else if (edge == "sobel") {
        cfg.edge = EdgeTerm::Sobel;
    } else {
        throw std::invalid_argument("loss.edge must be none, log or sobel");
    }
    const auto reg = j.value("regularizer", regularizer_name(cfg.regularizer));
    if (reg == "none") {
        cfg.regularizer = Regularizer::None;
    } else if (reg == "contrastive") {
        cfg.regularizer = Regularizer::Contrastive;
    } else if (reg == "perceptual") {
        cfg.regularizer = Regularizer::Perceptual;
    } else {
        throw std::invalid_argument("loss.regularizer must be none, contrastive or perceptual");
    }
}

Tensor charbonnier(const Tensor& a, const Tensor& b, double epsilon) {
    require_same_shape(a, b, "charbonnier");
    return torch::sqrt((a - b).pow(2).mean() + epsilon * epsilon);
}

Tensor charbonnier_per_sample(const Tensor& a, const Tensor& b, double epsilon) {
    require_same_shape(a, b, "charbonnier");
    const Tensor sq = (a - b).pow(2).reshape({a.size(0), -1}).mean(1);
    return torch::sqrt(sq + epsilon * epsilon);
}

Tensor log_kernel(double sigma, int64_t size) {
    if (size < 3 || size % 2 == 0) {
        throw std::invalid_argument("LoG kernel size must be odd and >= 3");
    }
    auto k = torch::empty({size, size}, torch::kFloat64);
    auto acc = k.accessor<double, 2>();
    const int64_t r = size / 2;
    const double s2 = sigma * sigma;
    for (int64_t y = -r; y <= r; ++y) {
        for (int64_t x = -r; x <= r; ++x) {
            const double q = static_cast<double>(x * x + y * y) / (2.0 * s2);
            acc[y + r][x + r] = -(1.0 / (std::numbers::pi * s2 * s2)) * (1.0 - q) * std::exp(-q);
        }
    }
    return k - k.mean();
}

Tensor log_edge_map(const Tensor& images, const LossConfig& cfg) {
    const Tensor bank = log_kernel(cfg.log_sigma, cfg.log_kernel).view({1, 1, cfg.log_kernel, cfg.log_kernel});
    const Tensor out = depthwise_bank(images, bank);
    return images.dim() == 3 ? out.squeeze(0) : out;
}

Tensor sobel_edge_map(const Tensor& images) {
    const auto gx = torch::tensor({-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0}, torch::kFloat64).view({3, 3});
    const Tensor bank = torch::stack({gx, gx.t()}).unsqueeze(1);
    const Tensor out = depthwise_bank(images, bank);
    return images.dim() == 3 ? out.squeeze(0) : out;
}

Tensor edge_loss(const Tensor& pred, const Tensor& gt, const LossConfig& cfg) {
    require_same_shape(pred, gt, "edge loss");
    return charbonnier_per_sample(log_edge_map(as_batch(pred), cfg), log_edge_map(as_batch(gt), cfg), cfg.epsilon)
        .mean();
}

FilterBankBackend::FilterBankBackend(std::vector<double> scales) : scales_(std::move(scales)) {
    if (scales_.empty()) {
        throw std::invalid_argument("filter bank needs at least one scale");
    }
    for (double sigma : scales_) {
        if (!(sigma > 0.0)) {
            throw std::invalid_argument("filter bank scales must be positive");
        }
        const auto r = static_cast<int64_t>(std::ceil(3.0 * sigma));
        const int64_t size = 2 * r + 1;
        auto bank = torch::empty({4, 1, size, size}, torch::kFloat64);
        auto acc = bank.accessor<double, 4>();
        double norm = 0.0;
        const double s2 = sigma * sigma;
        for (int64_t y = -r; y <= r; ++y) {
            for (int64_t x = -r; x <= r; ++x) {
                norm += std::exp(-static_cast<double>(x * x + y * y) / (2.0 * s2));
            }
        }
        for (int64_t y = -r; y <= r; ++y) {
            for (int64_t x = -r; x <= r; ++x) {
                const auto fx = static_cast<double>(x);
                const auto fy = static_cast<double>(y);
                const double g = std::exp(-(fx * fx + fy * fy) / (2.0 * s2)) / norm;
                // Scale-normalized derivatives so every scale contributes comparably.
                acc[0][0][y + r][x + r] = g;
                acc[1][0][y + r][x + r] = -fx / sigma * g;
                acc[2][0][y + r][x + r] = -fy / sigma * g;
                acc[3][0][y + r][x + r] = ((fx * fx + fy * fy) / s2 - 2.0) * g;
            }
        }
        // Derivative kernels must not respond to constants.
        for (int64_t i = 1; i < 4; ++i) {
            bank[i] -= bank[i].mean();
        }
        kernels_.push_back(bank);
    }
}

std::vector<Tensor> FilterBankBackend::features(const Tensor& frames) const {
    std::vector<Tensor> out;
    out.reserve(kernels_.size());
    for (const auto& bank : kernels_) {
        out.push_back(depthwise_bank(frames, bank));
    }
    return out;
}

std::string FilterBankBackend::name() const {
    std::ostringstream os;
    os << "gaussian-derivative-bank(sigma=";
    for (size_t i = 0; i < scales_.size(); ++i) {
        os << (i ? "," : "") << scales_[i];
    }
    os << ")";
    return os.str();
}

struct TorchScriptBackend::Impl {
    mutable torch::jit::script::Module module;
};

TorchScriptBackend::TorchScriptBackend(const std::string& path, bool imagenet_normalize)
    : impl_(std::make_unique<Impl>()), path_(path), normalize_(imagenet_normalize) {
    try {
        impl_->module = torch::jit::load(path);
    } catch (const c10::Error& e) {
        throw std::runtime_error("cannot load perceptual network '" + path + "': " + e.what_without_backtrace());
    }
    impl_->module.eval();
}

TorchScriptBackend::~TorchScriptBackend() = default;

std::vector<Tensor> TorchScriptBackend::features(const Tensor& frames) const {
    Tensor x = as_batch(frames).to(torch::kFloat32);
    if (normalize_) {
        const auto mean = torch::tensor({0.485, 0.456, 0.406}, x.options()).view({1, 3, 1, 1});
        const auto stdev = torch::tensor({0.229, 0.224, 0.225}, x.options()).view({1, 3, 1, 1});
        x = (x - mean) / stdev;
    }
    const auto result = impl_->module.forward({x});
    std::vector<Tensor> out;
    auto push = [&](const c10::IValue& v) { out.push_back(v.toTensor().to(frames.dtype())); };
    if (result.isTensor()) {
        push(result);
    } else if (result.isTuple()) {
        for (const auto& v : result.toTupleRef().elements()) {
            push(v);
        }
    } else if (result.isList()) {
        for (const auto& v : result.toListRef()) {
            push(v);
        }
    } else {
        throw std::runtime_error("perceptual network must return a tensor, tuple or list");
    }
    return out;
}

Tensor feature_distance(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size() || a.empty()) {
        throw ShapeError("feature distance: mismatched feature stacks");
    }
    Tensor total;
    for (size_t i = 0; i < a.size(); ++i) {
        require_same_shape(a[i], b[i], "feature distance");
        const Tensor d = (a[i] - b[i]).pow(2).reshape({a[i].size(0), -1}).mean(1);
        total = total.defined() ? total + d : d;
    }
    return total;
}

Tensor contrastive_regularization(const Tensor& anchor, const Tensor& positive, const Tensor& negative,
                                  const PerceptualBackend& backend, double epsilon) {
    require_same_shape(anchor, positive, "contrastive regularization");
    require_same_shape(anchor, negative, "contrastive regularization");
    const auto fa = backend.features(as_batch(anchor));
    const auto fp = backend.features(as_batch(positive));
    const auto fn = backend.features(as_batch(negative));
    const double eps2 = epsilon * epsilon;
    const Tensor ratio = (feature_distance(fa, fp) + eps2) / (feature_distance(fa, fn) + eps2);
    return torch::sqrt(ratio).sum();
}

LossBreakdown total_loss(const Tensor& pred, const Tensor& gt, const Tensor& query,
                         const PerceptualBackend& backend, const LossConfig& cfg) {
    require_same_shape(pred, gt, "total loss");
    require_same_shape(pred, query, "total loss");
    const Tensor p = as_batch(pred);
    const Tensor g = as_batch(gt);
    const Tensor zero = torch::zeros({}, p.options());

    LossBreakdown out;
    out.magnification = charbonnier_per_sample(p, g, cfg.epsilon).mean();
    switch (cfg.edge) {
        case EdgeTerm::None: out.edge = zero; break;
        case EdgeTerm::LoG:
            out.edge = edge_loss(p, g, cfg);
            break;
        case EdgeTerm::Sobel:
            out.edge = charbonnier_per_sample(sobel_edge_map(p), sobel_edge_map(g), cfg.epsilon).mean();
            break;
    }
    switch (cfg.regularizer) {
        case Regularizer::None: out.regularizer = zero; break;
        case Regularizer::Contrastive:
            out.regularizer = contrastive_regularization(p, g, as_batch(query), backend, cfg.epsilon);
            break;
        case Regularizer::Perceptual:
            out.regularizer = feature_distance(backend.features(p), backend.features(g)).mean();
            break;
    }
    out.total = out.magnification + out.edge + cfg.lambda * out.regularizer;
    return out;
}

}  // namespace fd4mm
