#pragma once

// Training objectives: Charbonnier reconstruction, second-order edge loss and
// the contrastive ratio regularizer measured in a perceptual feature space.

#include "fd4mm/tensor_ops.hpp"

#include "json.hpp"

#include <memory>
#include <string>
#include <vector>

namespace fd4mm {

enum class EdgeTerm { None, LoG, Sobel };
enum class Regularizer { None, Contrastive, Perceptual };

struct LossConfig {
    double epsilon = 1e-3;
    double lambda = 0.1;
    double log_sigma = 1.0;
    int64_t log_kernel = 7;
    EdgeTerm edge = EdgeTerm::LoG;
    Regularizer regularizer = Regularizer::Contrastive;

    void validate() const;
};

void to_json(nlohmann::json& j, const LossConfig& cfg);
void from_json(const nlohmann::json& j, LossConfig& cfg);

/// sqrt(mean((a - b)^2) + eps^2) over all elements.
Tensor charbonnier(const Tensor& a, const Tensor& b, double epsilon = 1e-3);

/// Charbonnier distance per batch element, (B,).
Tensor charbonnier_per_sample(const Tensor& a, const Tensor& b, double epsilon = 1e-3);

/// Discrete Laplacian of Gaussian, (size, size), mean-subtracted so it sums to zero.
Tensor log_kernel(double sigma, int64_t size);

/// Per-channel LoG response with mirrored borders. Accepts (C, H, W) or (B, C, H, W).
Tensor log_edge_map(const Tensor& images, const LossConfig& cfg);

/// Per-channel Sobel (gx, gy) responses stacked on the channel axis.
Tensor sobel_edge_map(const Tensor& images);

/// Charbonnier penalty between LoG edge maps, per sample, averaged over the batch.
Tensor edge_loss(const Tensor& pred, const Tensor& gt, const LossConfig& cfg);

/// Feature extractor defining the perceptual metric space.
class PerceptualBackend {
public:
    virtual ~PerceptualBackend() = default;

    /// frames: (B, 3, H, W) in [0, 1]. Returns one or more (B, ...) feature maps.
    virtual std::vector<Tensor> features(const Tensor& frames) const = 0;

    /// "deterministic-filterbank" or "external-pretrained".
    virtual std::string kind() const = 0;
    virtual std::string name() const = 0;
};

/// Fixed multi-scale Gaussian-derivative filter bank: at each scale, the
/// Gaussian-smoothed image, its two first derivatives and its Laplacian, per
/// color channel. Linear in the input; needs no weights.
class FilterBankBackend final : public PerceptualBackend {
public:
    explicit FilterBankBackend(std::vector<double> scales = {1.0, 2.0, 4.0});

    std::vector<Tensor> features(const Tensor& frames) const override;
    std::string kind() const override { return "deterministic-filterbank"; }
    std::string name() const override;

private:
    std::vector<double> scales_;
    std::vector<Tensor> kernels_;  // (4, 1, k, k) per scale
};

/// Adapter for a pretrained TorchScript network (for example a VGG-19 truncated
/// at conv3_2). Frames are ImageNet-normalized before the call; the module may
/// return a tensor, a tuple or a list of tensors.
class TorchScriptBackend final : public PerceptualBackend {
public:
    explicit TorchScriptBackend(const std::string& path, bool imagenet_normalize = true);
    ~TorchScriptBackend() override;

    std::vector<Tensor> features(const Tensor& frames) const override;
    std::string kind() const override { return "external-pretrained"; }
    std::string name() const override { return path_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::string path_;
    bool normalize_;
};

/// Per-sample sum over feature maps of the mean squared feature difference, (B,).
Tensor feature_distance(const std::vector<Tensor>& a, const std::vector<Tensor>& b);

/// Sum over the batch of sqrt((d(anchor, positive) + eps^2) / (d(anchor, negative) + eps^2)).
Tensor contrastive_regularization(const Tensor& anchor, const Tensor& positive, const Tensor& negative,
                                  const PerceptualBackend& backend, double epsilon = 1e-3);

struct LossBreakdown {
    Tensor total;
    Tensor magnification;
    Tensor edge;
    Tensor regularizer;
};

/// total = L_mag + L_edge + lambda * L_reg with anchor = pred, positive = gt,
/// negative = query. Disabled terms are zero.
LossBreakdown total_loss(const Tensor& pred, const Tensor& gt, const Tensor& query,
                         const PerceptualBackend& backend, const LossConfig& cfg);

}  // namespace fd4mm
