#pragma once

#include "fd4mm/objectives.hpp"
#include "fd4mm/tensor_ops.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace fd4mm {

/// SSIM with an 11x11 Gaussian window (std 1.5), C1 = 0.01^2, C2 = 0.03^2,
/// evaluated at every fully-covered window position and averaged over
/// channels and positions.
double ssim(const Frame& a, const Frame& b);
double ssim(const Tensor& a, const Tensor& b);

/// Mean luminance, contrast and structure terms of the same windowed SSIM
/// (C3 = C2 / 2, so luminance * contrast * structure is the per-window SSIM).
struct SsimTerms {
    double luminance = 0.0;
    double contrast = 0.0;
    double structure = 0.0;
};
SsimTerms ssim_terms(const Tensor& a, const Tensor& b);

/// Sum over backend feature maps of the mean squared feature difference.
double perceptual_distance(const Frame& a, const Frame& b, const PerceptualBackend* backend);

struct Displacement {
    double dy = 0.0;
    double dx = 0.0;
};

/// Region of interest in pixels: rows [top, top + height), cols [left, left + width).
struct Roi {
    int64_t top = 0;
    int64_t left = 0;
    int64_t height = 0;
    int64_t width = 0;
};

/// Translation of `moved` relative to `base` by phase correlation of the
/// luminance (Hann-windowed), with parabolic sub-pixel refinement of the peak.
/// Positive dy means content moved down. Throws std::runtime_error("no
/// correlation peak") for flat inputs.
Displacement estimate_displacement(const Frame& base, const Frame& moved, std::optional<Roi> roi = std::nullopt);

struct MetricReport {
    std::vector<double> ssim;
    std::vector<double> perceptual;
    std::vector<double> displacement_error;  // optional; empty when not measured
    std::string perceptual_backend;
    std::string perceptual_backend_kind;
    std::optional<double> external_score;  // reserved for externally computed no-reference scores

    double mean_ssim() const;
    double mean_perceptual() const;
};

void to_json(nlohmann::json& j, const MetricReport& r);

/// Frame-by-frame comparison of two equally long sequences.
MetricReport evaluate_frames(const std::vector<Frame>& predicted, const std::vector<Frame>& reference,
                             const PerceptualBackend& backend, size_t first = 0);

}  // namespace fd4mm
