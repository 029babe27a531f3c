#include "fd4mm/metrics.hpp"

#include <cmath>
#include <algorithm>
#include <numbers>
#include <numeric>

namespace fd4mm {

namespace F = torch::nn::functional;
using nlohmann::json;

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

Tensor gaussian_window() {
    auto g = torch::arange(11, torch::kFloat64) - 5.0;
    g = torch::exp(-(g * g) / (2.0 * 1.5 * 1.5));
    g = g / g.sum();
    return torch::outer(g, g).view({1, 1, 11, 11});
}

struct Moments {
    Tensor mu_a, mu_b, var_a, var_b, cov;
};

Moments window_moments(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "ssim");
    if (a.dim() != 3 || a.size(1) < 11 || a.size(2) < 11) {
        throw ShapeError("ssim expects (C, H, W) images of at least 11x11, got " + shape_string(a));
    }
    const Tensor x = a.to(torch::kFloat64).unsqueeze(1);  // (C, 1, H, W)
    const Tensor y = b.to(torch::kFloat64).unsqueeze(1);
    const Tensor w = gaussian_window();
    auto blur = [&](const Tensor& t) { return F::conv2d(t, w); };
    Moments m;
    m.mu_a = blur(x);
    m.mu_b = blur(y);
    m.var_a = blur(x * x) - m.mu_a * m.mu_a;
    m.var_b = blur(y * y) - m.mu_b * m.mu_b;
    m.cov = blur(x * y) - m.mu_a * m.mu_b;
    return m;
}

Tensor luminance(const Frame& f) {
    const Tensor p = f.pixels().to(torch::kFloat64);
    return 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
}

Tensor hann(int64_t n) {
    if (n == 1) {
        return torch::ones({1}, torch::kFloat64);
    }
    return 0.5 - 0.5 * torch::cos(2.0 * std::numbers::pi * torch::arange(n, torch::kFloat64) / static_cast<double>(n - 1));
}

/// Sub-pixel offset of a peak from three samples around it.
double refine(double left, double center, double right) {
    if (left > 0.0 && center > 0.0 && right > 0.0) {
        // Parabola through the log samples: exact for Gaussian-shaped peaks.
        const double l = std::log(left), c = std::log(center), r = std::log(right);
        const double denom = l - 2.0 * c + r;
        if (denom < 0.0) {
            return std::clamp(0.5 * (l - r) / denom, -0.5, 0.5);
        }
    }
    const double denom = left - 2.0 * center + right;
    if (denom >= 0.0) {
        return 0.0;
    }
    return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
    const Moments m = window_moments(a, b);
    const Tensor map = ((2.0 * m.mu_a * m.mu_b + kC1) * (2.0 * m.cov + kC2)) /
                       ((m.mu_a * m.mu_a + m.mu_b * m.mu_b + kC1) * (m.var_a + m.var_b + kC2));
    return map.mean().item<double>();
}

double ssim(const Frame& a, const Frame& b) { return ssim(a.pixels(), b.pixels()); }

SsimTerms ssim_terms(const Tensor& a, const Tensor& b) {
    const Moments m = window_moments(a, b);
    const double c3 = kC2 / 2.0;
    const Tensor sd_a = torch::sqrt(torch::clamp_min(m.var_a, 0.0));
    const Tensor sd_b = torch::sqrt(torch::clamp_min(m.var_b, 0.0));
    SsimTerms t;
    t.luminance = ((2.0 * m.mu_a * m.mu_b + kC1) / (m.mu_a * m.mu_a + m.mu_b * m.mu_b + kC1)).mean().item<double>();
    t.contrast = ((2.0 * sd_a * sd_b + kC2) / (m.var_a + m.var_b + kC2)).mean().item<double>();
    t.structure = ((m.cov + c3) / (sd_a * sd_b + c3)).mean().item<double>();
    return t;
}

double perceptual_distance(const Frame& a, const Frame& b, const PerceptualBackend* backend) {
    if (backend == nullptr) {
        throw std::invalid_argument("perceptual backend not initialized");
    }
    require_same_shape(a.pixels(), b.pixels(), "perceptual distance");
    torch::NoGradGuard no_grad;
    const auto fa = backend->features(a.batched().to(torch::kFloat64));
    const auto fb = backend->features(b.batched().to(torch::kFloat64));
    return feature_distance(fa, fb).item<double>();
}

Displacement estimate_displacement(const Frame& base, const Frame& moved, std::optional<Roi> roi) {
    require_same_shape(base.pixels(), moved.pixels(), "displacement");
    Tensor a = luminance(base);
    Tensor b = luminance(moved);
    if (roi) {
        if (roi->top < 0 || roi->left < 0 || roi->height < 2 || roi->width < 2 ||
            roi->top + roi->height > a.size(0) || roi->left + roi->width > a.size(1)) {
            throw std::out_of_range("displacement ROI outside the frame");
        }
        a = a.narrow(0, roi->top, roi->height).narrow(1, roi->left, roi->width);
        b = b.narrow(0, roi->top, roi->height).narrow(1, roi->left, roi->width);
    }
    const int64_t rows = a.size(0);
    const int64_t cols = a.size(1);
    const Tensor window = torch::outer(hann(rows), hann(cols));
    a = (a - a.mean()) * window;
    b = (b - b.mean()) * window;
    if (a.abs().max().item<double>() < 1e-9 || b.abs().max().item<double>() < 1e-9) {
        throw std::runtime_error("no correlation peak: input is flat");
    }

    const Tensor fa = torch::fft::fft2(a);
    const Tensor fb = torch::fft::fft2(b);
    Tensor cross = torch::conj(fa) * fb;
    const Tensor mag = torch::abs(cross);
    cross = cross / (mag + 1e-12 * mag.max());
    const Tensor corr = torch::real(torch::fft::ifft2(cross)).contiguous();

    const int64_t flat = corr.argmax().item<int64_t>();
    const int64_t pr = flat / cols;
    const int64_t pc = flat % cols;
    auto at = [&](int64_t r, int64_t c) {
        return corr[((r % rows) + rows) % rows][((c % cols) + cols) % cols].item<double>();
    };
    const double peak = at(pr, pc);
    if (!(peak > 0.0)) {
        throw std::runtime_error("no correlation peak");
    }
    const double dr = refine(at(pr - 1, pc), peak, at(pr + 1, pc));
    const double dc = refine(at(pr, pc - 1), peak, at(pr, pc + 1));
    auto wrap = [](int64_t i, int64_t n) { return static_cast<double>(i > n / 2 ? i - n : i); };
    return {wrap(pr, rows) + dr, wrap(pc, cols) + dc};
}

double MetricReport::mean_ssim() const {
    return ssim.empty() ? 0.0 : std::accumulate(ssim.begin(), ssim.end(), 0.0) / static_cast<double>(ssim.size());
}

double MetricReport::mean_perceptual() const {
    return perceptual.empty() ? 0.0
                              : std::accumulate(perceptual.begin(), perceptual.end(), 0.0) /
                                    static_cast<double>(perceptual.size());
}

void to_json(json& j, const MetricReport& r) {
    j = json{{"ssim", r.ssim},
             {"mean_ssim", r.mean_ssim()},
             {"perceptual", r.perceptual},
             {"mean_perceptual", r.mean_perceptual()},
             {"perceptual_backend", r.perceptual_backend},
             {"perceptual_backend_kind", r.perceptual_backend_kind},
             {"external_score", r.external_score ? json(*r.external_score) : json(nullptr)}};
    if (!r.displacement_error.empty()) {
        j["displacement_error"] = r.displacement_error;
    }
}

MetricReport evaluate_frames(const std::vector<Frame>& predicted, const std::vector<Frame>& reference,
                             const PerceptualBackend& backend, size_t first) {
    if (predicted.size() != reference.size()) {
        throw std::invalid_argument("evaluate_frames: sequences differ in length");
    }
    MetricReport report;
    report.perceptual_backend = backend.name();
    report.perceptual_backend_kind = backend.kind();
    for (size_t t = first; t < predicted.size(); ++t) {
        report.ssim.push_back(ssim(predicted[t], reference[t]));
        report.perceptual.push_back(perceptual_distance(predicted[t], reference[t], &backend));
    }
    return report;
}

}  // namespace fd4mm
