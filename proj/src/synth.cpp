#include "fd4mm/synth.hpp"

#include "fd4mm/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace fd4mm {

using nlohmann::json;

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

/// Multi-octave value noise in [0, 1], (h, w).
std::vector<double> value_noise(int64_t h, int64_t w, double base_cell, int octaves, std::mt19937_64& rng) {
    std::vector<double> out(static_cast<size_t>(h * w), 0.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    double amp = 1.0;
    double total = 0.0;
    double cell = base_cell;
    for (int o = 0; o < octaves; ++o) {
        const auto gh = static_cast<int64_t>(std::ceil(static_cast<double>(h) / cell)) + 2;
        const auto gw = static_cast<int64_t>(std::ceil(static_cast<double>(w) / cell)) + 2;
        std::vector<double> grid(static_cast<size_t>(gh * gw));
        for (auto& g : grid) {
            g = uni(rng);
        }
        for (int64_t y = 0; y < h; ++y) {
            const double gy = static_cast<double>(y) / cell;
            const auto iy = static_cast<int64_t>(gy);
            const double fy = smoothstep(gy - static_cast<double>(iy));
            for (int64_t x = 0; x < w; ++x) {
                const double gx = static_cast<double>(x) / cell;
                const auto ix = static_cast<int64_t>(gx);
                const double fx = smoothstep(gx - static_cast<double>(ix));
                auto at = [&](int64_t r, int64_t c) { return grid[static_cast<size_t>(r * gw + c)]; };
                const double top = at(iy, ix) * (1 - fx) + at(iy, ix + 1) * fx;
                const double bottom = at(iy + 1, ix) * (1 - fx) + at(iy + 1, ix + 1) * fx;
                out[static_cast<size_t>(y * w + x)] += amp * (top * (1 - fy) + bottom * fy);
            }
        }
        total += amp;
        amp *= 0.5;
        cell = std::max(2.0, cell / 2.0);
    }
    for (auto& v : out) {
        v /= total;
    }
    return out;
}

std::array<double, 3> random_color(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> uni(lo, hi);
    return {uni(rng), uni(rng), uni(rng)};
}

MotionAxis axis_from_string(const std::string& s) {
    if (s == "vertical") {
        return MotionAxis::Vertical;
    }
    if (s == "horizontal") {
        return MotionAxis::Horizontal;
    }
    if (s == "diagonal") {
        return MotionAxis::Diagonal;
    }
    throw std::invalid_argument("spec.axis: must be vertical, horizontal or diagonal, got \"" + s + "\"");
}

template <typename T>
T field(const json& j, const std::string& key, const T& fallback, const std::string& path) {
    if (!j.contains(key)) {
        return fallback;
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw std::invalid_argument(path + "." + key + ": " + e.what());
    }
}

json asset_to_json(const AssetSource& a) {
    json j{{"kind", a.kind}, {"seed", a.seed}, {"size", a.size}};
    if (a.kind == "file") {
        j["path"] = a.path;
    } else {
        j["name"] = a.name;
    }
    return j;
}

AssetSource asset_from_json(const json& j, const AssetSource& fallback, const std::string& path) {
    if (!j.is_object()) {
        throw std::invalid_argument(path + ": must be an object");
    }
    AssetSource a = fallback;
    a.kind = field(j, "kind", a.kind, path);
    a.name = field(j, "name", a.name, path);
    a.path = field(j, "path", std::string(), path);
    a.seed = field(j, "seed", a.seed, path);
    a.size = field(j, "size", a.size, path);
    if (a.kind != "procedural" && a.kind != "file") {
        throw std::invalid_argument(path + ".kind: must be \"procedural\" or \"file\"");
    }
    if (a.kind == "file" && a.path.empty()) {
        throw std::invalid_argument(path + ".path: required for file assets");
    }
    return a;
}

/// Largest displacement magnitude along each axis, for the given trajectory amplitude.
std::pair<double, double> extent(MotionAxis axis, double amplitude) {
    const auto [dy, dx] = axis_displacement(axis, std::abs(amplitude));
    return {std::abs(dy), std::abs(dx)};
}

}  // namespace

void SynthSpec::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw std::invalid_argument("spec." + field + ": " + why);
    };
    if (height <= 0) fail("height", "must be positive");
    if (width <= 0) fail("width", "must be positive");
    if (period <= 0) fail("period", "must be positive");
    if (frame_count < 2) fail("frame_count", "must be at least 2");
    if (!(fps > 0.0)) fail("fps", "must be positive");
    if (!std::isfinite(alpha) || alpha < 0.0) fail("alpha", "must be finite and non-negative");
    if (!std::isfinite(input_amplitude) || input_amplitude < 0.0) {
        fail("input_amplitude", "must be finite and non-negative");
    }
    if (!std::isfinite(noise_sigma) || noise_sigma < 0.0) fail("noise_sigma", "must be >= 0");
    if (foreground.size < 0) fail("foreground.size", "must be >= 0");
}

void to_json(json& j, const SynthSpec& s) {
    j = json{{"foreground", asset_to_json(s.foreground)},
             {"background", asset_to_json(s.background)},
             {"height", s.height},
             {"width", s.width},
             {"foreground_x", s.foreground_x},
             {"foreground_y", s.foreground_y},
             {"period", s.period},
             {"frame_count", s.frame_count},
             {"fps", s.fps},
             {"alpha", s.alpha},
             {"input_amplitude", s.input_amplitude},
             {"noise_sigma", s.noise_sigma},
             {"seed", s.seed},
             {"axis", to_string(s.axis)}};
}

void from_json(const json& j, SynthSpec& s) {
    if (!j.is_object()) {
        throw std::invalid_argument("spec: must be a JSON object");
    }
    const std::string p = "spec";
    if (j.contains("foreground")) s.foreground = asset_from_json(j.at("foreground"), s.foreground, p + ".foreground");
    if (j.contains("background")) s.background = asset_from_json(j.at("background"), s.background, p + ".background");
    s.height = field(j, "height", s.height, p);
    s.width = field(j, "width", s.width, p);
    s.foreground_x = field(j, "foreground_x", s.foreground_x, p);
    s.foreground_y = field(j, "foreground_y", s.foreground_y, p);
    s.period = field(j, "period", s.period, p);
    s.frame_count = field(j, "frame_count", s.frame_count, p);
    s.fps = field(j, "fps", s.fps, p);
    s.alpha = field(j, "alpha", s.alpha, p);
    s.input_amplitude = field(j, "input_amplitude", s.input_amplitude, p);
    s.noise_sigma = field(j, "noise_sigma", s.noise_sigma, p);
    s.seed = field(j, "seed", s.seed, p);
    s.axis = axis_from_string(field(j, "axis", to_string(s.axis), p));
    s.validate();
}

std::string to_string(MotionAxis axis) {
    switch (axis) {
        case MotionAxis::Vertical: return "vertical";
        case MotionAxis::Horizontal: return "horizontal";
        case MotionAxis::Diagonal: return "diagonal";
    }
    return "vertical";
}

Tensor procedural_background(const std::string& name, int64_t height, int64_t width, uint64_t seed) {
    std::mt19937_64 rng(splitmix64(seed));
    auto bg = torch::empty({3, height, width}, torch::kFloat64);
    auto acc = bg.accessor<double, 3>();
    if (name == "flat") {
        const auto c = random_color(rng, 0.3, 0.7);
        for (int ch = 0; ch < 3; ++ch) {
            bg[ch].fill_(c[ch]);
        }
        return bg;
    }
    if (name == "gradient") {
        const auto a = random_color(rng, 0.2, 0.5);
        const auto b = random_color(rng, 0.5, 0.8);
        std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
        const double th = angle(rng);
        const double phase = angle(rng);
        for (int64_t y = 0; y < height; ++y) {
            for (int64_t x = 0; x < width; ++x) {
                const double u = static_cast<double>(y) / static_cast<double>(height);
                const double v = static_cast<double>(x) / static_cast<double>(width);
                const double s = 0.5 + 0.35 * (std::cos(th) * (u - 0.5) + std::sin(th) * (v - 0.5)) +
                                 0.1 * std::sin(2.0 * std::numbers::pi * (u + v) + phase);
                for (int ch = 0; ch < 3; ++ch) {
                    acc[ch][y][x] = std::clamp(a[ch] + (b[ch] - a[ch]) * s, 0.0, 1.0);
                }
            }
        }
        return bg;
    }
    if (name == "noise") {
        const double cell = static_cast<double>(std::max<int64_t>(8, std::min(height, width) / 8));
        for (int ch = 0; ch < 3; ++ch) {
            const auto n = value_noise(height, width, cell, 4, rng);
            for (int64_t y = 0; y < height; ++y) {
                for (int64_t x = 0; x < width; ++x) {
                    acc[ch][y][x] = 0.15 + 0.7 * n[static_cast<size_t>(y * width + x)];
                }
            }
        }
        return bg;
    }
    throw std::invalid_argument("unknown procedural background \"" + name + "\" (flat, gradient, noise)");
}

Tensor procedural_foreground(const std::string& name, int64_t size, uint64_t seed) {
    if (size < 4) {
        throw std::invalid_argument("procedural foreground size must be >= 4");
    }
    std::mt19937_64 rng(splitmix64(seed ^ 0xF00DULL));
    auto fg = torch::zeros({4, size, size}, torch::kFloat64);
    auto acc = fg.accessor<double, 3>();
    const double half = static_cast<double>(size) / 2.0;
    const auto c0 = random_color(rng, 0.05, 0.35);
    const auto c1 = random_color(rng, 0.65, 0.95);
    const double period = std::max(4.0, static_cast<double>(size) / 6.0);
    std::vector<double> texture;
    if (name == "noise_blob") {
        texture = value_noise(size, size, std::max(3.0, static_cast<double>(size) / 6.0), 3, rng);
    }
    for (int64_t y = 0; y < size; ++y) {
        for (int64_t x = 0; x < size; ++x) {
            const double cy = static_cast<double>(y) + 0.5 - half;
            const double cx = static_cast<double>(x) + 0.5 - half;
            double alpha = 0.0;
            double mix = 0.0;
            if (name == "striped_disc") {
                const double r = std::sqrt(cx * cx + cy * cy);
                alpha = std::clamp(half - 1.0 - r + 0.5, 0.0, 1.0);
                // Smooth diagonal stripes plus radial shading.
                mix = 0.5 + 0.4 * std::sin(2.0 * std::numbers::pi * (cx + cy) / period) - 0.1 * r / half;
            } else if (name == "checker_square") {
                const double edge = half - 1.0 - std::max(std::abs(cx), std::abs(cy));
                alpha = std::clamp(edge + 0.5, 0.0, 1.0);
                mix = 0.5 + 0.45 * std::sin(2.0 * std::numbers::pi * cx / period) *
                                std::sin(2.0 * std::numbers::pi * cy / period);
            } else if (name == "noise_blob") {
                const double r = std::sqrt(cx * cx / 1.0 + cy * cy / 0.6);
                alpha = std::clamp(half - 1.0 - r + 0.5, 0.0, 1.0);
                mix = texture[static_cast<size_t>(y * size + x)];
            } else {
                throw std::invalid_argument("unknown procedural foreground \"" + name +
                                            "\" (striped_disc, checker_square, noise_blob)");
            }
            mix = std::clamp(mix, 0.0, 1.0);
            for (int ch = 0; ch < 3; ++ch) {
                acc[ch][y][x] = c0[ch] + (c1[ch] - c0[ch]) * mix;
            }
            acc[3][y][x] = alpha;
        }
    }
    return fg;
}

Scene Scene::from_spec(const SynthSpec& spec) {
    spec.validate();
    Scene scene;
    scene.spec = spec;
    if (spec.background.kind == "file") {
        scene.background = read_rgb_resized(spec.background.path, spec.height, spec.width);
    } else {
        scene.background = procedural_background(spec.background.name, spec.height, spec.width, spec.background.seed);
    }
    if (spec.foreground.kind == "file") {
        scene.foreground = read_rgba(spec.foreground.path);
    } else {
        const int64_t size = spec.foreground.size > 0 ? spec.foreground.size
                                                      : std::min(spec.height, spec.width) * 3 / 8;
        scene.foreground = procedural_foreground(spec.foreground.name, size, spec.foreground.seed);
    }
    const int64_t fh = scene.foreground.size(1);
    const int64_t fw = scene.foreground.size(2);
    scene.rest_y = spec.foreground_y >= 0 ? spec.foreground_y : (spec.height - fh) / 2;
    scene.rest_x = spec.foreground_x >= 0 ? spec.foreground_x : (spec.width - fw) / 2;

    // Both the input and the magnified trajectories must keep the foreground in frame.
    const double amplitude = spec.input_amplitude * std::max(1.0, spec.alpha);
    const auto [ey, ex] = extent(spec.axis, amplitude);
    if (static_cast<double>(scene.rest_y) - ey < 0.0 || static_cast<double>(scene.rest_y + fh) + ey > static_cast<double>(spec.height) ||
        static_cast<double>(scene.rest_x) - ex < 0.0 || static_cast<double>(scene.rest_x + fw) + ex > static_cast<double>(spec.width)) {
        throw std::out_of_range("foreground out of bounds: a " + std::to_string(fh) + "x" + std::to_string(fw) +
                                " foreground at (" + std::to_string(scene.rest_y) + ", " +
                                std::to_string(scene.rest_x) + ") moving by up to " + std::to_string(amplitude) +
                                " px does not fit a " + std::to_string(spec.height) + "x" +
                                std::to_string(spec.width) + " frame");
    }
    return scene;
}

double motion_profile(int64_t t, double amplitude, int64_t period) {
    if (period <= 0) {
        throw std::invalid_argument("period must be positive");
    }
    // Reduce t first so t and t + period give bitwise-identical phases.
    const int64_t phase = ((t % period) + period) % period;
    return amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(phase) / static_cast<double>(period));
}

std::pair<double, double> axis_displacement(MotionAxis axis, double value) {
    switch (axis) {
        case MotionAxis::Vertical: return {value, 0.0};
        case MotionAxis::Horizontal: return {0.0, value};
        case MotionAxis::Diagonal: return {value / std::numbers::sqrt2, value / std::numbers::sqrt2};
    }
    return {value, 0.0};
}

Frame composite_frame(const Scene& scene, double dy, double dx) {
    const int64_t height = scene.spec.height;
    const int64_t width = scene.spec.width;
    const int64_t fh = scene.foreground.size(1);
    const int64_t fw = scene.foreground.size(2);
    const double top = static_cast<double>(scene.rest_y) + dy;
    const double left = static_cast<double>(scene.rest_x) + dx;
    if (top < 0.0 || left < 0.0 || top + static_cast<double>(fh) > static_cast<double>(height) ||
        left + static_cast<double>(fw) > static_cast<double>(width)) {
        throw std::out_of_range("foreground out of bounds at displacement (" + std::to_string(dy) + ", " +
                                std::to_string(dx) + ")");
    }

    Tensor out = scene.background.clone();
    auto o = out.accessor<double, 3>();
    auto f = scene.foreground.accessor<double, 3>();

    // Premultiplied source sample with zeros outside the foreground.
    auto sample = [&](int64_t r, int64_t c, std::array<double, 4>& px) {
        if (r < 0 || c < 0 || r >= fh || c >= fw) {
            px = {0.0, 0.0, 0.0, 0.0};
            return;
        }
        const double a = f[3][r][c];
        px = {f[0][r][c] * a, f[1][r][c] * a, f[2][r][c] * a, a};
    };

    const auto r0 = static_cast<int64_t>(std::floor(top));
    const auto c0 = static_cast<int64_t>(std::floor(left));
    std::array<double, 4> s00{}, s01{}, s10{}, s11{};
    for (int64_t r = std::max<int64_t>(0, r0); r <= std::min(height - 1, r0 + fh); ++r) {
        const double sy = static_cast<double>(r) - top;
        const auto iy = static_cast<int64_t>(std::floor(sy));
        const double fy = sy - static_cast<double>(iy);
        for (int64_t c = std::max<int64_t>(0, c0); c <= std::min(width - 1, c0 + fw); ++c) {
            const double sx = static_cast<double>(c) - left;
            const auto ix = static_cast<int64_t>(std::floor(sx));
            const double fx = sx - static_cast<double>(ix);
            sample(iy, ix, s00);
            sample(iy, ix + 1, s01);
            sample(iy + 1, ix, s10);
            sample(iy + 1, ix + 1, s11);
            std::array<double, 4> p{};
            for (int k = 0; k < 4; ++k) {
                p[k] = (1 - fy) * ((1 - fx) * s00[k] + fx * s01[k]) + fy * ((1 - fx) * s10[k] + fx * s11[k]);
            }
            if (p[3] == 0.0) {
                continue;
            }
            for (int ch = 0; ch < 3; ++ch) {
                o[ch][r][c] = std::clamp(p[ch] + (1.0 - p[3]) * o[ch][r][c], 0.0, 1.0);
            }
        }
    }
    return Frame(out.to(torch::kFloat32));
}

Frame composite_at(const Scene& scene, double displacement) {
    const auto [dy, dx] = axis_displacement(scene.spec.axis, displacement);
    return composite_frame(scene, dy, dx);
}

Frame add_noise(const Frame& frame, double sigma, uint64_t seed, int64_t t) {
    if (!(sigma >= 0.0)) {
        throw std::invalid_argument("noise sigma must be >= 0");
    }
    if (sigma == 0.0) {
        return frame;
    }
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<uint64_t>(t))));
    std::normal_distribution<double> normal(0.0, sigma);
    Tensor px = frame.pixels().to(torch::kFloat64).contiguous();
    double* data = px.data_ptr<double>();
    for (int64_t i = 0; i < px.numel(); ++i) {
        data[i] = std::clamp(data[i] + normal(rng), 0.0, 1.0);
    }
    return Frame(px.to(frame.pixels().dtype()));
}

std::vector<Frame> add_noise(const std::vector<Frame>& frames, double sigma, uint64_t seed) {
    std::vector<Frame> out;
    out.reserve(frames.size());
    for (size_t t = 0; t < frames.size(); ++t) {
        out.push_back(add_noise(frames[t], sigma, seed, static_cast<int64_t>(t)));
    }
    return out;
}

SamplePair synthesize_sequence(const SynthSpec& spec) {
    const Scene scene = Scene::from_spec(spec);
    SamplePair pair;
    pair.spec = spec;
    for (int64_t t = 0; t < spec.frame_count; ++t) {
        const double base = motion_profile(t, spec.input_amplitude, spec.period);
        const double magnified = motion_profile(t, spec.input_amplitude * spec.alpha, spec.period);
        pair.input.push_back(add_noise(composite_at(scene, base), spec.noise_sigma, spec.seed, t));
        pair.gt.push_back(composite_at(scene, magnified));
    }
    return pair;
}

Tensor swept_region(const Scene& scene, double amplitude) {
    const auto [ey, ex] = extent(scene.spec.axis, amplitude);
    const int64_t fh = scene.foreground.size(1);
    const int64_t fw = scene.foreground.size(2);
    const auto r0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(static_cast<double>(scene.rest_y) - ey)));
    const auto r1 = std::min(scene.spec.height, static_cast<int64_t>(std::ceil(static_cast<double>(scene.rest_y + fh) + ey)) + 1);
    const auto c0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(static_cast<double>(scene.rest_x) - ex)));
    const auto c1 = std::min(scene.spec.width, static_cast<int64_t>(std::ceil(static_cast<double>(scene.rest_x + fw) + ex)) + 1);
    auto mask = torch::zeros({3, scene.spec.height, scene.spec.width}, torch::kBool);
    mask.index_put_({torch::indexing::Slice(), torch::indexing::Slice(r0, r1), torch::indexing::Slice(c0, c1)}, true);
    return mask;
}

}  // namespace fd4mm
