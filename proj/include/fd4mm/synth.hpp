#pragma once

// Synthetic motion benchmark: a foreground with an alpha matte composited over
// a background along a sinusoidal trajectory. The input sequence uses the base
// amplitude A0; the ground truth uses A0 * alpha with the same phase.

#include "fd4mm/tensor_ops.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fd4mm {

enum class MotionAxis { Vertical, Horizontal, Diagonal };

/// Where an image comes from: a bundled procedural generator or a file.
struct AssetSource {
    std::string kind = "procedural";  // "procedural" | "file"
    std::string name;                 // procedural generator name
    std::string path;                 // file path (kind == "file")
    uint64_t seed = 0;
    int64_t size = 0;  // foreground side in pixels; 0 picks 3/8 of the frame
};

struct SynthSpec {
    AssetSource foreground{"procedural", "striped_disc", "", 1, 0};
    AssetSource background{"procedural", "gradient", "", 2, 0};
    int64_t height = 128;
    int64_t width = 128;
    int64_t foreground_x = -1;  // top-left column at rest; -1 centers
    int64_t foreground_y = -1;  // top-left row at rest; -1 centers
    int64_t period = 60;
    int64_t frame_count = 60;
    double fps = 30.0;
    double alpha = 1.0;
    double input_amplitude = 2.0;
    double noise_sigma = 0.0;
    uint64_t seed = 0;
    MotionAxis axis = MotionAxis::Vertical;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

void to_json(nlohmann::json& j, const SynthSpec& spec);
/// Missing keys take defaults; bad values raise std::invalid_argument("spec.<field>: ...").
void from_json(const nlohmann::json& j, SynthSpec& spec);

/// Resolved images for a spec.
struct Scene {
    SynthSpec spec;
    Tensor foreground;  // (4, h, w) RGBA, straight alpha, float64
    Tensor background;  // (3, H, W), float64
    int64_t rest_x = 0;
    int64_t rest_y = 0;

    static Scene from_spec(const SynthSpec& spec);
};

struct SamplePair {
    std::vector<Frame> input;
    std::vector<Frame> gt;
    SynthSpec spec;
};

/// amplitude * sin(2 pi t / period).
double motion_profile(int64_t t, double amplitude, int64_t period);

/// Displacement (dy, dx) in pixels for a scalar trajectory value.
std::pair<double, double> axis_displacement(MotionAxis axis, double value);

/// Alpha-over composite with the foreground displaced by (dy, dx) pixels.
/// Sub-pixel offsets use bilinear sampling of the premultiplied foreground.
/// Throws std::out_of_range when the foreground leaves the frame.
Frame composite_frame(const Scene& scene, double dy, double dx = 0.0);

/// Composite for a trajectory value along the scene's motion axis.
Frame composite_at(const Scene& scene, double displacement);

/// Adds i.i.d. N(0, sigma) noise and clamps to [0, 1]; frame t draws from a
/// stream derived from (seed, t).
Frame add_noise(const Frame& frame, double sigma, uint64_t seed, int64_t t);
std::vector<Frame> add_noise(const std::vector<Frame>& frames, double sigma, uint64_t seed);

SamplePair synthesize_sequence(const SynthSpec& spec);

/// Rows/cols swept by the foreground over a full period at the given amplitude,
/// as a (3, H, W) boolean mask.
Tensor swept_region(const Scene& scene, double amplitude);

/// Bundled procedural assets.
Tensor procedural_background(const std::string& name, int64_t height, int64_t width, uint64_t seed);
Tensor procedural_foreground(const std::string& name, int64_t size, uint64_t seed);

std::string to_string(MotionAxis axis);

}  // namespace fd4mm
