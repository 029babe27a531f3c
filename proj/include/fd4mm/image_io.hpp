#pragma once

// PNG frame I/O. Pixel values map to 8-bit codes by round(v * 255) with no
// transfer-curve conversion: stored codes are taken to be sRGB-encoded already.

#include "fd4mm/tensor_ops.hpp"

#include <filesystem>
#include <vector>

namespace fd4mm {

Frame read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Frame& frame);

/// (4, h, w) float64 RGBA; opaque alpha when the file has none.
Tensor read_rgba(const std::filesystem::path& path);

/// (3, height, width) float64, area-resampled when the file size differs.
Tensor read_rgb_resized(const std::filesystem::path& path, int64_t height, int64_t width);

/// Reads `%06d.png` frames starting at 000000 until the first gap. Throws when
/// none exist or resolutions differ.
std::vector<Frame> read_sequence(const std::filesystem::path& dir);

/// Writes `%06d.png` frames and a manifest.json with fps and count.
void write_sequence(const std::filesystem::path& dir, const std::vector<Frame>& frames, double fps);

std::filesystem::path frame_path(const std::filesystem::path& dir, int64_t index);

}  // namespace fd4mm
