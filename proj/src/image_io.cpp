#include "fd4mm/image_io.hpp"

#include "json.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cstdio>
#include <fstream>

namespace fd4mm {

namespace fs = std::filesystem;

namespace {

cv::Mat load(const fs::path& path, int flags) {
    cv::Mat img = cv::imread(path.string(), flags);
    if (img.empty()) {
        throw std::runtime_error("cannot read image '" + path.string() + "'");
    }
    if (img.depth() == CV_16U) {
        img.convertTo(img, CV_8U, 1.0 / 257.0);
    }
    return img;
}

/// BGR(A) 8-bit Mat -> (C, h, w) float64 in [0, 1], RGB(A) order.
Tensor to_tensor(const cv::Mat& bgr) {
    cv::Mat rgb;
    if (bgr.channels() == 4) {
        cv::cvtColor(bgr, rgb, cv::COLOR_BGRA2RGBA);
    } else if (bgr.channels() == 3) {
        cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    } else {
        cv::cvtColor(bgr, rgb, cv::COLOR_GRAY2RGB);
    }
    cv::Mat as_double;
    rgb.convertTo(as_double, CV_64F, 1.0 / 255.0);
    const int64_t c = as_double.channels();
    Tensor hwc = torch::from_blob(as_double.data, {as_double.rows, as_double.cols, c}, torch::kFloat64);
    return hwc.permute({2, 0, 1}).contiguous();
}

}  // namespace

Frame read_png(const fs::path& path) {
    return Frame(to_tensor(load(path, cv::IMREAD_COLOR)).to(torch::kFloat32));
}

void write_png(const fs::path& path, const Frame& frame) {
    const Tensor codes = (frame.pixels().to(torch::kFloat64) * 255.0)
                             .round()
                             .clamp(0, 255)
                             .to(torch::kUInt8)
                             .permute({1, 2, 0})
                             .contiguous();
    cv::Mat rgb(static_cast<int>(frame.height()), static_cast<int>(frame.width()), CV_8UC3, codes.data_ptr());
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    if (!path.parent_path().empty()) {
        fs::create_directories(path.parent_path());
    }
    if (!cv::imwrite(path.string(), bgr)) {
        throw std::runtime_error("cannot write image '" + path.string() + "'");
    }
}

Tensor read_rgba(const fs::path& path) {
    Tensor t = to_tensor(load(path, cv::IMREAD_UNCHANGED));
    if (t.size(0) == 3) {
        t = torch::cat({t, torch::ones({1, t.size(1), t.size(2)}, t.options())}, 0);
    }
    return t;
}

Tensor read_rgb_resized(const fs::path& path, int64_t height, int64_t width) {
    cv::Mat img = load(path, cv::IMREAD_COLOR);
    if (img.rows != height || img.cols != width) {
        cv::Mat resized;
        cv::resize(img, resized, cv::Size(static_cast<int>(width), static_cast<int>(height)), 0, 0,
                   cv::INTER_AREA);
        img = resized;
    }
    return to_tensor(img);
}

fs::path frame_path(const fs::path& dir, int64_t index) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06lld.png", static_cast<long long>(index));
    return dir / name;
}

std::vector<Frame> read_sequence(const fs::path& dir) {
    std::vector<Frame> frames;
    for (int64_t i = 0;; ++i) {
        const fs::path p = frame_path(dir, i);
        if (!fs::exists(p)) {
            break;
        }
        frames.push_back(read_png(p));
        if (frames.back().pixels().sizes() != frames.front().pixels().sizes()) {
            throw std::runtime_error("frame '" + p.string() + "' differs in resolution from frame 0");
        }
    }
    if (frames.empty()) {
        throw std::runtime_error("no frames found in '" + dir.string() + "' (expected 000000.png ...)");
    }
    return frames;
}

void write_sequence(const fs::path& dir, const std::vector<Frame>& frames, double fps) {
    fs::create_directories(dir);
    for (size_t i = 0; i < frames.size(); ++i) {
        write_png(frame_path(dir, static_cast<int64_t>(i)), frames[i]);
    }
    // Drop stale frames from an earlier, longer run.
    for (auto i = static_cast<int64_t>(frames.size()); fs::exists(frame_path(dir, i)); ++i) {
        fs::remove(frame_path(dir, i));
    }
    std::ofstream manifest(dir / "manifest.json");
    manifest << nlohmann::json{{"fps", fps}, {"count", frames.size()}}.dump(2) << "\n";
}

}  // namespace fd4mm
