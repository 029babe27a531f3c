#include "doctest.h"

#include "commands.hpp"

#include "fd4mm/image_io.hpp"
#include "fd4mm/synth.hpp"
#include "fd4mm/train.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fd4mm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "fd4mm_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Run {
    int code;
    std::string err;
};

Run run_tool(const std::string& args, const fs::path& dir) {
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = std::string(FD4MM_TOOL) + " " + args + " > /dev/null 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WEXITSTATUS(status), read_bytes(err)};
}

/// Small dataset and a C=4 checkpoint, built once.
struct Pipeline {
    fs::path dir = scratch("pipeline");
    fs::path data = dir / "ds";
    fs::path ckpt = dir / "model.ckpt";

    Pipeline() {
        write_text(dir / "spec.json",
                   R"({"height": 64, "width": 64, "frame_count": 8, "alpha": 4, "foreground": {"size": 16}})");
        std::ostringstream warn, log;
        cli::cmd_synth({dir / "spec.json", data, std::nullopt, std::nullopt, std::nullopt}, warn);
        write_text(dir / "train.json",
                   R"({"model": {"base_channels": 4}, "train": {"steps": 2, "batch_size": 1, "crop": 32}})");
        cli::TrainArgs t;
        t.data = data;
        t.out = ckpt;
        t.config = dir / "train.json";
        cli::cmd_train(t, log, warn);
    }
};

Pipeline& pipeline() {
    static Pipeline p;
    return p;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("merge flag: config wins with a warning") {
    nlohmann::json cfg{{"alpha", 10}};
    std::ostringstream warn;
    cli::merge_flag(cfg, "alpha", nlohmann::json(5), "--alpha", warn);
    CHECK(cfg["alpha"] == 10);
    CHECK(warn.str().find("--alpha") != std::string::npos);
    std::ostringstream quiet;
    cli::merge_flag(cfg, "alpha", nlohmann::json(10), "--alpha", quiet);
    cli::merge_flag(cfg, "seed", nlohmann::json(3), "--seed", quiet);
    CHECK(cfg["seed"] == 3);
    CHECK(quiet.str().empty());
}

TEST_CASE("synth writes a reproducible dataset") {
    const fs::path dir = scratch("synth");
    write_text(dir / "spec.json", R"({"alpha": 10, "frame_count": 60})");
    std::ostringstream warn;
    cli::cmd_synth({dir / "spec.json", dir / "a", std::nullopt, std::nullopt, std::nullopt}, warn);
    cli::cmd_synth({dir / "spec.json", dir / "b", std::nullopt, std::nullopt, std::nullopt}, warn);
    CHECK(read_sequence(dir / "a" / "input").size() == 60);
    CHECK(read_sequence(dir / "a" / "gt").size() == 60);
    for (int i : {0, 17, 59}) {
        CHECK(read_bytes(frame_path(dir / "a" / "gt", i)) == read_bytes(frame_path(dir / "b" / "gt", i)));
    }
    const SynthSpec spec = cli::read_json_file(dir / "a" / "spec.json").get<SynthSpec>();
    CHECK(spec.period == 60);
    CHECK(spec.alpha == 10);
    const auto manifest = cli::read_json_file(dir / "a" / "input" / "manifest.json");
    CHECK(manifest.at("count") == 60);
    CHECK(manifest.at("fps") == 30.0);

    write_text(dir / "bad.json", R"({"period": -3})");
    try {
        cli::cmd_synth({dir / "bad.json", dir / "c", std::nullopt, std::nullopt, std::nullopt}, warn);
        FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("spec.period") != std::string::npos);
    }
}

TEST_CASE("png round trip is exact on 8-bit codes") {
    const fs::path dir = scratch("png");
    const Frame f(torch::randint(0, 256, {3, 8, 16}).to(torch::kFloat32) / 255.0);
    write_png(dir / "f.png", f);
    const Frame back = read_png(dir / "f.png");
    CHECK((back.pixels() - f.pixels()).abs().max().item<double>() < 1e-6);
}

TEST_CASE("magnify preserves length and pads odd sizes") {
    Pipeline& p = pipeline();
    const fs::path out = p.dir / "mag";
    std::ostringstream warn;
    cli::cmd_magnify({p.data / "input", out, p.ckpt, {}, 20.0, std::string("static")}, warn);
    const auto frames = read_sequence(out);
    CHECK(frames.size() == 8);
    CHECK(read_bytes(frame_path(out, 0)) == read_bytes(frame_path(p.data / "input", 0)));
    CHECK(warn.str().empty());

    const fs::path odd = p.dir / "odd";
    std::vector<Frame> cropped;
    for (const auto& f : read_sequence(p.data / "input")) {
        cropped.emplace_back(f.pixels().narrow(1, 0, 60).narrow(2, 0, 62));
    }
    write_sequence(odd, cropped, 30.0);
    cli::cmd_magnify({odd, p.dir / "odd_mag", p.ckpt, {}, 20.0, std::string("dynamic")}, warn);
    const auto odd_out = read_sequence(p.dir / "odd_mag");
    CHECK(odd_out.size() == 8);
    CHECK(odd_out[3].height() == 60);
    CHECK(odd_out[3].width() == 62);
    CHECK(warn.str().find("padding") != std::string::npos);
}

TEST_CASE("eval writes a grid with provenance") {
    Pipeline& p = pipeline();
    std::ostringstream warn;
    cli::EvalArgs args;
    args.data = p.data;
    args.checkpoint = p.ckpt;
    args.out = p.dir / "report.json";
    args.alpha = std::vector<double>{4.0};
    args.sigma = std::vector<double>{0.0};
    args.frame_stride = 3;
    cli::cmd_eval(args, warn);
    const auto report = cli::read_json_file(args.out);
    CHECK(report.at("sequences").size() == 1);
    CHECK(report.at("sequences")[0].at("cells").size() == 1);
    CHECK(report.at("perceptual_backend_kind") == "deterministic-filterbank");
    CHECK(report.at("sequences")[0].at("cells")[0].at("report").at("perceptual_backend_kind") ==
          "deterministic-filterbank");

    const fs::path no_gt = p.dir / "no_gt";
    fs::create_directories(no_gt);
    fs::copy_file(p.data / "spec.json", no_gt / "spec.json", fs::copy_options::overwrite_existing);
    args.data = no_gt;
    CHECK_THROWS_AS(cli::cmd_eval(args, warn), cli::CommandError);
}

TEST_CASE("slice") {
    const fs::path dir = scratch("slice");
    std::vector<Frame> constant(5, Frame(torch::full({3, 16, 24}, 0.4)));
    write_sequence(dir / "const", constant, 30.0);
    cli::cmd_slice({dir / "const", dir / "row.png", "row", 3});
    const Frame row = read_png(dir / "row.png");
    CHECK(row.height() == 5);
    CHECK(row.width() == 24);
    CHECK(torch::equal(row.pixels(), row.pixels()[0][0][0].expand_as(row.pixels())));
    cli::cmd_slice({dir / "const", dir / "col.png", "col", 0});
    CHECK(read_png(dir / "col.png").pixels().sizes() == torch::IntArrayRef({3, 16, 5}));
    CHECK_THROWS_AS(cli::cmd_slice({dir / "const", dir / "x.png", "row", 16}), cli::CommandError);
    CHECK_THROWS_AS(cli::cmd_slice({dir / "const", dir / "x.png", "diag", 0}), cli::CommandError);
}

TEST_CASE("slice of a sinusoid spans twice the amplitude") {
    const fs::path dir = scratch("sinusoid");
    SynthSpec spec;
    spec.background.name = "flat";
    spec.input_amplitude = 6.0;
    write_text(dir / "spec.json", nlohmann::json(spec).dump());
    std::ostringstream warn;
    cli::cmd_synth({dir / "spec.json", dir / "ds", std::nullopt, std::nullopt, std::nullopt}, warn);
    const Scene scene = Scene::from_spec(spec);
    const int64_t col = scene.rest_x + scene.foreground.size(2) / 2;
    cli::cmd_slice({dir / "ds" / "input", dir / "st.png", "col", col});
    const Tensor st = read_png(dir / "st.png").pixels();  // (3, H, T)
    // Track the lowest foreground row in each time column against the flat background.
    const Tensor bg = st.select(2, 0).select(1, 0).view({3, 1, 1});
    const Tensor differs = ((st - bg).abs().sum(0) > 0.05).to(torch::kFloat64);  // (H, T)
    const Tensor rows = torch::arange(st.size(1), torch::kFloat64).unsqueeze(1);
    const Tensor bottom = (differs * rows).amax(0);
    const double span = (bottom.max() - bottom.min()).item<double>();
    CHECK(span == doctest::Approx(2.0 * spec.input_amplitude).epsilon(0.1));
}

TEST_CASE("executable exit codes and structured errors") {
    Pipeline& p = pipeline();
    const fs::path dir = scratch("exe");

    Run ok = run_tool("slice -i " + (p.data / "input").string() + " -o " + (dir / "s.png").string() +
                          " --axis row --index 2",
                      dir);
    CHECK(ok.code == 0);

    Run range = run_tool("slice -i " + (p.data / "input").string() + " -o " + (dir / "s.png").string() +
                             " --axis row --index 999",
                         dir);
    CHECK(range.code == 3);
    const auto err = nlohmann::json::parse(range.err);
    CHECK(err.at("error").at("command") == "slice");
    CHECK(err.at("error").at("kind") == "out_of_range");

    Run usage = run_tool("magnify --mode sideways", dir);
    CHECK(usage.code == 2);
    CHECK(nlohmann::json::parse(usage.err).at("error").at("kind") == "usage");

    Run missing = run_tool("eval --data " + (dir / "nowhere").string() + " --checkpoint " + p.ckpt.string() +
                               " -o " + (dir / "r.json").string(),
                           dir);
    CHECK(missing.code == 4);

    write_text(dir / "bad.json", R"({"frame_count": 1})");
    Run bad = run_tool("synth --config " + (dir / "bad.json").string() + " -o " + (dir / "d").string(), dir);
    CHECK(bad.code == 3);
    CHECK(bad.err.find("spec.frame_count") != std::string::npos);

    write_text(dir / "a10.json", R"({"alpha": 10, "frame_count": 2})");
    Run warned = run_tool("synth --config " + (dir / "a10.json").string() + " -o " + (dir / "w").string() +
                              " --alpha 5",
                          dir);
    CHECK(warned.code == 0);
    CHECK(warned.err.find("warning") != std::string::npos);
    CHECK(cli::read_json_file(dir / "w" / "spec.json").at("alpha") == 10.0);
}

}  // TEST_SUITE
