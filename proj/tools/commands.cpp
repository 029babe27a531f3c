#include "commands.hpp"

#include "fd4mm/image_io.hpp"
#include "fd4mm/model.hpp"
#include "fd4mm/synth.hpp"
#include "fd4mm/train.hpp"

#include <fstream>

namespace fd4mm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

CommandError invalid(const std::string& message) { return CommandError("invalid_argument", message, 3); }

void require_dir(const fs::path& dir, const std::string& what) {
    if (!fs::is_directory(dir)) {
        throw CommandError("missing_input", what + " directory '" + dir.string() + "' does not exist", 4);
    }
}

void write_json(const fs::path& path, const json& value) {
    if (!path.parent_path().empty()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw CommandError("io_error", "cannot write '" + path.string() + "'", 4);
    }
    out << value.dump(2) << "\n";
}

SynthSpec dataset_spec(const fs::path& data) {
    require_dir(data, "dataset");
    const fs::path spec_path = data / "spec.json";
    if (!fs::exists(spec_path)) {
        throw CommandError("missing_input", "dataset '" + data.string() + "' has no spec.json", 4);
    }
    return read_json_file(spec_path).get<SynthSpec>();
}

MagnificationNet load_model(const fs::path& checkpoint) {
    if (checkpoint.empty()) {
        throw invalid("--checkpoint is required");
    }
    return build_model(load_checkpoint(checkpoint));
}

}  // namespace

void merge_flag(json& cfg, const std::string& key, const std::optional<json>& flag, const std::string& flag_name,
                std::ostream& warn) {
    if (!flag) {
        return;
    }
    if (!cfg.contains(key)) {
        cfg[key] = *flag;
    } else if (cfg[key] != *flag) {
        warn << "warning: " << flag_name << "=" << flag->dump() << " ignored; config sets " << key << "="
             << cfg[key].dump() << "\n";
    }
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw CommandError("missing_input", "cannot open '" + path.string() + "'", 4);
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw invalid("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

void cmd_synth(const SynthArgs& args, std::ostream& warn) {
    json cfg = args.config.empty() ? json::object() : read_json_file(args.config);
    if (!cfg.is_object()) {
        throw invalid("spec: expected a JSON object");
    }
    merge_flag(cfg, "alpha", args.alpha ? std::optional<json>(*args.alpha) : std::nullopt, "--alpha", warn);
    merge_flag(cfg, "noise_sigma", args.sigma ? std::optional<json>(*args.sigma) : std::nullopt, "--sigma", warn);
    merge_flag(cfg, "seed", args.seed ? std::optional<json>(*args.seed) : std::nullopt, "--seed", warn);
    const SynthSpec spec = cfg.get<SynthSpec>();
    const SamplePair pair = synthesize_sequence(spec);
    write_sequence(args.out / "input", pair.input, spec.fps);
    write_sequence(args.out / "gt", pair.gt, spec.fps);
    write_json(args.out / "spec.json", json(spec));
}

void cmd_train(const TrainArgs& args, std::ostream& log, std::ostream& warn) {
    json cfg = args.config.empty() ? json::object() : read_json_file(args.config);
    json& train_json = cfg["train"];
    json& model_json = cfg["model"];
    if (train_json.is_null()) train_json = json::object();
    if (model_json.is_null()) model_json = json::object();
    merge_flag(train_json, "seed", args.seed ? std::optional<json>(*args.seed) : std::nullopt, "--seed", warn);
    merge_flag(train_json, "steps", args.steps ? std::optional<json>(*args.steps) : std::nullopt, "--steps", warn);
    merge_flag(train_json, "alpha_max", args.alpha_max ? std::optional<json>(*args.alpha_max) : std::nullopt,
               "--alpha-max", warn);
    merge_flag(model_json, "base_channels", args.channels ? std::optional<json>(*args.channels) : std::nullopt,
               "--channels", warn);
    const TrainConfig train_cfg = train_json.get<TrainConfig>();
    std::optional<Checkpoint> resume;
    if (!args.checkpoint.empty()) {
        resume = load_checkpoint(args.checkpoint);
    }
    const ModelConfig model_cfg = resume ? resume->model : model_json.get<ModelConfig>();

    const SynthSpec spec = dataset_spec(args.data);
    std::unique_ptr<SampleSource> source;
    if (train_cfg.alpha_max > 0) {
        source = std::make_unique<SyntheticSource>(spec, train_cfg.alpha_max);
    } else {
        SamplePair pair;
        pair.input = read_sequence(args.data / "input");
        pair.gt = read_sequence(args.data / "gt");
        pair.spec = spec;
        source = std::make_unique<SequenceSource>(std::vector<SamplePair>{std::move(pair)});
    }
    auto backend = std::make_shared<FilterBankBackend>();
    const FitResult result =
        fit(model_cfg, train_cfg, *source, backend, resume ? &*resume : nullptr, [&](int64_t step, const LossValues& v) {
            if (args.log_every > 0 && step % args.log_every == 0) {
                log << "step " << step << " loss " << v.total << " mag " << v.magnification << " edge " << v.edge
                    << " reg " << v.regularizer << std::endl;
            }
        });
    save_checkpoint(args.out, result.checkpoint);
}

void cmd_magnify(const MagnifyArgs& args, std::ostream& warn) {
    json cfg = args.config.empty() ? json::object() : read_json_file(args.config);
    merge_flag(cfg, "alpha", args.alpha ? std::optional<json>(*args.alpha) : std::nullopt, "--alpha", warn);
    merge_flag(cfg, "mode", args.mode ? std::optional<json>(*args.mode) : std::nullopt, "--mode", warn);
    MagnifyRequest request;
    request.alpha = cfg.value("alpha", request.alpha);
    request.mode = magnify_mode_from_string(cfg.value("mode", to_string(request.mode)));
    if (!(request.alpha >= 0.0)) {
        throw invalid("alpha must be >= 0");
    }

    require_dir(args.input, "input");
    std::vector<Frame> frames = read_sequence(args.input);
    MagnificationNet model = load_model(args.checkpoint);
    model->eval();

    const int64_t multiple = model->config().encoder.size_multiple();
    const int64_t h = frames[0].height();
    const int64_t w = frames[0].width();
    const int64_t ph = (multiple - h % multiple) % multiple;
    const int64_t pw = (multiple - w % multiple) % multiple;
    if (ph != 0 || pw != 0) {
        if (ph >= h || pw >= w) {
            throw invalid("frames of " + std::to_string(h) + "x" + std::to_string(w) + " are too small to pad");
        }
        warn << "warning: " << h << "x" << w << " is not divisible by " << multiple << "; padding to "
             << h + ph << "x" << w + pw << " with a reflected border\n";
        namespace F = torch::nn::functional;
        for (auto& f : frames) {
            f = Frame(F::pad(f.batched(), F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReflect)).squeeze(0));
        }
    }
    std::vector<Frame> out = magnify_sequence(model, frames, request);
    for (auto& f : out) {
        f = Frame(f.pixels().narrow(1, 0, h).narrow(2, 0, w));
    }
    double fps = 30.0;
    if (fs::exists(args.input / "manifest.json")) {
        fps = read_json_file(args.input / "manifest.json").value("fps", fps);
    }
    write_sequence(args.out, out, fps);
}

void cmd_eval(const EvalArgs& args, std::ostream& warn) {
    json cfg = args.config.empty() ? json::object() : read_json_file(args.config);
    merge_flag(cfg, "alpha", args.alpha ? std::optional<json>(*args.alpha) : std::nullopt, "--alpha", warn);
    merge_flag(cfg, "sigma", args.sigma ? std::optional<json>(*args.sigma) : std::nullopt, "--sigma", warn);
    merge_flag(cfg, "frame_stride", args.frame_stride ? std::optional<json>(*args.frame_stride) : std::nullopt,
               "--frame-stride", warn);
    const auto alphas = cfg.value("alpha", default_eval_alphas());
    const auto sigmas = cfg.value("sigma", default_eval_sigmas());
    const auto stride = cfg.value("frame_stride", int64_t{1});

    const SynthSpec spec = dataset_spec(args.data);
    if (!fs::exists(frame_path(args.data / "gt", 0))) {
        throw CommandError("missing_input", "dataset '" + args.data.string() + "' has no ground truth (gt/)", 4);
    }
    MagnificationNet model = load_model(args.checkpoint);
    std::unique_ptr<PerceptualBackend> backend;
    if (args.perceptual_model.empty()) {
        backend = std::make_unique<FilterBankBackend>();
    } else {
        backend = std::make_unique<TorchScriptBackend>(args.perceptual_model.string());
    }
    const EvaluationGrid grid =
        evaluate_run(model, {{args.data.filename().string(), spec}}, alphas, sigmas, *backend, stride);
    write_json(args.out, json(grid));
}

void cmd_slice(const SliceArgs& args) {
    require_dir(args.input, "input");
    const std::vector<Frame> frames = read_sequence(args.input);
    const int64_t h = frames[0].height();
    const int64_t w = frames[0].width();
    std::vector<Tensor> lines;
    if (args.axis == "row") {
        if (args.index < 0 || args.index >= h) {
            throw CommandError("out_of_range", "row " + std::to_string(args.index) + " outside [0, " +
                                                   std::to_string(h) + ")", 3);
        }
        for (const auto& f : frames) {
            lines.push_back(f.pixels().select(1, args.index));  // (3, W)
        }
        write_png(args.out, Frame(torch::stack(lines, 1)));  // (3, T, W)
    } else if (args.axis == "col") {
        if (args.index < 0 || args.index >= w) {
            throw CommandError("out_of_range", "column " + std::to_string(args.index) + " outside [0, " +
                                                   std::to_string(w) + ")", 3);
        }
        for (const auto& f : frames) {
            lines.push_back(f.pixels().select(2, args.index));  // (3, H)
        }
        write_png(args.out, Frame(torch::stack(lines, 2)));  // (3, H, T)
    } else {
        throw invalid("axis must be row or col, got \"" + args.axis + "\"");
    }
}

}  // namespace fd4mm::cli
