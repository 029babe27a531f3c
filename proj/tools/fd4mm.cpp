// fd4mm: synthesize, train, magnify, evaluate, slice.
//
// Exit codes: 0 ok, 2 usage, 3 invalid argument or config, 4 I/O or missing
// input, 5 non-finite training loss, 1 anything else. Failures print one JSON
// object {"error": {"command", "kind", "message"}} on stderr.

#include "commands.hpp"

#include "fd4mm/train.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

using fd4mm::cli::CommandError;

int report(const std::string& command, const std::string& kind, const std::string& message, int code) {
    std::cerr << nlohmann::json{{"error", {{"command", command}, {"kind", kind}, {"message", message}}}}.dump()
              << std::endl;
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    torch::set_num_threads(1);
    CLI::App app{"Frequency-decoupled video motion magnification"};
    app.require_subcommand(1);

    fd4mm::cli::SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "render a synthetic input/gt dataset");
    synth_cmd->add_option("--config", synth.config, "spec JSON")->check(CLI::ExistingFile);
    synth_cmd->add_option("--out,-o", synth.out, "dataset directory")->required();
    synth_cmd->add_option("--alpha", synth.alpha, "magnification factor of the ground truth");
    synth_cmd->add_option("--sigma", synth.sigma, "input noise standard deviation");
    synth_cmd->add_option("--seed", synth.seed, "noise seed");

    fd4mm::cli::TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "train a model on a dataset");
    train_cmd->add_option("--data", train.data, "dataset directory")->required();
    train_cmd->add_option("--out,-o", train.out, "output checkpoint")->required();
    train_cmd->add_option("--config", train.config, "{\"model\": ..., \"train\": ...}")->check(CLI::ExistingFile);
    train_cmd->add_option("--checkpoint", train.checkpoint, "resume from this checkpoint")->check(CLI::ExistingFile);
    train_cmd->add_option("--seed", train.seed);
    train_cmd->add_option("--steps", train.steps);
    train_cmd->add_option("--alpha-max", train.alpha_max, "sample alpha from {1..N} (renders on the fly)");
    train_cmd->add_option("--channels", train.channels, "base channel width");
    train_cmd->add_option("--log-every", train.log_every)->capture_default_str();

    fd4mm::cli::MagnifyArgs magnify;
    std::optional<std::string> mode;
    auto* magnify_cmd = app.add_subcommand("magnify", "magnify a frame sequence");
    magnify_cmd->add_option("--input,-i", magnify.input, "frame directory")->required();
    magnify_cmd->add_option("--out,-o", magnify.out, "output frame directory")->required();
    magnify_cmd->add_option("--checkpoint", magnify.checkpoint)->required()->check(CLI::ExistingFile);
    magnify_cmd->add_option("--config", magnify.config)->check(CLI::ExistingFile);
    magnify_cmd->add_option("--alpha", magnify.alpha);
    magnify_cmd->add_option("--mode", magnify.mode)->check(CLI::IsMember({"static", "dynamic"}));

    fd4mm::cli::EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint over an alpha x sigma grid");
    eval_cmd->add_option("--data", eval.data, "dataset directory")->required();
    eval_cmd->add_option("--checkpoint", eval.checkpoint)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--out,-o", eval.out, "report JSON")->required();
    eval_cmd->add_option("--config", eval.config)->check(CLI::ExistingFile);
    eval_cmd->add_option("--alpha", eval.alpha, "alpha list")->delimiter(',');
    eval_cmd->add_option("--sigma", eval.sigma, "sigma list")->delimiter(',');
    eval_cmd->add_option("--frame-stride", eval.frame_stride);
    eval_cmd->add_option("--perceptual-model", eval.perceptual_model, "TorchScript feature network")
        ->check(CLI::ExistingFile);

    fd4mm::cli::SliceArgs slice;
    auto* slice_cmd = app.add_subcommand("slice", "spatiotemporal slice of a frame sequence");
    slice_cmd->add_option("--input,-i", slice.input, "frame directory")->required();
    slice_cmd->add_option("--out,-o", slice.out, "output PNG")->required();
    slice_cmd->add_option("--axis", slice.axis)->check(CLI::IsMember({"row", "col"}))->capture_default_str();
    slice_cmd->add_option("--index", slice.index)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report(app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name(), "usage",
                      e.what(), 2);
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        if (command == "synth") {
            fd4mm::cli::cmd_synth(synth, std::cerr);
        } else if (command == "train") {
            fd4mm::cli::cmd_train(train, std::cout, std::cerr);
        } else if (command == "magnify") {
            fd4mm::cli::cmd_magnify(magnify, std::cerr);
        } else if (command == "eval") {
            fd4mm::cli::cmd_eval(eval, std::cerr);
        } else {
            fd4mm::cli::cmd_slice(slice);
        }
    } catch (const CommandError& e) {
        return report(command, e.kind(), e.what(), e.exit_code());
    } catch (const fd4mm::NonFiniteLossError& e) {
        return report(command, "non_finite_loss", e.what(), 5);
    } catch (const nlohmann::json::exception& e) {
        return report(command, "invalid_config", e.what(), 3);
    } catch (const std::invalid_argument& e) {
        return report(command, "invalid_argument", e.what(), 3);
    } catch (const std::out_of_range& e) {
        return report(command, "out_of_range", e.what(), 3);
    } catch (const c10::Error& e) {
        return report(command, "runtime_error", e.what_without_backtrace(), 1);
    } catch (const std::runtime_error& e) {
        return report(command, "runtime_error", e.what(), 4);
    } catch (const std::exception& e) {
        return report(command, "error", e.what(), 1);
    }
    return 0;
}
