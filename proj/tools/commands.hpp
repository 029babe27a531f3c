#pragma once

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace fd4mm::cli {

/// Error with a machine-readable kind, reported as JSON on stderr.
class CommandError : public std::runtime_error {
public:
    CommandError(std::string kind, const std::string& message, int exit_code)
        : std::runtime_error(message), kind_(std::move(kind)), exit_code_(exit_code) {}
    const std::string& kind() const { return kind_; }
    int exit_code() const { return exit_code_; }

private:
    std::string kind_;
    int exit_code_;
};

/// Sets `cfg[key]` from a command-line value. An existing config entry wins;
/// a differing flag then triggers a warning on `warn`.
void merge_flag(nlohmann::json& cfg, const std::string& key, const std::optional<nlohmann::json>& flag,
                const std::string& flag_name, std::ostream& warn);

nlohmann::json read_json_file(const std::filesystem::path& path);

struct SynthArgs {
    std::filesystem::path config;  // spec JSON; may be empty for defaults
    std::filesystem::path out;
    std::optional<double> alpha;
    std::optional<double> sigma;
    std::optional<uint64_t> seed;
};
void cmd_synth(const SynthArgs& args, std::ostream& warn);

struct TrainArgs {
    std::filesystem::path data;    // dataset written by cmd_synth
    std::filesystem::path out;     // final checkpoint
    std::filesystem::path config;  // {"model": ..., "train": ...}
    std::filesystem::path checkpoint;  // resume from
    std::optional<uint64_t> seed;
    std::optional<int64_t> steps;
    std::optional<int64_t> alpha_max;
    std::optional<int64_t> channels;
    int64_t log_every = 100;
};
void cmd_train(const TrainArgs& args, std::ostream& log, std::ostream& warn);

struct MagnifyArgs {
    std::filesystem::path input;
    std::filesystem::path out;
    std::filesystem::path checkpoint;
    std::filesystem::path config;  // {"alpha": ..., "mode": ...}
    std::optional<double> alpha;
    std::optional<std::string> mode;
};
void cmd_magnify(const MagnifyArgs& args, std::ostream& warn);

struct EvalArgs {
    std::filesystem::path data;
    std::filesystem::path checkpoint;
    std::filesystem::path out;     // report JSON
    std::filesystem::path config;  // {"alpha": [...], "sigma": [...], "frame_stride": n}
    std::optional<std::vector<double>> alpha;
    std::optional<std::vector<double>> sigma;
    std::optional<int64_t> frame_stride;
    std::filesystem::path perceptual_model;  // TorchScript; empty uses the filter bank
};
void cmd_eval(const EvalArgs& args, std::ostream& warn);

struct SliceArgs {
    std::filesystem::path input;
    std::filesystem::path out;
    std::string axis = "row";  // row | col
    int64_t index = 0;
};
void cmd_slice(const SliceArgs& args);

}  // namespace fd4mm::cli
