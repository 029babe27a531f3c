#pragma once

#include "fd4mm/metrics.hpp"
#include "fd4mm/model.hpp"
#include "fd4mm/objectives.hpp"
#include "fd4mm/synth.hpp"

#include "json.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace fd4mm {

struct TrainConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    int64_t steps = 2000;
    int64_t batch_size = 4;
    int64_t crop = 64;
    int64_t alpha_max = 0;  // > 0: draw alpha per sample from {1..alpha_max}
    uint64_t seed = 0;
    LossConfig loss;
    int64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
    std::string checkpoint_dir;
    std::string dump_dir = ".";  // where a non-finite batch is written

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

struct TrainingBatch {
    Tensor reference;     // (B, 3, crop, crop)
    Tensor query;         // (B, 3, crop, crop)
    Tensor ground_truth;  // (B, 3, crop, crop)
    Tensor alpha;         // (B,)
};

/// Supplies randomly drawn training batches.
class SampleSource {
public:
    virtual ~SampleSource() = default;
    virtual TrainingBatch draw(int64_t batch, int64_t crop, std::mt19937_64& rng) = 0;
};

/// Fixed sequences with their recorded alpha. A sample is (input frame 0,
/// input frame t, gt frame t) for uniform t, cropped at a uniform position.
class SequenceSource final : public SampleSource {
public:
    explicit SequenceSource(std::vector<SamplePair> sequences);
    TrainingBatch draw(int64_t batch, int64_t crop, std::mt19937_64& rng) override;

private:
    std::vector<SamplePair> sequences_;
};

/// Renders samples on the fly from a scene, drawing alpha per sample from
/// {1..alpha_max} for the ground truth and the magnifier alike.
class SyntheticSource final : public SampleSource {
public:
    SyntheticSource(const SynthSpec& spec, int64_t alpha_max);
    TrainingBatch draw(int64_t batch, int64_t crop, std::mt19937_64& rng) override;

private:
    Scene scene_;
    int64_t alpha_max_;
};

struct LossValues {
    double total = 0.0;
    double magnification = 0.0;
    double edge = 0.0;
    double regularizer = 0.0;
};

/// Adam moments of one parameter.
struct AdamSlot {
    int64_t step = 0;
    Tensor exp_avg;
    Tensor exp_avg_sq;
};

struct Checkpoint {
    static constexpr uint32_t kFormatVersion = 1;

    ModelConfig model;
    TrainConfig train;
    int64_t step = 0;
    std::vector<std::pair<std::string, Tensor>> parameters;
    std::vector<AdamSlot> optimizer;  // parallel to `parameters`; empty before the first step
    std::string rng_state;
};

/// Binary container: 8-byte magic, u32 format version, u64 header length, a
/// JSON header (config, step, tensor table), then raw little-endian payloads.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Model with the checkpoint's configuration and weights.
MagnificationNet build_model(const Checkpoint& checkpoint);

class NonFiniteLossError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Owns a model, its Adam state and the sampling RNG; single writer.
class Trainer {
public:
    Trainer(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
            std::shared_ptr<const PerceptualBackend> backend);
    /// Resumes from a checkpoint; `train_cfg` may extend `steps` but should
    /// otherwise match the checkpoint for a reproducible continuation.
    Trainer(const Checkpoint& checkpoint, const TrainConfig& train_cfg,
            std::shared_ptr<const PerceptualBackend> backend);

    /// One Adam update on the total loss. Throws NonFiniteLossError after
    /// dumping the batch when any loss term is not finite.
    LossValues train_step(const TrainingBatch& batch);

    TrainingBatch draw(SampleSource& source);

    Checkpoint snapshot() const;

    MagnificationNet& model() { return model_; }
    int64_t step() const { return step_; }
    const TrainConfig& config() const { return train_cfg_; }

private:
    void make_optimizer();

    ModelConfig model_cfg_;
    TrainConfig train_cfg_;
    std::shared_ptr<const PerceptualBackend> backend_;
    MagnificationNet model_{nullptr};
    std::unique_ptr<torch::optim::Adam> optimizer_;
    std::mt19937_64 rng_;
    int64_t step_ = 0;
};

struct FitResult {
    Checkpoint checkpoint;
    std::vector<LossValues> history;  // one entry per step run by this call
};

using StepCallback = std::function<void(int64_t step, const LossValues&)>;

/// Runs train_cfg.steps steps in total (counting steps already in `resume`),
/// writing periodic checkpoints when configured.
FitResult fit(const ModelConfig& model_cfg, const TrainConfig& train_cfg, SampleSource& source,
              std::shared_ptr<const PerceptualBackend> backend, const Checkpoint* resume = nullptr,
              const StepCallback& on_step = {});

struct EvaluationCell {
    double alpha = 0.0;
    double sigma = 0.0;
    MetricReport report;
    std::string error;  // non-empty when the cell could not be rendered
};

struct EvaluationRow {
    std::string sequence;
    std::vector<EvaluationCell> cells;
};

struct EvaluationGrid {
    std::vector<double> alphas;
    std::vector<double> sigmas;
    std::vector<EvaluationRow> rows;
    std::string backend;
    std::string backend_kind;
};

void to_json(nlohmann::json& j, const EvaluationGrid& grid);

const std::vector<double>& default_eval_alphas();  // {5, 10, 20, 50, 100}
const std::vector<double>& default_eval_sigmas();  // {0.01, 0.05, 0.1, 0.2}

/// Static-mode evaluation of every (alpha, sigma) cell for each named scene.
/// sigma = 0 is always evaluated as the clean baseline. Frames 1.., every
/// `frame_stride`-th, are scored against the clean ground truth.
EvaluationGrid evaluate_run(MagnificationNet& model, const std::vector<std::pair<std::string, SynthSpec>>& sequences,
                            std::vector<double> alphas, std::vector<double> sigmas,
                            const PerceptualBackend& backend, int64_t frame_stride = 1);

/// Static-mode scores of a model on one already-rendered pair.
MetricReport evaluate_pair(MagnificationNet& model, const SamplePair& pair, double alpha,
                           const PerceptualBackend& backend, int64_t frame_stride = 1);

}  // namespace fd4mm
