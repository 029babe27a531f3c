#pragma once

#include "fd4mm/attention.hpp"
#include "fd4mm/encoder.hpp"
#include "fd4mm/recouple.hpp"

#include "json.hpp"

#include <vector>

namespace fd4mm {

/// Architectural hyperparameters. Per-level lists are indexed shallow first and
/// must cover at least `encoder.levels` entries.
struct ModelConfig {
    EncoderConfig encoder;
    std::vector<int64_t> high_pass_layers{2, 4, 4, 4};
    std::vector<int64_t> mixer_layers{6, 4, 4, 4};
    std::vector<int64_t> heads{4, 4, 8, 8};
    int64_t low_pass_layers = 4;
    int64_t ffn_expansion = 2;
    AttentionActivation activation = AttentionActivation::Relu;

    void validate() const;

    /// Heads of the motion-field filter: those of the deepest level.
    int64_t low_pass_heads() const { return heads.at(encoder.levels - 1); }

    AttentionConfig level_attention(int64_t level, QueryPool pool) const;
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

enum class MagnifyMode { Static, Dynamic };

struct MagnifyRequest {
    double alpha = 10.0;
    MagnifyMode mode = MagnifyMode::Static;
};

/// Intermediate tensors of one forward pass, for inspection and tests.
struct ForwardTrace {
    FrequencyPyramid reference;
    FrequencyPyramid query;
    MotionField motion;
    Tensor filtered_motion;
    Tensor magnified_low;
    std::vector<Tensor> attention;  // every SA matrix, in evaluation order
};

/// The end-to-end magnification network.
///
/// Both frames go through one shared encoder. The deep low-band difference is
/// filtered, magnified by alpha and recoupled with the filtered detail bands of
/// the query frame, deepest level first, with sub-pixel upsampling in between.
class MagnificationNetImpl : public torch::nn::Module {
public:
    explicit MagnificationNetImpl(ModelConfig cfg);

    /// Unclamped prediction (B, 3, H, W). alpha is a scalar or (B,) tensor.
    Tensor forward(const Tensor& reference, const Tensor& query, const Tensor& alpha);
    Tensor forward_traced(const Tensor& reference, const Tensor& query, const Tensor& alpha,
                          ForwardTrace* trace);

    /// Inference on a frame pair: output clamped to [0, 1].
    Frame magnify(const Frame& reference, const Frame& query, double alpha);

    const ModelConfig& config() const { return cfg_; }
    int64_t levels() const { return cfg_.encoder.levels; }

    FrequencyEncoder encoder{nullptr};
    SparseFilter low_pass{nullptr};
    std::vector<SparseFilter> high_pass;
    Magnifier magnifier{nullptr};
    std::vector<MixerLevel> mixers;
    std::vector<SubpixelUpsample> upsamplers;  // upsamplers[i]: level i+1 -> level i
    SubpixelUpsample head_upsample{nullptr};
    torch::nn::Conv2d head{nullptr};

private:
    ModelConfig cfg_;
};
TORCH_MODULE(MagnificationNet);

int64_t parameter_count(torch::nn::Module& module);

/// Magnifies a sequence. Static pairs (frame 0, frame t), dynamic pairs
/// (frame t-1, frame t); frame 0 is passed through unchanged.
std::vector<Frame> magnify_sequence(MagnificationNet& model, const std::vector<Frame>& frames,
                                    const MagnifyRequest& request);

std::string to_string(MagnifyMode mode);
MagnifyMode magnify_mode_from_string(const std::string& name);

}  // namespace fd4mm
