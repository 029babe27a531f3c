#include "fd4mm/model.hpp"

namespace fd4mm {

namespace nn = torch::nn;
using nlohmann::json;

void ModelConfig::validate() const {
    encoder.validate();
    const auto levels = static_cast<size_t>(encoder.levels);
    if (high_pass_layers.size() < levels || mixer_layers.size() < levels || heads.size() < levels) {
        throw std::invalid_argument("per-level lists must cover every encoder level");
    }
    if (low_pass_layers < 1) {
        throw std::invalid_argument("low_pass_layers must be positive");
    }
    for (int64_t level = 0; level < encoder.levels; ++level) {
        level_attention(level, QueryPool::Max).validate();
    }
}

AttentionConfig ModelConfig::level_attention(int64_t level, QueryPool pool) const {
    AttentionConfig cfg;
    cfg.channels = encoder.width(level);
    cfg.heads = heads.at(level);
    cfg.pool = pool;
    cfg.activation = activation;
    cfg.ffn_expansion = ffn_expansion;
    return cfg;
}

void to_json(json& j, const ModelConfig& cfg) {
    j = json{{"base_channels", cfg.encoder.base_channels},
             {"dilation", cfg.encoder.dilation},
             {"levels", cfg.encoder.levels},
             {"high_pass_layers", cfg.high_pass_layers},
             {"mixer_layers", cfg.mixer_layers},
             {"heads", cfg.heads},
             {"low_pass_layers", cfg.low_pass_layers},
             {"ffn_expansion", cfg.ffn_expansion},
             {"attention", cfg.activation == AttentionActivation::Relu ? "relu" : "softmax"}};
}

void from_json(const json& j, ModelConfig& cfg) {
    cfg.encoder.base_channels = j.value("base_channels", cfg.encoder.base_channels);
    cfg.encoder.dilation = j.value("dilation", cfg.encoder.dilation);
    cfg.encoder.levels = j.value("levels", cfg.encoder.levels);
    cfg.high_pass_layers = j.value("high_pass_layers", cfg.high_pass_layers);
    cfg.mixer_layers = j.value("mixer_layers", cfg.mixer_layers);
    cfg.heads = j.value("heads", cfg.heads);
    cfg.low_pass_layers = j.value("low_pass_layers", cfg.low_pass_layers);
    cfg.ffn_expansion = j.value("ffn_expansion", cfg.ffn_expansion);
    const std::string attention = j.value("attention", std::string("relu"));
    if (attention == "relu") {
        cfg.activation = AttentionActivation::Relu;
    } else if (attention == "softmax") {
        cfg.activation = AttentionActivation::Softmax;
    } else {
        throw std::invalid_argument("attention must be \"relu\" or \"softmax\", got \"" + attention + "\"");
    }
}

MagnificationNetImpl::MagnificationNetImpl(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int64_t levels = cfg_.encoder.levels;
    const int64_t deep = levels - 1;
    const int64_t dilation = cfg_.encoder.dilation;

    encoder = register_module("encoder", FrequencyEncoder(cfg_.encoder));
    AttentionConfig low_cfg = cfg_.level_attention(deep, QueryPool::Average);
    low_cfg.heads = cfg_.low_pass_heads();
    low_pass = register_module("low_pass", SparseFilter(low_cfg, cfg_.low_pass_layers));
    magnifier = register_module("magnifier", Magnifier(cfg_.encoder.width(deep)));
    for (int64_t level = 0; level < levels; ++level) {
        const auto tag = std::to_string(level);
        high_pass.push_back(register_module(
            "high_pass" + tag,
            SparseFilter(cfg_.level_attention(level, QueryPool::Max), cfg_.high_pass_layers[level])));
        mixers.push_back(register_module(
            "mixer" + tag,
            MixerLevel(cfg_.level_attention(level, QueryPool::Max), dilation, cfg_.mixer_layers[level])));
        if (level + 1 < levels) {
            upsamplers.push_back(register_module(
                "up" + tag, SubpixelUpsample(cfg_.encoder.width(level + 1), cfg_.encoder.width(level))));
        }
    }
    const int64_t c = cfg_.encoder.base_channels;
    head_upsample = register_module("head_upsample", SubpixelUpsample(c, c));
    head = register_module("head", nn::Conv2d(nn::Conv2dOptions(c, 3, 3)));
    init_conv_weights(*head);

    // Residual branches start as the identity. Pre-norm blocks otherwise add
    // O(1) terms to the tiny motion field and swamp it before magnification.
    torch::NoGradGuard no_grad;
    for (auto& m : modules(/*include_self=*/false)) {
        if (auto* block = m->as<SparseFilterBlockImpl>()) {
            block->project_out->weight.zero_();
        } else if (auto* mix = m->as<MixerBlockImpl>()) {
            mix->project_out->weight.zero_();
        } else if (auto* ffn = m->as<ConvFFNImpl>()) {
            ffn->project->weight.zero_();
        }
    }
}

Tensor MagnificationNetImpl::forward(const Tensor& reference, const Tensor& query, const Tensor& alpha) {
    return forward_traced(reference, query, alpha, nullptr);
}

Tensor MagnificationNetImpl::forward_traced(const Tensor& reference, const Tensor& query,
                                            const Tensor& alpha, ForwardTrace* trace) {
    require_same_shape(reference, query, "magnification");
    const int64_t batch = query.size(0);
    std::vector<Tensor> attention;

    // One encoder pass over both frames.
    FrequencyPyramid both = encoder->forward(torch::cat({reference, query}, 0));
    FrequencyPyramid ref_pyr;
    FrequencyPyramid query_pyr;
    for (const auto& band : both.high) {
        ref_pyr.high.push_back(band.narrow(0, 0, batch));
        query_pyr.high.push_back(band.narrow(0, batch, batch));
    }
    ref_pyr.low_deep = both.low_deep.narrow(0, 0, batch);
    query_pyr.low_deep = both.low_deep.narrow(0, batch, batch);

    MotionField motion = motion_field(ref_pyr, query_pyr);
    Tensor filtered = low_pass->forward_collect(motion.delta, attention);
    Tensor magnified = magnifier->forward(query_pyr.low_deep, filtered, alpha);

    const int64_t deep = levels() - 1;
    Tensor feature = magnified;
    for (int64_t level = deep; level >= 0; --level) {
        if (level < deep) {
            feature = upsamplers[level]->forward(feature);
        }
        Tensor detail = high_pass[level]->forward_collect(query_pyr.high[level], attention);
        feature = mixers[level]->forward_collect(feature, detail, attention);
    }
    Tensor out = conv2d_reflect(head_upsample->forward(feature), head, 1);

    if (trace != nullptr) {
        trace->reference = std::move(ref_pyr);
        trace->query = std::move(query_pyr);
        trace->motion = std::move(motion);
        trace->filtered_motion = filtered;
        trace->magnified_low = magnified;
        trace->attention = std::move(attention);
    }
    return out;
}

Frame MagnificationNetImpl::magnify(const Frame& reference, const Frame& query, double alpha) {
    if (!std::isfinite(alpha) || alpha < 0.0) {
        throw std::invalid_argument("magnification factor must be finite and non-negative");
    }
    torch::NoGradGuard no_grad;
    const auto opts = parameters().front().options();
    const Tensor ref = reference.batched().to(opts);
    const Tensor qry = query.batched().to(opts);
    const Tensor out = forward(ref, qry, torch::tensor(alpha, opts)).clamp(0.0, 1.0);
    return Frame(out.squeeze(0).to(torch::kFloat32).contiguous());
}

int64_t parameter_count(nn::Module& module) {
    int64_t total = 0;
    for (const auto& p : module.parameters()) {
        total += p.numel();
    }
    return total;
}

std::vector<Frame> magnify_sequence(MagnificationNet& model, const std::vector<Frame>& frames,
                                    const MagnifyRequest& request) {
    std::vector<Frame> out;
    out.reserve(frames.size());
    for (size_t t = 0; t < frames.size(); ++t) {
        if (t == 0) {
            out.push_back(frames[0]);
            continue;
        }
        const Frame& reference = request.mode == MagnifyMode::Static ? frames[0] : frames[t - 1];
        out.push_back(model->magnify(reference, frames[t], request.alpha));
    }
    return out;
}

std::string to_string(MagnifyMode mode) { return mode == MagnifyMode::Static ? "static" : "dynamic"; }

MagnifyMode magnify_mode_from_string(const std::string& name) {
    if (name == "static") {
        return MagnifyMode::Static;
    }
    if (name == "dynamic") {
        return MagnifyMode::Dynamic;
    }
    throw std::invalid_argument("mode must be static or dynamic, got \"" + name + "\"");
}

}  // namespace fd4mm
