#include "fd4mm/attention.hpp"

#include <cmath>

namespace fd4mm {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

void AttentionConfig::validate() const {
    if (channels <= 0 || heads <= 0) {
        throw std::invalid_argument("attention channels and heads must be positive");
    }
    if (channels % heads != 0) {
        throw std::invalid_argument("attention channels " + std::to_string(channels) +
                                    " not divisible by heads " + std::to_string(heads));
    }
    if (ffn_expansion <= 0) {
        throw std::invalid_argument("ffn_expansion must be positive");
    }
}

AttentionResult channel_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                  const Tensor& temperature, int64_t heads,
                                  AttentionActivation activation) {
    require_same_shape(q, k, "channel attention");
    require_same_shape(q, v, "channel attention");
    const int64_t batch = q.size(0);
    const int64_t channels = q.size(1);
    const int64_t rows = q.size(2);
    const int64_t cols = q.size(3);
    if (channels % heads != 0) {
        throw ShapeError("channel attention: channels not divisible by heads");
    }
    const int64_t width = channels / heads;

    auto split = [&](const Tensor& t) { return t.reshape({batch, heads, width, rows * cols}); };
    const auto opts = F::NormalizeFuncOptions().p(2).dim(-1).eps(1e-12);
    const Tensor qh = F::normalize(split(q), opts);
    const Tensor kh = F::normalize(split(k), opts);
    const Tensor vh = split(v);

    const Tensor logits = torch::matmul(qh, kh.transpose(-2, -1)) / temperature.view({1, heads, 1, 1});
    Tensor attention = activation == AttentionActivation::Relu ? torch::relu(logits)
                                                               : torch::softmax(logits, -1);
    Tensor out = torch::matmul(attention, vh).reshape({batch, channels, rows, cols});
    return {std::move(out), std::move(attention)};
}

ChannelNormImpl::ChannelNormImpl(int64_t channels) {
    weight = register_parameter("weight", torch::ones({channels}));
    bias = register_parameter("bias", torch::zeros({channels}));
}

Tensor ChannelNormImpl::forward(const Tensor& x) {
    const Tensor mean = x.mean(1, /*keepdim=*/true);
    const Tensor var = (x - mean).pow(2).mean(1, /*keepdim=*/true);
    const Tensor normed = (x - mean) / torch::sqrt(var + 1e-5);
    return normed * weight.view({1, -1, 1, 1}) + bias.view({1, -1, 1, 1});
}

TemperatureImpl::TemperatureImpl(int64_t heads, int64_t head_width) {
    const double init = std::sqrt(static_cast<double>(head_width));
    raw = register_parameter("raw", torch::full({heads}, std::log(std::expm1(init))));
}

Tensor TemperatureImpl::forward() { return F::softplus(raw); }

ConvFFNImpl::ConvFFNImpl(int64_t channels, int64_t expansion) {
    const int64_t hidden = channels * expansion;
    norm = register_module("norm", ChannelNorm(channels));
    expand = register_module("expand", nn::Conv2d(nn::Conv2dOptions(channels, hidden, 1)));
    depthwise = register_module("depthwise",
                                nn::Conv2d(nn::Conv2dOptions(hidden, hidden, 3).groups(hidden)));
    project = register_module("project", nn::Conv2d(nn::Conv2dOptions(hidden, channels, 1)));
    init_conv_weights(*this);
}

Tensor ConvFFNImpl::forward(const Tensor& x) {
    Tensor h = expand->forward(norm->forward(x));
    h = torch::gelu(conv2d_reflect(h, depthwise, 1));
    return x + project->forward(h);
}

QueryPoolingImpl::QueryPoolingImpl(QueryPool mode) : mode_(mode) {}

Tensor QueryPoolingImpl::forward(const Tensor& x) {
    const Tensor padded = pad_reflect(x, 1);
    return mode_ == QueryPool::Average ? F::avg_pool2d(padded, F::AvgPool2dFuncOptions(3).stride(1))
                                       : F::max_pool2d(padded, F::MaxPool2dFuncOptions(3).stride(1));
}

SparseFilterBlockImpl::SparseFilterBlockImpl(AttentionConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    const int64_t c = cfg_.channels;
    norm = register_module("norm", ChannelNorm(c));
    shared_projection = register_module("shared_projection", nn::Conv2d(nn::Conv2dOptions(c, c, 1)));
    q_depthwise = register_module("q_depthwise", nn::Conv2d(nn::Conv2dOptions(c, c, 3).groups(c)));
    k_depthwise = register_module("k_depthwise", nn::Conv2d(nn::Conv2dOptions(c, c, 3).groups(c)));
    v_depthwise = register_module("v_depthwise", nn::Conv2d(nn::Conv2dOptions(c, c, 3).groups(c)));
    query_pool = register_module("query_pool", QueryPooling(cfg_.pool));
    temperature = register_module("temperature", Temperature(cfg_.heads, cfg_.head_width()));
    project_out = register_module("project_out", nn::Conv2d(nn::Conv2dOptions(c, c, 1)));
    ffn = register_module("ffn", ConvFFN(c, cfg_.ffn_expansion));
    init_conv_weights(*this);
}

AttentionResult SparseFilterBlockImpl::forward_with_attention(const Tensor& x) {
    if (x.dim() != 4 || x.size(1) != cfg_.channels) {
        throw ShapeError("filter block expects " + std::to_string(cfg_.channels) +
                         " channels, got " + shape_string(x));
    }
    const Tensor shared = shared_projection->forward(norm->forward(x));
    const Tensor q = query_pool->forward(conv2d_reflect(shared, q_depthwise, 1));
    const Tensor k = conv2d_reflect(shared, k_depthwise, 1);
    const Tensor v = conv2d_reflect(shared, v_depthwise, 1);
    auto attended = channel_attention(q, k, v, temperature->forward(), cfg_.heads, cfg_.activation);
    const Tensor y = x + project_out->forward(attended.output);
    return {ffn->forward(y), std::move(attended.attention)};
}

SparseFilterImpl::SparseFilterImpl(AttentionConfig cfg, int64_t layers) : cfg_(cfg) {
    cfg_.validate();
    if (layers < 1) {
        throw std::invalid_argument("filter stack needs at least one layer");
    }
    for (int64_t i = 0; i < layers; ++i) {
        blocks.push_back(register_module("block" + std::to_string(i), SparseFilterBlock(cfg_)));
    }
}

Tensor SparseFilterImpl::forward(const Tensor& x) {
    Tensor y = x;
    for (auto& block : blocks) {
        y = block->forward(y);
    }
    return y;
}

Tensor SparseFilterImpl::forward_collect(const Tensor& x, std::vector<Tensor>& attention) {
    Tensor y = x;
    for (auto& block : blocks) {
        auto result = block->forward_with_attention(y);
        attention.push_back(result.attention);
        y = result.output;
    }
    return y;
}

}  // namespace fd4mm
