#pragma once

// Channel ("transposed") attention blocks used as the sparse low-pass filter on
// the motion field and the sparse high-pass filters on each detail band.
//
// Per head, Q, K and V are arranged (C', positions). The attention matrix is
// (C', C'): positions are the contraction axis. With ReLU activation the matrix
// is sparse and unnormalized; the softmax variant is kept as an ablation arm.

#include "fd4mm/tensor_ops.hpp"

#include <vector>

namespace fd4mm {

enum class QueryPool { Average, Max };
enum class AttentionActivation { Relu, Softmax };

struct AttentionConfig {
    int64_t channels = 96;
    int64_t heads = 8;
    QueryPool pool = QueryPool::Average;
    AttentionActivation activation = AttentionActivation::Relu;
    int64_t ffn_expansion = 2;

    void validate() const;
    int64_t head_width() const { return channels / heads; }
};

/// Output of one attention evaluation, with the per-head attention matrices
/// (B, heads, C', C') kept for inspection.
struct AttentionResult {
    Tensor output;
    Tensor attention;
};

/// Computes activation(norm(q) norm(k)^T / tau) v per head. q, k, v are
/// (B, C, H, W); temperature is (heads,) and positive.
AttentionResult channel_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                  const Tensor& temperature, int64_t heads,
                                  AttentionActivation activation);

/// Layer normalization across channels at every pixel.
class ChannelNormImpl : public torch::nn::Module {
public:
    explicit ChannelNormImpl(int64_t channels);
    Tensor forward(const Tensor& x);

    Tensor weight;
    Tensor bias;
};
TORCH_MODULE(ChannelNorm);

/// Positive per-head temperature stored as softplus(raw), initialized to sqrt(C').
class TemperatureImpl : public torch::nn::Module {
public:
    TemperatureImpl(int64_t heads, int64_t head_width);
    Tensor forward();

    Tensor raw;
};
TORCH_MODULE(Temperature);

/// Pre-norm convolutional feed-forward: x + project(GELU(dw3x3(expand(norm(x))))).
class ConvFFNImpl : public torch::nn::Module {
public:
    ConvFFNImpl(int64_t channels, int64_t expansion);
    Tensor forward(const Tensor& x);

    ChannelNorm norm{nullptr};
    torch::nn::Conv2d expand{nullptr};
    torch::nn::Conv2d depthwise{nullptr};
    torch::nn::Conv2d project{nullptr};
};
TORCH_MODULE(ConvFFN);

/// 3x3 stride-1 average or max pooling with mirrored borders. Parameter-free:
/// a per-channel gain here would be cancelled by the query normalization.
class QueryPoolingImpl : public torch::nn::Module {
public:
    explicit QueryPoolingImpl(QueryPool mode);
    Tensor forward(const Tensor& x);

private:
    QueryPool mode_;
};
TORCH_MODULE(QueryPooling);

/// One filter block: attention with residual, then ConvFFN with residual.
class SparseFilterBlockImpl : public torch::nn::Module {
public:
    explicit SparseFilterBlockImpl(AttentionConfig cfg);

    Tensor forward(const Tensor& x) { return forward_with_attention(x).output; }
    AttentionResult forward_with_attention(const Tensor& x);

    const AttentionConfig& config() const { return cfg_; }

    ChannelNorm norm{nullptr};
    torch::nn::Conv2d shared_projection{nullptr};  // 1x1, shared by Q, K, V
    torch::nn::Conv2d q_depthwise{nullptr};
    torch::nn::Conv2d k_depthwise{nullptr};
    torch::nn::Conv2d v_depthwise{nullptr};
    QueryPooling query_pool{nullptr};
    Temperature temperature{nullptr};
    torch::nn::Conv2d project_out{nullptr};
    ConvFFN ffn{nullptr};

private:
    AttentionConfig cfg_;
};
TORCH_MODULE(SparseFilterBlock);

/// A stack of filter blocks: low-pass (average-pooled queries) for the motion
/// field, high-pass (max-pooled queries) for the detail bands.
class SparseFilterImpl : public torch::nn::Module {
public:
    SparseFilterImpl(AttentionConfig cfg, int64_t layers);

    Tensor forward(const Tensor& x);

    /// Runs the stack and collects every block's attention matrix.
    Tensor forward_collect(const Tensor& x, std::vector<Tensor>& attention);

    int64_t layers() const { return static_cast<int64_t>(blocks.size()); }
    const AttentionConfig& config() const { return cfg_; }

    std::vector<SparseFilterBlock> blocks;

private:
    AttentionConfig cfg_;
};
TORCH_MODULE(SparseFilter);

}  // namespace fd4mm
