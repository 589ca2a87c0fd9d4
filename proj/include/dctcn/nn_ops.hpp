#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dctcn/rng.hpp"
#include "dctcn/tensor.hpp"

namespace dctcn {

enum class Mode { Train, Eval };

/// One dilated non-causal temporal convolution. k must be odd so the
/// total zero padding d*(k-1) splits evenly across both ends.
struct ConvSpec {
    std::size_t k = 1;
    std::size_t d = 1;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;

    void validate() const;
    std::size_t pad() const { return d * (k - 1) / 2; }
};

/// x: (B,T,C_i), w: (C_o,C_i,k), bias: (C_o) -> (B,T,C_o).
///   out[b,p,o] = bias[o] + sum_c sum_j x[b, p + (j - (k-1)/2) d, c] w[o,c,j]
/// with out-of-range taps reading zero.
Tensor temporal_conv_forward(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& bias);

struct ConvGrads {
    Tensor x, w, bias;
};
ConvGrads temporal_conv_backward(const Tensor& grad_out, const Tensor& x, const ConvSpec& spec,
                                 const Tensor& w);

/// Per-row affine map over the last axis: x (..., C_i), w (C_o, C_i), bias (C_o).
/// Serves as the 1x1 convolution on (B,T,C) and as the linear head on (B,C).
Tensor pointwise_forward(const Tensor& x, const Tensor& w, const Tensor& bias);

struct AffineGrads {
    Tensor x, w, bias;
};
AffineGrads pointwise_backward(const Tensor& grad_out, const Tensor& x, const Tensor& w);

/// Squeeze-and-excitation over time. The bottleneck width is
/// ceil(channels / reduction).
struct SESpec {
    std::size_t channels = 0;
    std::size_t reduction = 16;

    void validate() const;
    std::size_t hidden() const { return (channels + reduction - 1) / reduction; }
};

struct SEWeights {
    const Tensor& wv;  // (hidden, C)
    const Tensor& bv;  // (hidden)
    const Tensor& wu;  // (C, hidden)
    const Tensor& bu;  // (C)
};

struct SECache {
    Tensor input;       // (B,T,C)
    Tensor squeezed;    // z, (B,C)
    Tensor hidden_pre;  // W_v z + b_v, (B,hidden)
    Tensor hidden;      // relu(hidden_pre)
    Tensor scale;       // s, (B,C)
};

/// out[b,t,c] = s[b,c] * U[b,t,c], s = sigmoid(W_u relu(W_v z + b_v) + b_u), z = mean_t U.
Tensor se_forward(const Tensor& u, const SESpec& spec, const SEWeights& weights, SECache* cache = nullptr);

struct SEGrads {
    Tensor u, wv, bv, wu, bu;
};
SEGrads se_backward(const Tensor& grad_out, const SECache& cache, const SEWeights& weights);

/// Batch normalization per channel over all (batch, time) positions.
struct BatchNormConfig {
    double eps = 1e-5;
    double momentum = 0.1;
};

struct BatchNormCache {
    Mode mode = Mode::Eval;
    Tensor normalized;            // xhat
    std::vector<double> inv_std;  // per channel
};

/// In train mode uses batch statistics and updates running_mean/var by
/// exponential moving average (running var uses the unbiased estimate).
/// In eval mode uses the running statistics.
Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                         Tensor& running_var, Mode mode, const BatchNormConfig& cfg = {},
                         BatchNormCache* cache = nullptr);

struct BatchNormGrads {
    Tensor x, gamma, beta;
};
BatchNormGrads batchnorm_backward(const Tensor& grad_out, const BatchNormCache& cache, const Tensor& gamma);

Tensor relu_forward(const Tensor& x);
/// Gradient through relu given the forward output.
Tensor relu_backward(const Tensor& grad_out, const Tensor& out);

/// Inverted dropout. In eval mode, or with p == 0, returns x and leaves mask empty.
Tensor dropout_forward(const Tensor& x, double p, Mode mode, Rng& rng, Tensor* mask = nullptr);
Tensor dropout_backward(const Tensor& grad_out, const Tensor& mask);

/// Row-wise softmax of (B, classes) logits.
Tensor softmax(const Tensor& logits);

struct CrossEntropy {
    double loss = 0.0;  // mean over the batch of -log p[label]
    Tensor probs;
};
CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);
Tensor softmax_cross_entropy_backward(const CrossEntropy& ce, std::span<const std::size_t> labels);

} // namespace dctcn
