#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dctcn/nn_ops.hpp"
#include "dctcn/rng.hpp"
#include "dctcn/tensor.hpp"

namespace dctcn {

struct Parameter {
    Tensor value;
    Tensor grad;

    Parameter() = default;
    explicit Parameter(Shape shape) : value(shape), grad(std::move(shape)) {}

    void zero_grad() { grad.fill(0.0); }
};

struct NamedParam {
    std::string name;
    Parameter* param;
};

struct NamedBuffer {
    std::string name;
    Tensor* buffer;
};

/// Flat view of every trainable tensor and persistent buffer of a model,
/// in a fixed registration order.
struct ParamRegistry {
    std::vector<NamedParam> params;
    std::vector<NamedBuffer> buffers;

    void add(std::string name, Parameter& p) { params.push_back({std::move(name), &p}); }
    void add_buffer(std::string name, Tensor& t) { buffers.push_back({std::move(name), &t}); }
};

struct ForwardContext {
    Mode mode = Mode::Eval;
    Rng* rng = nullptr;   // required for train-mode dropout
    bool record = false;  // keep caches for backward
};

/// Uniform on +-sqrt(1/fan_in).
void init_uniform(Tensor& w, std::size_t fan_in, Rng& rng);

class TemporalConv {
public:
    TemporalConv(const ConvSpec& spec, Rng& rng);

    Tensor forward(const Tensor& x, const ForwardContext& ctx);
    Tensor backward(const Tensor& grad_out);
    void register_params(const std::string& prefix, ParamRegistry& reg);

    const ConvSpec& spec() const { return spec_; }

    Parameter weight;  // (C_o, C_i, k)
    Parameter bias;    // (C_o)

private:
    ConvSpec spec_;
    std::optional<Tensor> input_;
};

class Pointwise {
public:
    Pointwise(std::size_t in_channels, std::size_t out_channels, Rng& rng);

    Tensor forward(const Tensor& x, const ForwardContext& ctx);
    Tensor backward(const Tensor& grad_out);
    void register_params(const std::string& prefix, ParamRegistry& reg);

    Parameter weight;  // (C_out, C_in)
    Parameter bias;

private:
    std::optional<Tensor> input_;
};

class SqueezeExcite {
public:
    SqueezeExcite(const SESpec& spec, Rng& rng);

    Tensor forward(const Tensor& x, const ForwardContext& ctx);
    Tensor backward(const Tensor& grad_out);
    void register_params(const std::string& prefix, ParamRegistry& reg);

    const SESpec& spec() const { return spec_; }

    Parameter wv, bv, wu, bu;

private:
    SEWeights weights() const { return {wv.value, bv.value, wu.value, bu.value}; }

    SESpec spec_;
    std::optional<SECache> cache_;
};

class BatchNorm {
public:
    explicit BatchNorm(std::size_t channels, BatchNormConfig cfg = {});

    Tensor forward(const Tensor& x, const ForwardContext& ctx);
    Tensor backward(const Tensor& grad_out);
    void register_params(const std::string& prefix, ParamRegistry& reg);

    Parameter gamma, beta;
    Tensor running_mean, running_var;

private:
    BatchNormConfig cfg_;
    std::optional<BatchNormCache> cache_;
};

class Dropout {
public:
    explicit Dropout(double p);

    Tensor forward(const Tensor& x, const ForwardContext& ctx);
    Tensor backward(const Tensor& grad_out);

    double p() const { return p_; }

private:
    double p_;
    std::optional<Tensor> mask_;
};

} // namespace dctcn
