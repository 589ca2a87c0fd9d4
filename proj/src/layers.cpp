#include "dctcn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace dctcn {

namespace {

template <class T>
const T& cached(const std::optional<T>& c, const char* layer) {
    if (!c) throw std::logic_error(std::string(layer) + ": backward called without a recorded forward");
    return *c;
}

} // namespace

void init_uniform(Tensor& w, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
}

TemporalConv::TemporalConv(const ConvSpec& spec, Rng& rng)
    : weight({spec.out_channels, spec.in_channels, spec.k}), bias({spec.out_channels}), spec_(spec) {
    spec_.validate();
    init_uniform(weight.value, spec.in_channels * spec.k, rng);
}

Tensor TemporalConv::forward(const Tensor& x, const ForwardContext& ctx) {
    Tensor out = temporal_conv_forward(x, spec_, weight.value, bias.value);
    if (ctx.record) input_ = x;
    else input_.reset();
    return out;
}

Tensor TemporalConv::backward(const Tensor& grad_out) {
    ConvGrads g = temporal_conv_backward(grad_out, cached(input_, "temporal conv"), spec_, weight.value);
    add_inplace(weight.grad, g.w);
    add_inplace(bias.grad, g.bias);
    return std::move(g.x);
}

void TemporalConv::register_params(const std::string& prefix, ParamRegistry& reg) {
    reg.add(prefix + ".w", weight);
    reg.add(prefix + ".b", bias);
}

Pointwise::Pointwise(std::size_t in_channels, std::size_t out_channels, Rng& rng)
    : weight({out_channels, in_channels}), bias({out_channels}) {
    init_uniform(weight.value, in_channels, rng);
}

Tensor Pointwise::forward(const Tensor& x, const ForwardContext& ctx) {
    Tensor out = pointwise_forward(x, weight.value, bias.value);
    if (ctx.record) input_ = x;
    else input_.reset();
    return out;
}

Tensor Pointwise::backward(const Tensor& grad_out) {
    AffineGrads g = pointwise_backward(grad_out, cached(input_, "pointwise"), weight.value);
    add_inplace(weight.grad, g.w);
    add_inplace(bias.grad, g.bias);
    return std::move(g.x);
}

void Pointwise::register_params(const std::string& prefix, ParamRegistry& reg) {
    reg.add(prefix + ".w", weight);
    reg.add(prefix + ".b", bias);
}

SqueezeExcite::SqueezeExcite(const SESpec& spec, Rng& rng)
    : wv({spec.hidden(), spec.channels}), bv({spec.hidden()}), wu({spec.channels, spec.hidden()}),
      bu({spec.channels}), spec_(spec) {
    spec_.validate();
    init_uniform(wv.value, spec.channels, rng);
    init_uniform(wu.value, spec.hidden(), rng);
}

Tensor SqueezeExcite::forward(const Tensor& x, const ForwardContext& ctx) {
    if (!ctx.record) {
        cache_.reset();
        return se_forward(x, spec_, weights());
    }
    SECache c;
    Tensor out = se_forward(x, spec_, weights(), &c);
    cache_ = std::move(c);
    return out;
}

Tensor SqueezeExcite::backward(const Tensor& grad_out) {
    SEGrads g = se_backward(grad_out, cached(cache_, "squeeze-excite"), weights());
    add_inplace(wv.grad, g.wv);
    add_inplace(bv.grad, g.bv);
    add_inplace(wu.grad, g.wu);
    add_inplace(bu.grad, g.bu);
    return std::move(g.u);
}

void SqueezeExcite::register_params(const std::string& prefix, ParamRegistry& reg) {
    reg.add(prefix + ".wv", wv);
    reg.add(prefix + ".bv", bv);
    reg.add(prefix + ".wu", wu);
    reg.add(prefix + ".bu", bu);
}

BatchNorm::BatchNorm(std::size_t channels, BatchNormConfig cfg)
    : gamma({channels}), beta({channels}), running_mean({channels}, 0.0), running_var({channels}, 1.0),
      cfg_(cfg) {
    gamma.value.fill(1.0);
}

Tensor BatchNorm::forward(const Tensor& x, const ForwardContext& ctx) {
    if (!ctx.record) {
        cache_.reset();
        return batchnorm_forward(x, gamma.value, beta.value, running_mean, running_var, ctx.mode, cfg_);
    }
    BatchNormCache c;
    Tensor out = batchnorm_forward(x, gamma.value, beta.value, running_mean, running_var, ctx.mode, cfg_, &c);
    cache_ = std::move(c);
    return out;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
    BatchNormGrads g = batchnorm_backward(grad_out, cached(cache_, "batchnorm"), gamma.value);
    add_inplace(gamma.grad, g.gamma);
    add_inplace(beta.grad, g.beta);
    return std::move(g.x);
}

void BatchNorm::register_params(const std::string& prefix, ParamRegistry& reg) {
    reg.add(prefix + ".gamma", gamma);
    reg.add(prefix + ".beta", beta);
    reg.add_buffer(prefix + ".running_mean", running_mean);
    reg.add_buffer(prefix + ".running_var", running_var);
}

Dropout::Dropout(double p) : p_(p) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout probability must lie in [0, 1)");
}

Tensor Dropout::forward(const Tensor& x, const ForwardContext& ctx) {
    if (ctx.mode == Mode::Eval || p_ == 0.0) {
        mask_ = Tensor();
        return x;
    }
    if (!ctx.rng) throw std::logic_error("dropout in train mode needs an Rng");
    Tensor mask;
    Tensor out = dropout_forward(x, p_, ctx.mode, *ctx.rng, &mask);
    mask_ = std::move(mask);
    return out;
}

Tensor Dropout::backward(const Tensor& grad_out) {
    return dropout_backward(grad_out, cached(mask_, "dropout"));
}

} // namespace dctcn
