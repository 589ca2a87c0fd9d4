#include "dctcn/nn_ops.hpp"

#include <algorithm>
#include <cmath>

#include "dctcn/errors.hpp"

namespace dctcn {

namespace {

void require_shape(const Tensor& t, const Shape& expected, const char* what) {
    if (t.shape() != expected) {
        throw ShapeError(std::string(what) + ": expected " + shape_str(expected) + ", got " +
                         shape_str(t.shape()));
    }
}

double sigmoid(double a) {
    return 1.0 / (1.0 + std::exp(-a));
}

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

// (C_o, C_i, k) -> (k, C_o, C_i) so the channel dot product is contiguous.
std::vector<double> taps_major(const Tensor& w, std::size_t co, std::size_t ci, std::size_t k) {
    std::vector<double> wt(w.size());
    for (std::size_t o = 0; o < co; ++o)
        for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t j = 0; j < k; ++j) wt[(j * co + o) * ci + c] = w[(o * ci + c) * k + j];
    return wt;
}

} // namespace

void ConvSpec::validate() const {
    if (k == 0 || d == 0) throw ShapeError("ConvSpec: k and d must be positive");
    if (k % 2 == 0) throw ShapeError("ConvSpec: filter size must be odd, got k=" + std::to_string(k));
    if (in_channels == 0 || out_channels == 0) throw ShapeError("ConvSpec: channel counts must be positive");
}

Tensor temporal_conv_forward(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& bias) {
    spec.validate();
    require_rank(x, 3, "temporal_conv_forward");
    const std::size_t batch = x.dim(0), steps = x.dim(1), ci = spec.in_channels, co = spec.out_channels;
    const std::size_t k = spec.k;
    if (x.dim(2) != ci) throw ShapeError("temporal_conv_forward: input " + shape_str(x.shape()) +
                                         " does not have " + std::to_string(ci) + " channels");
    if (steps == 0) throw ShapeError("temporal_conv_forward: empty time axis");
    require_shape(w, {co, ci, k}, "temporal_conv_forward weight");
    require_shape(bias, {co}, "temporal_conv_forward bias");

    const auto wt = taps_major(w, co, ci, k);
    const auto pad = static_cast<std::ptrdiff_t>(spec.pad());
    const auto dil = static_cast<std::ptrdiff_t>(spec.d);
    Tensor out({batch, steps, co});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t p = 0; p < steps; ++p) {
            double* orow = &out.at(b, p, 0);
            for (std::size_t o = 0; o < co; ++o) orow[o] = bias[o];
            for (std::size_t j = 0; j < k; ++j) {
                const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(p) + static_cast<std::ptrdiff_t>(j) * dil - pad;
                if (t < 0 || t >= static_cast<std::ptrdiff_t>(steps)) continue;
                const double* xrow = &x.at(b, static_cast<std::size_t>(t), 0);
                const double* wj = &wt[j * co * ci];
                for (std::size_t o = 0; o < co; ++o) orow[o] += dot(xrow, wj + o * ci, ci);
            }
        }
    }
    return out;
}

ConvGrads temporal_conv_backward(const Tensor& grad_out, const Tensor& x, const ConvSpec& spec,
                                 const Tensor& w) {
    spec.validate();
    require_rank(x, 3, "temporal_conv_backward");
    const std::size_t batch = x.dim(0), steps = x.dim(1), ci = spec.in_channels, co = spec.out_channels;
    const std::size_t k = spec.k;
    require_shape(grad_out, {batch, steps, co}, "temporal_conv_backward grad");
    require_shape(w, {co, ci, k}, "temporal_conv_backward weight");

    const auto wt = taps_major(w, co, ci, k);
    std::vector<double> gwt(wt.size(), 0.0);
    ConvGrads g{Tensor(x.shape()), Tensor(w.shape()), Tensor({co})};
    const auto pad = static_cast<std::ptrdiff_t>(spec.pad());
    const auto dil = static_cast<std::ptrdiff_t>(spec.d);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t p = 0; p < steps; ++p) {
            const double* grow = &grad_out.at(b, p, 0);
            for (std::size_t o = 0; o < co; ++o) g.bias[o] += grow[o];
            for (std::size_t j = 0; j < k; ++j) {
                const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(p) + static_cast<std::ptrdiff_t>(j) * dil - pad;
                if (t < 0 || t >= static_cast<std::ptrdiff_t>(steps)) continue;
                const double* xrow = &x.at(b, static_cast<std::size_t>(t), 0);
                double* gxrow = &g.x.at(b, static_cast<std::size_t>(t), 0);
                for (std::size_t o = 0; o < co; ++o) {
                    const double go = grow[o];
                    if (go == 0.0) continue;
                    const double* wrow = &wt[(j * co + o) * ci];
                    double* gwrow = &gwt[(j * co + o) * ci];
                    for (std::size_t c = 0; c < ci; ++c) {
                        gxrow[c] += go * wrow[c];
                        gwrow[c] += go * xrow[c];
                    }
                }
            }
        }
    }
    for (std::size_t o = 0; o < co; ++o)
        for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t j = 0; j < k; ++j) g.w[(o * ci + c) * k + j] = gwt[(j * co + o) * ci + c];
    return g;
}

Tensor pointwise_forward(const Tensor& x, const Tensor& w, const Tensor& bias) {
    require_rank(w, 2, "pointwise weight");
    const std::size_t co = w.dim(0), ci = w.dim(1);
    if (x.rank() < 2 || x.shape().back() != ci)
        throw ShapeError("pointwise_forward: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
    require_shape(bias, {co}, "pointwise bias");
    const std::size_t rows = x.size() / ci;
    Shape out_shape = x.shape();
    out_shape.back() = co;
    Tensor out(out_shape);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xrow = &x[r * ci];
        for (std::size_t o = 0; o < co; ++o) out[r * co + o] = bias[o] + dot(xrow, &w[o * ci], ci);
    }
    return out;
}

AffineGrads pointwise_backward(const Tensor& grad_out, const Tensor& x, const Tensor& w) {
    require_rank(w, 2, "pointwise weight");
    const std::size_t co = w.dim(0), ci = w.dim(1);
    Shape out_shape = x.shape();
    out_shape.back() = co;
    require_shape(grad_out, out_shape, "pointwise_backward grad");
    const std::size_t rows = x.size() / ci;
    AffineGrads g{Tensor(x.shape()), Tensor(w.shape()), Tensor({co})};
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xrow = &x[r * ci];
        double* gxrow = &g.x[r * ci];
        for (std::size_t o = 0; o < co; ++o) {
            const double go = grad_out[r * co + o];
            if (go == 0.0) continue;
            g.bias[o] += go;
            const double* wrow = &w[o * ci];
            double* gwrow = &g.w[o * ci];
            for (std::size_t c = 0; c < ci; ++c) {
                gxrow[c] += go * wrow[c];
                gwrow[c] += go * xrow[c];
            }
        }
    }
    return g;
}

void SESpec::validate() const {
    if (channels == 0) throw ShapeError("SESpec: channels must be positive");
    if (reduction == 0) throw ShapeError("SESpec: reduction ratio must be positive");
}

Tensor se_forward(const Tensor& u, const SESpec& spec, const SEWeights& weights, SECache* cache) {
    spec.validate();
    require_rank(u, 3, "se_forward");
    const std::size_t batch = u.dim(0), steps = u.dim(1), channels = spec.channels, hidden = spec.hidden();
    if (u.dim(2) != channels)
        throw ShapeError("se_forward: input " + shape_str(u.shape()) + " vs " + std::to_string(channels) + " channels");
    require_shape(weights.wv, {hidden, channels}, "se W_v");
    require_shape(weights.bv, {hidden}, "se b_v");
    require_shape(weights.wu, {channels, hidden}, "se W_u");
    require_shape(weights.bu, {channels}, "se b_u");

    Tensor z = global_mean_over_time(u);
    Tensor hidden_pre = pointwise_forward(z, weights.wv, weights.bv);
    Tensor h = relu_forward(hidden_pre);
    Tensor s = pointwise_forward(h, weights.wu, weights.bu);
    for (double& v : s.data()) v = sigmoid(v);

    Tensor out(u.shape());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t c = 0; c < channels; ++c) out.at(b, t, c) = s[b * channels + c] * u.at(b, t, c);

    if (cache) *cache = SECache{u, std::move(z), std::move(hidden_pre), std::move(h), std::move(s)};
    return out;
}

SEGrads se_backward(const Tensor& grad_out, const SECache& cache, const SEWeights& weights) {
    const Tensor& u = cache.input;
    require_shape(grad_out, u.shape(), "se_backward grad");
    const std::size_t batch = u.dim(0), steps = u.dim(1), channels = u.dim(2);

    // Direct path through the channel-wise multiplication.
    Tensor gu(u.shape());
    Tensor gscale({batch, channels});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t c = 0; c < channels; ++c) {
                const double g = grad_out.at(b, t, c);
                gu.at(b, t, c) = g * cache.scale[b * channels + c];
                gscale[b * channels + c] += g * u.at(b, t, c);
            }

    // Excitation path back to the squeezed descriptor.
    Tensor gexc = gscale;
    for (std::size_t i = 0; i < gexc.size(); ++i) {
        const double s = cache.scale[i];
        gexc[i] *= s * (1.0 - s);
    }
    AffineGrads up = pointwise_backward(gexc, cache.hidden, weights.wu);
    Tensor ghidden_pre = relu_backward(up.x, cache.hidden);
    AffineGrads down = pointwise_backward(ghidden_pre, cache.squeezed, weights.wv);

    const double inv_t = 1.0 / static_cast<double>(steps);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t c = 0; c < channels; ++c) gu.at(b, t, c) += down.x[b * channels + c] * inv_t;

    return SEGrads{std::move(gu), std::move(down.w), std::move(down.bias), std::move(up.w), std::move(up.bias)};
}

Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                         Tensor& running_var, Mode mode, const BatchNormConfig& cfg, BatchNormCache* cache) {
    require_rank(x, 3, "batchnorm_forward");
    const std::size_t channels = x.dim(2), rows = x.dim(0) * x.dim(1);
    for (const Tensor* t : {&gamma, &beta, static_cast<const Tensor*>(&running_mean), static_cast<const Tensor*>(&running_var)})
        require_shape(*t, {channels}, "batchnorm parameter");

    std::vector<double> mean(channels), var(channels);
    if (mode == Mode::Train) {
        if (rows < 2) throw ShapeError("batchnorm_forward: train mode needs at least two positions per channel");
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < channels; ++c) mean[c] += x[r * channels + c];
        for (double& m : mean) m /= static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < channels; ++c) {
                const double dev = x[r * channels + c] - mean[c];
                var[c] += dev * dev;
            }
        for (double& v : var) v /= static_cast<double>(rows);
        const double unbias = static_cast<double>(rows) / static_cast<double>(rows - 1);
        for (std::size_t c = 0; c < channels; ++c) {
            running_mean[c] = (1.0 - cfg.momentum) * running_mean[c] + cfg.momentum * mean[c];
            running_var[c] = (1.0 - cfg.momentum) * running_var[c] + cfg.momentum * var[c] * unbias;
        }
    } else {
        for (std::size_t c = 0; c < channels; ++c) {
            mean[c] = running_mean[c];
            var[c] = running_var[c];
        }
    }

    std::vector<double> inv_std(channels);
    for (std::size_t c = 0; c < channels; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + cfg.eps);
    Tensor xhat(x.shape()), out(x.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t i = r * channels + c;
            xhat[i] = (x[i] - mean[c]) * inv_std[c];
            out[i] = gamma[c] * xhat[i] + beta[c];
        }
    if (cache) *cache = BatchNormCache{mode, std::move(xhat), std::move(inv_std)};
    return out;
}

BatchNormGrads batchnorm_backward(const Tensor& grad_out, const BatchNormCache& cache, const Tensor& gamma) {
    const Tensor& xhat = cache.normalized;
    require_shape(grad_out, xhat.shape(), "batchnorm_backward grad");
    const std::size_t channels = xhat.dim(2), rows = xhat.dim(0) * xhat.dim(1);
    BatchNormGrads g{Tensor(xhat.shape()), Tensor({channels}), Tensor({channels})};
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t i = r * channels + c;
            g.beta[c] += grad_out[i];
            g.gamma[c] += grad_out[i] * xhat[i];
        }
    if (cache.mode == Mode::Eval) {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < channels; ++c) {
                const std::size_t i = r * channels + c;
                g.x[i] = grad_out[i] * gamma[c] * cache.inv_std[c];
            }
        return g;
    }
    const double n = static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t i = r * channels + c;
            g.x[i] = gamma[c] * cache.inv_std[c] / n *
                     (n * grad_out[i] - g.beta[c] - xhat[i] * g.gamma[c]);
        }
    return g;
}

Tensor relu_forward(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& out) {
    require_shape(grad_out, out.shape(), "relu_backward");
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (out[i] <= 0.0) g[i] = 0.0;
    return g;
}

Tensor dropout_forward(const Tensor& x, double p, Mode mode, Rng& rng, Tensor* mask) {
    if (p < 0.0 || p >= 1.0) throw ShapeError("dropout probability must lie in [0, 1)");
    if (mask) *mask = Tensor();
    if (mode == Mode::Eval || p == 0.0) return x;
    Tensor m(x.shape());
    const double keep_scale = 1.0 / (1.0 - p);
    for (double& v : m.data()) v = rng.bernoulli(p) ? 0.0 : keep_scale;
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= m[i];
    if (mask) *mask = std::move(m);
    return out;
}

Tensor dropout_backward(const Tensor& grad_out, const Tensor& mask) {
    if (mask.empty()) return grad_out;
    require_shape(grad_out, mask.shape(), "dropout_backward");
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
    return g;
}

Tensor softmax(const Tensor& logits) {
    require_rank(logits, 2, "softmax");
    const std::size_t batch = logits.dim(0), classes = logits.dim(1);
    Tensor p(logits.shape());
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = &logits[b * classes];
        const double mx = *std::max_element(row, row + classes);
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) sum += p[b * classes + c] = std::exp(row[c] - mx);
        for (std::size_t c = 0; c < classes; ++c) p[b * classes + c] /= sum;
    }
    return p;
}

CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
    require_rank(logits, 2, "softmax_cross_entropy");
    const std::size_t batch = logits.dim(0), classes = logits.dim(1);
    if (labels.size() != batch) throw ShapeError("softmax_cross_entropy: label count mismatch");
    CrossEntropy ce;
    ce.probs = softmax(logits);
    for (std::size_t b = 0; b < batch; ++b) {
        if (labels[b] >= classes)
            throw ShapeError("class index " + std::to_string(labels[b]) + " out of range for " +
                             std::to_string(classes) + " classes");
        // log-sum-exp form avoids log(0) for confident wrong predictions
        const double* row = &logits[b * classes];
        const double mx = *std::max_element(row, row + classes);
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) sum += std::exp(row[c] - mx);
        ce.loss += mx + std::log(sum) - row[labels[b]];
    }
    ce.loss /= static_cast<double>(batch);
    return ce;
}

Tensor softmax_cross_entropy_backward(const CrossEntropy& ce, std::span<const std::size_t> labels) {
    const std::size_t batch = ce.probs.dim(0), classes = ce.probs.dim(1);
    Tensor g = ce.probs;
    for (std::size_t b = 0; b < batch; ++b) g[b * classes + labels[b]] -= 1.0;
    scale_inplace(g, 1.0 / static_cast<double>(batch));
    return g;
}

} // namespace dctcn
