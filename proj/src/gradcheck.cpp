#include "dctcn/gradcheck.hpp"

#include <cmath>

#include "dctcn/blocks.hpp"
#include "dctcn/nn_ops.hpp"

namespace dctcn {

double relative_error(const Tensor& analytic, const Tensor& numeric, double floor) {
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        if (std::isnan(numeric[i])) continue;
        const double a = analytic[i], n = numeric[i];
        diff += (a - n) * (a - n);
        na += a * a;
        nn += n * n;
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
}

Tensor numeric_gradient(const std::function<double()>& loss, Tensor& x, double h, double kink_tol) {
    Tensor g(x.shape());
    auto central = [&](std::size_t i, double step) {
        const double orig = x[i];
        x[i] = orig + step;
        const double up = loss();
        x[i] = orig - step;
        const double down = loss();
        x[i] = orig;
        return (up - down) / (2.0 * step);
    };
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double coarse = central(i, h), fine = central(i, h / 2);
        g[i] = std::abs(coarse - fine) > kink_tol * std::max(1.0, std::abs(fine)) ? NAN : fine;
    }
    return g;
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

double project(const Tensor& y, const Tensor& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
}

struct Accumulator {
    GradCheckResult result;
    double tol;

    void check(const Tensor& analytic, const Tensor& numeric) {
        result.elements += numeric.size();
        for (double v : numeric.data()) result.skipped += std::isnan(v);
        result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic, numeric));
    }

    GradCheckResult finish() {
        result.passed = result.max_rel_error < tol && result.skipped * 100 <= result.elements;
        return result;
    }
};

std::size_t odd_k(Rng& rng) {
    return 2 * rng.below(3) + 1;
}

} // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, std::size_t trials, double tol) {
    std::vector<GradCheckResult> results;
    auto suite = [&](const std::string& name, std::uint64_t tag, auto&& trial) {
        Accumulator acc{{name, trials}, tol};
        for (std::size_t i = 0; i < trials; ++i) {
            Rng rng(Rng::derive(seed, {tag, i}));
            trial(rng, acc);
        }
        results.push_back(acc.finish());
    };

    suite("temporal_conv", 1, [](Rng& rng, Accumulator& acc) {
        const ConvSpec spec{odd_k(rng), 1 + rng.below(3), 1 + rng.below(6), 1 + rng.below(6)};
        const std::size_t b = 1 + rng.below(3), t = 1 + rng.below(9);
        Tensor x = random_tensor({b, t, spec.in_channels}, rng);
        Tensor w = random_tensor({spec.out_channels, spec.in_channels, spec.k}, rng);
        Tensor bias = random_tensor({spec.out_channels}, rng);
        const Tensor r = random_tensor({b, t, spec.out_channels}, rng);
        auto loss = [&] { return project(temporal_conv_forward(x, spec, w, bias), r); };
        const ConvGrads g = temporal_conv_backward(r, x, spec, w);
        acc.check(g.x, numeric_gradient(loss, x));
        acc.check(g.w, numeric_gradient(loss, w));
        acc.check(g.bias, numeric_gradient(loss, bias));
    });

    suite("pointwise_conv", 2, [](Rng& rng, Accumulator& acc) {
        const std::size_t b = 1 + rng.below(3), t = 1 + rng.below(9), ci = 1 + rng.below(6), co = 1 + rng.below(6);
        Tensor x = random_tensor({b, t, ci}, rng), w = random_tensor({co, ci}, rng), bias = random_tensor({co}, rng);
        const Tensor r = random_tensor({b, t, co}, rng);
        auto loss = [&] { return project(pointwise_forward(x, w, bias), r); };
        const AffineGrads g = pointwise_backward(r, x, w);
        acc.check(g.x, numeric_gradient(loss, x));
        acc.check(g.w, numeric_gradient(loss, w));
        acc.check(g.bias, numeric_gradient(loss, bias));
    });

    suite("squeeze_excite", 3, [](Rng& rng, Accumulator& acc) {
        const std::size_t b = 1 + rng.below(3), t = 1 + rng.below(9), c = 1 + rng.below(6);
        const SESpec spec{c, 1 + rng.below(3)};
        Tensor u = random_tensor({b, t, c}, rng);
        Tensor wv = random_tensor({spec.hidden(), c}, rng), bv = random_tensor({spec.hidden()}, rng);
        Tensor wu = random_tensor({c, spec.hidden()}, rng), bu = random_tensor({c}, rng);
        const Tensor r = random_tensor({b, t, c}, rng);
        auto loss = [&] { return project(se_forward(u, spec, {wv, bv, wu, bu}), r); };
        SECache cache;
        se_forward(u, spec, {wv, bv, wu, bu}, &cache);
        const SEGrads g = se_backward(r, cache, {wv, bv, wu, bu});
        acc.check(g.u, numeric_gradient(loss, u));
        acc.check(g.wv, numeric_gradient(loss, wv));
        acc.check(g.bv, numeric_gradient(loss, bv));
        acc.check(g.wu, numeric_gradient(loss, wu));
        acc.check(g.bu, numeric_gradient(loss, bu));
    });

    for (Mode mode : {Mode::Train, Mode::Eval}) {
        const bool train = mode == Mode::Train;
        suite(train ? "batchnorm_train" : "batchnorm_eval", train ? 4 : 5, [mode](Rng& rng, Accumulator& acc) {
            const std::size_t b = 1 + rng.below(3), t = 2 + rng.below(8), c = 1 + rng.below(6);
            Tensor x = random_tensor({b, t, c}, rng), gamma = random_tensor({c}, rng, 0.5, 1.5);
            Tensor beta = random_tensor({c}, rng);
            const Tensor mean0 = random_tensor({c}, rng), var0 = random_tensor({c}, rng, 0.5, 2.0);
            const Tensor r = random_tensor({b, t, c}, rng);
            auto loss = [&] {
                Tensor m = mean0, v = var0;
                return project(batchnorm_forward(x, gamma, beta, m, v, mode), r);
            };
            Tensor m = mean0, v = var0;
            BatchNormCache cache;
            batchnorm_forward(x, gamma, beta, m, v, mode, {}, &cache);
            const BatchNormGrads g = batchnorm_backward(r, cache, gamma);
            acc.check(g.x, numeric_gradient(loss, x));
            acc.check(g.gamma, numeric_gradient(loss, gamma));
            acc.check(g.beta, numeric_gradient(loss, beta));
        });
    }

    suite("relu", 6, [](Rng& rng, Accumulator& acc) {
        const std::size_t n = 1 + rng.below(9);
        Tensor x({n, 1 + rng.below(6)});
        for (double& v : x.data()) v = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.1, 1.0);
        const Tensor r = random_tensor(x.shape(), rng);
        auto loss = [&] { return project(relu_forward(x), r); };
        acc.check(relu_backward(r, relu_forward(x)), numeric_gradient(loss, x));
    });

    suite("dropout", 7, [](Rng& rng, Accumulator& acc) {
        Tensor x = random_tensor({1 + rng.below(3), 1 + rng.below(9), 1 + rng.below(6)}, rng);
        const Tensor r = random_tensor(x.shape(), rng);
        const std::uint64_t mask_seed = rng.next_u64();
        auto loss = [&] {
            Rng m(mask_seed);
            return project(dropout_forward(x, 0.2, Mode::Train, m), r);
        };
        Rng m(mask_seed);
        Tensor mask;
        dropout_forward(x, 0.2, Mode::Train, m, &mask);
        acc.check(dropout_backward(r, mask), numeric_gradient(loss, x));
    });

    suite("linear", 8, [](Rng& rng, Accumulator& acc) {
        const std::size_t b = 1 + rng.below(3), ci = 1 + rng.below(6), co = 1 + rng.below(6);
        Tensor x = random_tensor({b, ci}, rng), w = random_tensor({co, ci}, rng), bias = random_tensor({co}, rng);
        const Tensor r = random_tensor({b, co}, rng);
        auto loss = [&] { return project(pointwise_forward(x, w, bias), r); };
        const AffineGrads g = pointwise_backward(r, x, w);
        acc.check(g.x, numeric_gradient(loss, x));
        acc.check(g.w, numeric_gradient(loss, w));
        acc.check(g.bias, numeric_gradient(loss, bias));
    });

    suite("softmax_cross_entropy", 9, [](Rng& rng, Accumulator& acc) {
        const std::size_t b = 1 + rng.below(3), classes = 2 + rng.below(5);
        Tensor logits = random_tensor({b, classes}, rng, -3.0, 3.0);
        std::vector<std::size_t> labels;
        for (std::size_t i = 0; i < b; ++i) labels.push_back(rng.below(classes));
        auto loss = [&] { return softmax_cross_entropy(logits, labels).loss; };
        acc.check(softmax_cross_entropy_backward(softmax_cross_entropy(logits, labels), labels),
                  numeric_gradient(loss, logits));
    });

    suite("one_block_model", 10, [](Rng& rng, Accumulator& acc) {
        BlockSpec bs;
        bs.variant = rng.bernoulli(0.5) ? BlockVariant::FullyDense : BlockVariant::PartiallyDense;
        bs.filter_sizes = rng.bernoulli(0.5) ? std::vector<std::size_t>{3, 5} : std::vector<std::size_t>{1, 3};
        bs.dilations = rng.bernoulli(0.5) ? std::vector<std::size_t>{1, 2} : std::vector<std::size_t>{1, 4};
        bs.growth_rate = 1 + rng.below(3);
        bs.reduce_channels = 2 + rng.below(4);
        bs.se_reduction = 2;
        NetworkSpec ns{{bs}, 1 + rng.below(6), 2 + rng.below(4), 9};
        Model model(ns, rng);
        const std::size_t b = 1 + rng.below(3), t = 3 + rng.below(7);
        Tensor x = random_tensor({b, t, ns.input_channels}, rng);
        std::vector<std::size_t> labels;
        for (std::size_t i = 0; i < b; ++i) labels.push_back(rng.below(ns.num_classes));
        const std::uint64_t dropout_seed = rng.next_u64();

        auto run = [&](bool record) {
            Rng d(dropout_seed);
            return softmax_cross_entropy(model.forward(x, ForwardContext{Mode::Train, &d, record}), labels);
        };
        auto loss = [&] { return run(false).loss; };
        model.zero_grad();
        const CrossEntropy ce = run(true);
        const Tensor gx = model.backward(softmax_cross_entropy_backward(ce, labels));
        acc.check(gx, numeric_gradient(loss, x));
        for (const auto& p : model.registry().params) acc.check(p.param->grad, numeric_gradient(loss, p.param->value));
    });

    return results;
}

} // namespace dctcn
