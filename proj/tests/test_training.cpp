#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dctcn/config.hpp"
#include "dctcn/errors.hpp"
#include "dctcn/experiment.hpp"
#include "dctcn/training.hpp"
#include "test_support.hpp"

using namespace dctcn;

namespace {

// Scalar re-statement of decoupled-decay Adam.
struct ScalarAdamW {
    double m = 0, v = 0;
    int t = 0;
    double step(double w, double g, double lr, double wd) {
        ++t;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
        return w - lr * (mh / (std::sqrt(vh) + 1e-8) + wd * w);
    }
};

RunConfig tiny_run() {
    RunConfig cfg = default_run_config();
    cfg.data.train_samples = 32;
    cfg.data.val_samples = 16;
    cfg.data.test_samples = 16;
    cfg.data.feature_channels = 8;
    cfg.blocks.resize(1);
    cfg.blocks[0].growth_rate = 4;
    cfg.blocks[0].reduce_channels = 8;
    cfg.blocks[0].se_reduction = 4;
    cfg.train.epochs = 3;
    cfg.train.batch_size = 8;
    cfg.train.lr = 3e-3;
    cfg.train.max_drop_frames = 2;
    cfg.seed = 5;
    return cfg;
}

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("dctcn_train_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("cosine learning rate schedule") {
    CHECK(cosine_lr(0, 100, 0.1) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(cosine_lr(50, 100, 0.1) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(std::abs(cosine_lr(100, 100, 0.1)) < 1e-15);
    for (std::size_t s = 0; s <= 100; ++s) {
        CHECK(cosine_lr(s, 100, 0.3) == doctest::Approx(0.3 * (1 + std::cos(std::numbers::pi * s / 100.0)) / 2));
        if (s > 0) CHECK(cosine_lr(s, 100, 0.3) <= cosine_lr(s - 1, 100, 0.3));
    }
    CHECK_THROWS_AS(cosine_lr(101, 100, 0.1), std::out_of_range);
}

TEST_CASE("AdamW update matches the scalar recurrence") {
    Rng rng(1);
    std::vector<double> w(5), m(5, 0.0), v(5, 0.0);
    for (double& x : w) x = rng.uniform(-1, 1);
    std::vector<ScalarAdamW> oracle(5);
    std::vector<double> ref = w;
    const AdamWConfig cfg;
    for (std::size_t step = 1; step <= 50; ++step) {
        std::vector<double> g(5);
        for (std::size_t i = 0; i < 5; ++i) g[i] = std::sin(static_cast<double>(step * (i + 1))) + w[i];
        for (std::size_t i = 0; i < 5; ++i) ref[i] = oracle[i].step(ref[i], g[i], 0.01, 1e-2);
        adamw_update(w, g, m, v, step, 0.01, cfg);
        for (std::size_t i = 0; i < 5; ++i) CHECK(w[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("AdamW converges on a quadratic bowl") {
    ParamRegistry reg;
    Parameter w(Shape{1});
    w.value[0] = 1.0;
    reg.add("w", w);
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt(reg, cfg);
    std::size_t hit = 0;
    for (std::size_t step = 1; step <= 500 && hit == 0; ++step) {
        w.grad[0] = 2.0 * w.value[0];
        opt.step(0.1);
        if (std::abs(w.value[0]) < 1e-3) hit = step;
    }
    CHECK(hit > 0);
    CHECK(hit <= 500);
}

TEST_CASE("AdamW refuses non-finite gradients without touching parameters") {
    ParamRegistry reg;
    Parameter a(Shape{2}), b(Shape{2});
    a.value.fill(1.0);
    b.value.fill(2.0);
    reg.add("a", a);
    reg.add("b", b);
    AdamW opt(reg, {});
    a.grad.fill(1.0);
    b.grad[1] = std::nan("");
    CHECK_THROWS_AS(opt.step(0.1), NumericalError);
    CHECK(a.value.values() == std::vector<double>{1.0, 1.0});
    CHECK(opt.step_count() == 0);
}

TEST_CASE("AdamW state restores an interrupted trajectory") {
    auto run = [](std::size_t steps, const NamedTensors* resume, NamedTensors* save, double start) {
        ParamRegistry reg;
        Parameter w(Shape{3});
        w.value.fill(start);
        reg.add("w", w);
        AdamW opt(reg, {});
        if (resume) opt.load_state(*resume);
        for (std::size_t i = 0; i < steps; ++i) {
            for (std::size_t j = 0; j < 3; ++j) w.grad[j] = w.value[j] * static_cast<double>(j + 1) - 0.3;
            opt.step(0.05);
        }
        if (save) *save = opt.state();
        return w.value;
    };
    NamedTensors mid;
    const Tensor half = run(10, nullptr, &mid, 1.0);
    ParamRegistry reg;
    Parameter w(Shape{3});
    w.value = half;
    reg.add("w", w);
    AdamW opt(reg, {});
    opt.load_state(mid);
    CHECK(opt.step_count() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
        for (std::size_t j = 0; j < 3; ++j) w.grad[j] = w.value[j] * static_cast<double>(j + 1) - 0.3;
        opt.step(0.05);
    }
    CHECK(w.value == run(20, nullptr, nullptr, 1.0));
    NamedTensors broken = mid;
    broken.erase("__opt__/m/w");
    CHECK_THROWS_AS(opt.load_state(broken), IoError);
}

TEST_CASE("gradient clipping bounds the global norm") {
    ParamRegistry reg;
    Parameter a(Shape{2}), b(Shape{1});
    a.grad = Tensor({2}, {3.0, 0.0});
    b.grad = Tensor({1}, {4.0});
    reg.add("a", a);
    reg.add("b", b);
    clip_grad_norm(reg, 1.0);
    CHECK(a.grad[0] == doctest::Approx(0.6));
    CHECK(b.grad[0] == doctest::Approx(0.8));
    clip_grad_norm(reg, 10.0);
    CHECK(b.grad[0] == doctest::Approx(0.8));
}

TEST_CASE("top-1 accuracy") {
    const Tensor logits({3, 2}, {0.1, 0.9, 2.0, 1.0, 0.0, 5.0});
    const std::vector<std::size_t> labels{1, 0, 0};
    CHECK(top1_accuracy(logits, labels) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("metrics rows") {
    CHECK(metrics_header() == "epoch\tstep\tlr\ttrain_loss\tval_top1\n");
    EpochMetrics m;
    m.epoch = 2;
    m.step = 8;
    m.lr = 0.001;
    m.train_loss = 1.25;
    m.val_top1 = 0.5;
    CHECK(format_metrics_row(m) == "2\t8\t0.001\t1.250000000\t0.500000\n");
}

TEST_CASE("training is deterministic and resumable") {
    const RunConfig cfg = tiny_run();
    const auto dir_a = fresh_dir("a"), dir_b = fresh_dir("b"), dir_c = fresh_dir("c");

    TrainOptions oa;
    oa.out_dir = dir_a;
    const TrainedRun a = run_experiment(cfg, oa);
    CHECK(a.result.log.size() == 3);

    TrainOptions ob;
    ob.out_dir = dir_b;
    run_experiment(cfg, ob);
    CHECK(slurp(dir_a / "metrics.tsv") == slurp(dir_b / "metrics.tsv"));
    CHECK(slurp(dir_a / "best.ckpt") == slurp(dir_b / "best.ckpt"));

    TrainOptions first;
    first.out_dir = dir_c;
    first.stop_after_epoch = 1;
    run_experiment(cfg, first);
    TrainOptions second;
    second.out_dir = dir_c;
    second.resume = dir_c / "last.ckpt";
    run_experiment(cfg, second);
    CHECK(slurp(dir_a / "metrics.tsv") == slurp(dir_c / "metrics.tsv"));
    CHECK(slurp(dir_a / "last.ckpt") == slurp(dir_c / "last.ckpt"));
    CHECK(slurp(dir_a / "best.ckpt") == slurp(dir_c / "best.ckpt"));

    RunConfig other = cfg;
    other.train.lr = 1e-2;
    TrainOptions mismatched;
    mismatched.out_dir = fresh_dir("d");
    mismatched.resume = dir_a / "last.ckpt";
    CHECK_THROWS_AS(run_experiment(other, mismatched), ConfigError);

    for (const auto& d : {dir_a, dir_b, dir_c}) std::filesystem::remove_all(d);
}

TEST_CASE("zero learning rate leaves the weights unchanged") {
    RunConfig cfg = tiny_run();
    cfg.train.lr = 0.0;
    cfg.train.epochs = 1;
    auto before = build_model(cfg);
    const TrainedRun run = run_experiment(cfg);
    for (const auto& p : before->registry().params) {
        const auto after = run.model->state().at(p.name);
        CHECK(after == p.param->value);
    }
}

TEST_CASE("evaluation with dropped frames") {
    RunConfig cfg = tiny_run();
    auto model = build_model(cfg);
    const Dataset data = generate(cfg.data);
    const double a = evaluate(*model, data.test, 2, 7);
    CHECK(a == evaluate(*model, data.test, 2, 7));
    CHECK((a >= 0.0 && a <= 1.0));
    CHECK_THROWS_AS(evaluate(*model, {}, 0, 0), ShapeError);
}

TEST_CASE("AdamW with zero gradients: unchanged without decay, pure shrink with it") {
    std::vector<double> w{1.0, -2.0}, g{0.0, 0.0}, m{0.0, 0.0}, v{0.0, 0.0};
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    adamw_update(w, g, m, v, 1, 0.1, cfg);
    CHECK(w == std::vector<double>{1.0, -2.0});
    cfg.weight_decay = 0.5;
    adamw_update(w, g, m, v, 2, 0.1, cfg);
    CHECK(w[0] == doctest::Approx(1.0 * (1 - 0.05)).epsilon(1e-15));
    CHECK(w[1] == doctest::Approx(-2.0 * (1 - 0.05)).epsilon(1e-15));
}

TEST_CASE("accuracy of perfect and random logits") {
    Rng rng(3);
    const std::size_t n = 4000, classes = 4;
    Tensor perfect({n, classes}), random({n, classes});
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = rng.below(classes);
        perfect[i * classes + labels[i]] = 1.0;
        for (std::size_t c = 0; c < classes; ++c) random[i * classes + c] = rng.normal();
    }
    CHECK(top1_accuracy(perfect, labels) == 1.0);
    CHECK(std::abs(top1_accuracy(random, labels) - 0.25) < 0.03);
}

namespace {

double split_loss(Model& model, const std::vector<Sample>& samples, Mode mode = Mode::Eval) {
    std::vector<Tensor> seqs;
    std::vector<std::size_t> labels;
    for (const Sample& s : samples) {
        seqs.push_back(s.features);
        labels.push_back(s.label);
    }
    const Batch b = make_batch(seqs, labels, samples.front().features.dim(0));
    Rng rng(0);
    const ForwardContext ctx{mode, &rng, false};
    return softmax_cross_entropy(model.forward(b.features, b.lengths, ctx), b.labels).loss;
}

RunConfig two_class(std::uint64_t seed) {
    RunConfig cfg = tiny_run();
    cfg.seed = seed;
    cfg.data.num_classes = 2;
    cfg.data.feature_channels = 16;
    cfg.data.train_samples = 64;
    cfg.data.val_samples = 32;
    cfg.train.max_drop_frames = 0;
    return cfg;
}

} // namespace

TEST_CASE("every parameter receives gradient after one backward pass") {
    for (BlockVariant v : {BlockVariant::FullyDense, BlockVariant::PartiallyDense}) {
        RunConfig cfg = tiny_run();
        // A two-unit SE bottleneck can start with both relus dead; give it room.
        for (auto& b : cfg.blocks) {
            b.variant = v;
            b.se_reduction = 1;
        }
        cfg.blocks.push_back(cfg.blocks.front());
        auto model = build_model(cfg);
        const Dataset data = generate(cfg.data);
        std::vector<Tensor> seqs;
        std::vector<std::size_t> labels;
        for (std::size_t i = 0; i < 8; ++i) {
            seqs.push_back(data.train[i].features);
            labels.push_back(data.train[i].label);
        }
        const Batch b = make_batch(seqs, labels, cfg.data.sequence_length);
        Rng drop(1);
        const ForwardContext ctx{Mode::Train, &drop, true};
        const CrossEntropy ce = softmax_cross_entropy(model->forward(b.features, b.lengths, ctx), b.labels);
        model->zero_grad();
        model->backward(softmax_cross_entropy_backward(ce, b.labels));
        for (const auto& p : model->registry().params) {
            CAPTURE(p.name);
            bool nonzero = false;
            for (double g : p.param->grad.data()) nonzero |= g != 0.0;
            CHECK(nonzero);
        }
    }
}

TEST_CASE("first epoch lowers the loss on the zero-noise two-class task") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        CAPTURE(seed);
        RunConfig cfg = two_class(seed);
        cfg.train.epochs = 1;
        for (auto& b : cfg.blocks) b.dropout = 0.0;
        const Dataset data = generate(cfg.data);
        // Batch statistics, as seen by the training loss; running
        // statistics lag far behind after a single epoch.
        auto before = build_model(cfg);
        const double loss_before = split_loss(*before, data.train, Mode::Train);
        const TrainedRun run = run_experiment(cfg);
        CHECK(split_loss(*run.model, data.train, Mode::Train) < loss_before);
    }
}

TEST_CASE("two-class zero-noise task reaches perfect validation accuracy within 30 epochs") {
    RunConfig cfg = two_class(0);
    cfg.train.epochs = 30;
    const TrainedRun run = run_experiment(cfg);
    CHECK(run.result.best_val == 1.0);
}

TEST_CASE("a 32-sample training subset is fit perfectly") {
    RunConfig cfg = tiny_run();
    cfg.data.train_samples = 32;
    cfg.train.epochs = 40;
    cfg.train.lr = 1e-2;
    cfg.train.max_drop_frames = 0;
    for (auto& b : cfg.blocks) b.dropout = 0.0;
    const TrainedRun run = run_experiment(cfg);
    CHECK(evaluate(*run.model, run.data.train) == 1.0);
}

TEST_CASE("squeeze-excite does not hurt beyond one standard deviation") {
    auto mean_std = [](const std::vector<double>& v) {
        double m = 0.0, s = 0.0;
        for (double x : v) m += x / static_cast<double>(v.size());
        for (double x : v) s += (x - m) * (x - m) / static_cast<double>(v.size() - 1);
        return std::pair{m, std::sqrt(s)};
    };
    std::vector<double> on, off;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        RunConfig cfg = default_run_config();
        cfg.seed = seed;
        cfg.data.noise_std = 0.5;
        cfg.train.epochs = 10;
        on.push_back(evaluate(*run_experiment(cfg).model, generate(cfg.data).test));
        for (auto& b : cfg.blocks) b.use_se = false;
        off.push_back(evaluate(*run_experiment(cfg).model, generate(cfg.data).test));
    }
    const auto [m_on, s_on] = mean_std(on);
    const auto [m_off, s_off] = mean_std(off);
    MESSAGE("SE on " << m_on << " +- " << s_on << ", off " << m_off << " +- " << s_off);
    CHECK(m_on >= m_off - s_off);
}
