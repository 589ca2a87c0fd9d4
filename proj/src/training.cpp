#include "dctcn/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>

#include "dctcn/errors.hpp"
#include "dctcn/nn_ops.hpp"

namespace dctcn {

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0) {
    if (total_steps == 0 || step > total_steps)
        throw std::out_of_range("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                                std::to_string(total_steps) + "]");
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * frac));
}

void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  std::size_t step, double lr, const AdamWConfig& cfg) {
    if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size())
        throw ShapeError("adamw_update: size mismatch");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < param.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double mhat = m[i] / bc1, vhat = v[i] / bc2;
        param[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * param[i]);
    }
}

AdamW::AdamW(const ParamRegistry& registry, AdamWConfig cfg) : registry_(&registry), cfg_(cfg) {
    for (const auto& p : registry.params) {
        m_.emplace_back(p.param->value.shape());
        v_.emplace_back(p.param->value.shape());
    }
}

void AdamW::step(double lr) {
    const auto& params = registry_->params;
    for (const auto& p : params)
        if (!p.param->grad.all_finite()) throw NumericalError("non-finite gradient in '" + p.name + "'");
    ++step_;
    for (std::size_t i = 0; i < params.size(); ++i)
        adamw_update(params[i].param->value.data(), params[i].param->grad.data(), m_[i].data(), v_[i].data(), step_,
                     lr, cfg_);
}

NamedTensors AdamW::state() const {
    NamedTensors out;
    const auto& params = registry_->params;
    for (std::size_t i = 0; i < params.size(); ++i) {
        out.emplace("__opt__/m/" + params[i].name, m_[i]);
        out.emplace("__opt__/v/" + params[i].name, v_[i]);
    }
    out.emplace("__opt__/step", Tensor({1}, {static_cast<double>(step_)}));
    return out;
}

void AdamW::load_state(const NamedTensors& state) {
    const auto& params = registry_->params;
    auto fetch = [&](const std::string& name, Tensor& dst) {
        auto it = state.find(name);
        if (it == state.end() || it->second.shape() != dst.shape())
            throw IoError("optimizer state entry '" + name + "' missing or mis-shaped");
        dst = it->second;
    };
    for (std::size_t i = 0; i < params.size(); ++i) {
        fetch("__opt__/m/" + params[i].name, m_[i]);
        fetch("__opt__/v/" + params[i].name, v_[i]);
    }
    Tensor step({1});
    fetch("__opt__/step", step);
    step_ = static_cast<std::size_t>(step[0]);
}

void clip_grad_norm(const ParamRegistry& registry, double max_norm) {
    double sq = 0.0;
    for (const auto& p : registry.params)
        for (double g : p.param->grad.data()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    const double s = max_norm / norm;
    for (const auto& p : registry.params) scale_inplace(p.param->grad, s);
}

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("epochs must be at least 1");
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and non-negative");
    if (optimizer.weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
    if (optimizer.beta1 < 0.0 || optimizer.beta1 >= 1.0 || optimizer.beta2 < 0.0 || optimizer.beta2 >= 1.0)
        throw ConfigError("betas must lie in [0, 1)");
    if (optimizer.eps <= 0.0) throw ConfigError("eps must be positive");
    if (eval_every == 0) throw ConfigError("eval_every must be at least 1");
    if (grad_clip < 0.0) throw ConfigError("grad_clip must be non-negative");
}

std::string metrics_header() {
    return "epoch\tstep\tlr\ttrain_loss\tval_top1\n";
}

std::string format_metrics_row(const EpochMetrics& m) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu\t%zu\t%.9g\t%.9f\t%.6f\n", m.epoch, m.step, m.lr, m.train_loss, m.val_top1);
    return buf;
}

double top1_accuracy(const Tensor& logits, std::span<const std::size_t> labels) {
    require_rank(logits, 2, "top1_accuracy");
    const std::size_t batch = logits.dim(0), classes = logits.dim(1);
    if (labels.size() != batch) throw ShapeError("top1_accuracy: label count mismatch");
    if (batch == 0) throw ShapeError("top1_accuracy: empty batch");
    std::size_t correct = 0;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = &logits[b * classes];
        const auto arg = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
        correct += arg == labels[b];
    }
    return static_cast<double>(correct) / static_cast<double>(batch);
}

double evaluate(Model& model, const std::vector<Sample>& samples, std::size_t drop_n, std::uint64_t seed,
                std::size_t batch_size) {
    if (samples.empty()) throw ShapeError("evaluate: empty split");
    const ForwardContext ctx{Mode::Eval, nullptr, false};
    std::size_t correct = 0;
    for (std::size_t start = 0; start < samples.size(); start += batch_size) {
        const std::size_t end = std::min(samples.size(), start + batch_size);
        std::vector<Tensor> seqs;
        std::vector<std::size_t> labels;
        std::size_t width = 0;
        for (std::size_t i = start; i < end; ++i) {
            const Tensor& x = samples[i].features;
            if (drop_n == 0) {
                seqs.push_back(x);
            } else {
                Rng rng(Rng::derive(seed, {streams::kEvalDrop, i}));
                seqs.push_back(drop_frames(x, drop_n, rng));
            }
            labels.push_back(samples[i].label);
            width = std::max(width, x.dim(0));
        }
        Batch batch = make_batch(seqs, labels, width);
        const Tensor logits = model.forward(batch.features, batch.lengths, ctx);
        correct += static_cast<std::size_t>(std::llround(top1_accuracy(logits, labels) * static_cast<double>(labels.size())));
    }
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

} // namespace

TrainResult train(Model& model, const Dataset& data, const TrainConfig& cfg, std::uint64_t seed,
                  const TrainOptions& opts) {
    cfg.validate();
    if (data.train.empty() || data.val.empty()) throw ConfigError("training needs non-empty train and val splits");
    const std::size_t n_train = data.train.size();
    const std::size_t batches_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = cfg.epochs * batches_per_epoch;
    const std::size_t max_steps = data.spec.sequence_length;

    AdamW opt(model.registry(), cfg.optimizer);
    TrainResult result;
    result.metrics_tsv = metrics_header();
    std::size_t first_epoch = 0;

    if (opts.resume) {
        NamedTensors ckpt = load_checkpoint(*opts.resume);
        if (!opts.config_text.empty()) {
            auto it = ckpt.find("__config__");
            if (it == ckpt.end() || tensor_to_string(it->second) != opts.config_text)
                throw ConfigError("resume checkpoint was written with a different config");
        }
        model.load_state(ckpt);
        opt.load_state(ckpt);
        const Tensor& st = ckpt.at("__state__");
        first_epoch = static_cast<std::size_t>(st[0]);
        result.best_val = st[1];
        result.best_epoch = static_cast<std::size_t>(st[2]);
        result.metrics_tsv = tensor_to_string(ckpt.at("__metrics__"));
        if (!opts.out_dir.empty() && std::filesystem::exists(opts.out_dir / "best.ckpt")) {
            result.best_state = load_checkpoint(opts.out_dir / "best.ckpt");
            result.best_state.erase("__config__");
        }
    }

    auto snapshot = [&](bool with_optimizer) {
        NamedTensors out = model.state();
        if (!opts.config_text.empty()) out.emplace("__config__", string_to_tensor(opts.config_text));
        if (with_optimizer)
            for (const auto& [name, t] : opt.state()) out.emplace(name, t);
        return out;
    };

    if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);

    std::size_t step = opt.step_count();
    for (std::size_t epoch = first_epoch; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(n_train);
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle(Rng::derive(seed, {streams::kShuffle, epoch}));
        for (std::size_t i = n_train; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

        double loss_sum = 0.0, lr = 0.0;
        for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
            const std::size_t end = std::min(n_train, start + cfg.batch_size);
            std::vector<Tensor> seqs;
            std::vector<std::size_t> labels;
            for (std::size_t i = start; i < end; ++i) {
                const Sample& s = data.train[order[i]];
                if (cfg.max_drop_frames > 0) {
                    Rng aug(Rng::derive(seed, {streams::kAugment, epoch, order[i]}));
                    const std::size_t n = std::min(aug.below(cfg.max_drop_frames + 1), s.features.dim(0) - 1);
                    seqs.push_back(drop_frames(s.features, n, aug));
                } else {
                    seqs.push_back(s.features);
                }
                labels.push_back(s.label);
            }
            Batch batch = make_batch(seqs, labels, max_steps);

            Rng dropout_rng(Rng::derive(seed, {streams::kDropout, step}));
            const ForwardContext ctx{Mode::Train, &dropout_rng, true};
            model.zero_grad();
            const Tensor logits = model.forward(batch.features, batch.lengths, ctx);
            const CrossEntropy ce = softmax_cross_entropy(logits, batch.labels);
            if (!std::isfinite(ce.loss))
                throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step));
            model.backward(softmax_cross_entropy_backward(ce, batch.labels));
            if (cfg.grad_clip > 0.0) clip_grad_norm(model.registry(), cfg.grad_clip);
            lr = cosine_lr(step, total_steps, cfg.lr);
            opt.step(lr);
            ++step;
            loss_sum += ce.loss * static_cast<double>(end - start);
        }

        EpochMetrics m{epoch + 1, step, lr, loss_sum / static_cast<double>(n_train), -1.0};
        const bool last_epoch = epoch + 1 == cfg.epochs;
        if ((epoch + 1) % cfg.eval_every == 0 || last_epoch) m.val_top1 = evaluate(model, data.val);
        result.log.push_back(m);
        result.metrics_tsv += format_metrics_row(m);
        if (opts.on_epoch) opts.on_epoch(m);

        if (m.val_top1 > result.best_val) {
            result.best_val = m.val_top1;
            result.best_epoch = m.epoch;
            result.best_state = model.state();
            if (!opts.out_dir.empty()) save_checkpoint(snapshot(false), opts.out_dir / "best.ckpt");
        }
        if (!opts.out_dir.empty()) {
            NamedTensors last = snapshot(true);
            last.emplace("__state__", Tensor({3}, {static_cast<double>(epoch + 1), result.best_val,
                                                   static_cast<double>(result.best_epoch)}));
            last.emplace("__metrics__", string_to_tensor(result.metrics_tsv));
            save_checkpoint(last, opts.out_dir / "last.ckpt");
            write_text(opts.out_dir / "metrics.tsv", result.metrics_tsv);
        }
        if (opts.stop_after_epoch != 0 && epoch + 1 >= opts.stop_after_epoch) break;
    }
    return result;
}

} // namespace dctcn
