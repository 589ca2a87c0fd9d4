#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dctcn/blocks.hpp"
#include "dctcn/checkpoint.hpp"
#include "dctcn/synth.hpp"

namespace dctcn {

/// lr0 * (1 + cos(pi * step / total_steps)) / 2.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0);

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
};

/// One decoupled-weight-decay Adam update of a single tensor. step is the
/// 1-based update count used for bias correction. The decay term
/// lr * weight_decay * param is applied to the pre-update weights and does
/// not pass through the moment estimates.
void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  std::size_t step, double lr, const AdamWConfig& cfg);

class AdamW {
public:
    AdamW(const ParamRegistry& registry, AdamWConfig cfg);

    /// Applies one update from the accumulated gradients. Throws
    /// NumericalError, leaving every parameter untouched, if any gradient
    /// is non-finite.
    void step(double lr);

    std::size_t step_count() const { return step_; }
    const AdamWConfig& config() const { return cfg_; }

    /// Moments under "__opt__/m/<param>" and "__opt__/v/<param>", and the step count.
    NamedTensors state() const;
    void load_state(const NamedTensors& state);

private:
    const ParamRegistry* registry_;
    AdamWConfig cfg_;
    std::vector<Tensor> m_, v_;
    std::size_t step_ = 0;
};

/// Scales all gradients so their global L2 norm is at most max_norm.
void clip_grad_norm(const ParamRegistry& registry, double max_norm);

struct TrainConfig {
    std::size_t epochs = 80;
    std::size_t batch_size = 16;
    double lr = 3e-4;
    AdamWConfig optimizer;
    std::size_t max_drop_frames = 0;  // augmentation: drop U{0..N} frames per sample
    std::size_t eval_every = 1;
    double grad_clip = 0.0;  // 0 disables clipping

    void validate() const;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    std::size_t step = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_top1 = 0.0;
};

std::string metrics_header();
std::string format_metrics_row(const EpochMetrics& m);

struct TrainOptions {
    std::filesystem::path out_dir;                   // empty: no files written
    std::optional<std::filesystem::path> resume;     // last.ckpt of an earlier run
    std::size_t stop_after_epoch = 0;                // stop once this many epochs are done (0: run all)
    std::string config_text;                         // embedded as "__config__"
    std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
    std::vector<EpochMetrics> log;
    std::string metrics_tsv;
    double best_val = -1.0;
    std::size_t best_epoch = 0;
    NamedTensors best_state;
};

/// Single-threaded deterministic training loop. Every random choice is
/// drawn from a stream derived from (seed, purpose, epoch/step/index), so
/// a resumed run replays exactly what an uninterrupted one would.
/// Writes metrics.tsv, best.ckpt and last.ckpt under out_dir when set.
TrainResult train(Model& model, const Dataset& data, const TrainConfig& cfg, std::uint64_t seed,
                  const TrainOptions& opts = {});

/// Fraction of rows whose argmax equals the label.
double top1_accuracy(const Tensor& logits, std::span<const std::size_t> labels);

/// Top-1 accuracy in eval mode; drop_n frames are removed from every
/// sequence (seeded per sample) before padding and masking. The stream
/// does not depend on drop_n, so the frames dropped for N are a subset of
/// those dropped for N + 1.
double evaluate(Model& model, const std::vector<Sample>& samples, std::size_t drop_n = 0, std::uint64_t seed = 0,
                std::size_t batch_size = 64);

namespace streams {
inline constexpr std::uint64_t kInit = 0x696e6974;
inline constexpr std::uint64_t kShuffle = 0x73687566;
inline constexpr std::uint64_t kAugment = 0x61756720;
inline constexpr std::uint64_t kDropout = 0x64726f70;
inline constexpr std::uint64_t kEvalDrop = 0x6576616c;
} // namespace streams

} // namespace dctcn
