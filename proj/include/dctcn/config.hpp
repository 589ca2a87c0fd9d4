#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dctcn/blocks.hpp"
#include "dctcn/synth.hpp"
#include "dctcn/training.hpp"

namespace dctcn {

/// Everything needed to reproduce a run. Serialized as one JSON document:
///
///   { "seed": 0, "out_dir": "...",
///     "data":    { num_classes, sequence_length, feature_channels, train_samples,
///                  val_samples, test_samples, noise_std, long_spacings, seed },
///     "network": { "blocks": [ {K, D, growth_rate, reduce_channels, variant, use_se,
///                               se_reduction, final_se, residual, dropout}, ... ] }
///                or { "num_blocks": B, "block": {...} },
///     "train":   { epochs, batch_size, lr, weight_decay, beta1, beta2, eps,
///                  max_drop_frames, eval_every, grad_clip } }
///
/// Unknown keys are rejected. The network's input channels, class count
/// and sequence length come from the data section.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "runs/default";
    DatasetSpec data;
    std::vector<BlockSpec> blocks;
    TrainConfig train;

    NetworkSpec network() const;
    void validate() const;
};

/// Desk-scale defaults: two PD blocks with K={3,5}, D={1,4}, C_o=16, C_r=32,
/// trained for 30 epochs from lr 3e-3.
RunConfig default_run_config();
BlockSpec default_block_spec();

RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Fully resolved config with every default materialized.
std::string to_json_text(const RunConfig& cfg);

/// Sets one named field from its text form, e.g. ("K", "3,5,7"),
/// ("use_se", "false"), ("growth_rate", "64"). Block fields apply to every block.
void apply_override(RunConfig& cfg, const std::string& name, const std::string& value);

} // namespace dctcn
