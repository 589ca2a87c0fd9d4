#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dctcn/config.hpp"

namespace dctcn {

/// Model with weights initialized from the run seed.
std::unique_ptr<Model> build_model(const RunConfig& cfg);

struct TrainedRun {
    std::unique_ptr<Model> model;  // holds the best-validation weights
    Dataset data;
    TrainResult result;
};

/// Generates the dataset, trains, and restores the best-validation weights.
/// opts.config_text is filled from cfg when empty.
TrainedRun run_experiment(const RunConfig& cfg, TrainOptions opts = {});

struct LoadedCheckpoint {
    RunConfig config;
    std::unique_ptr<Model> model;
};

/// Rebuilds the model described by the checkpoint's embedded config and loads its weights.
LoadedCheckpoint load_model_checkpoint(const std::filesystem::path& path);

struct SweepAxis {
    std::string name;
    std::vector<std::string> values;
};

/// Parses "name=v1|v2|..." (list-valued fields use commas inside a value: "K=3,5|3,5,7").
SweepAxis parse_axis(const std::string& text);

struct SweepCell {
    BlockVariant variant;
    double accuracy = 0.0;
    bool failed = false;
    std::string error;
};

struct SweepRow {
    std::vector<std::pair<std::string, std::string>> settings;  // axis values of this row
    RunConfig config;                                            // before the variant is applied
    std::vector<SweepCell> cells;                                // one per variant
};

struct SweepTable {
    std::vector<BlockVariant> variants;
    std::vector<SweepRow> rows;

    /// One row per grid point with the block/training fields echoed and one
    /// test-accuracy column per variant; failed cells read FAILED.
    std::string to_tsv() const;
};

/// Trains one model per (grid point, variant) with the base seed and data,
/// and records test top-1 accuracy. A failing cell is marked and the sweep continues.
SweepTable run_sweep(const RunConfig& base, const std::vector<SweepAxis>& axes, const std::vector<BlockVariant>& variants,
                     const std::function<void(const SweepRow&, const SweepCell&)>& progress = {});

} // namespace dctcn
