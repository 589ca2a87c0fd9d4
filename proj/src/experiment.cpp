#include "dctcn/experiment.hpp"

#include <cstdio>
#include <sstream>

#include "dctcn/errors.hpp"

namespace dctcn {

std::unique_ptr<Model> build_model(const RunConfig& cfg) {
    cfg.validate();
    Rng rng(Rng::derive(cfg.seed, {streams::kInit}));
    return std::make_unique<Model>(cfg.network(), rng);
}

TrainedRun run_experiment(const RunConfig& cfg, TrainOptions opts) {
    if (opts.config_text.empty()) opts.config_text = to_json_text(cfg);
    TrainedRun run{build_model(cfg), generate(cfg.data), {}};
    run.result = train(*run.model, run.data, cfg.train, cfg.seed, opts);
    if (!run.result.best_state.empty()) run.model->load_state(run.result.best_state);
    return run;
}

LoadedCheckpoint load_model_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
    NamedTensors ckpt = load_checkpoint(path);
    auto it = ckpt.find("__config__");
    if (it == ckpt.end()) throw IoError("checkpoint " + path.string() + " has no embedded config");
    LoadedCheckpoint out{parse_run_config(tensor_to_string(it->second)), nullptr};
    out.model = build_model(out.config);
    out.model->load_state(ckpt);
    return out;
}

SweepAxis parse_axis(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == text.size())
        throw ConfigError("sweep axis must look like name=v1|v2, got '" + text + "'");
    SweepAxis axis{text.substr(0, eq), {}};
    std::stringstream in(text.substr(eq + 1));
    std::string v;
    while (std::getline(in, v, '|'))
        if (!v.empty()) axis.values.push_back(v);
    if (axis.values.empty()) throw ConfigError("sweep axis '" + axis.name + "' has no values");
    return axis;
}

namespace {

std::string join(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

} // namespace

std::string SweepTable::to_tsv() const {
    std::string out = "K\tD\tgrowth_rate\treduce_channels\tuse_se\tnum_blocks\tdropout\tepochs\tlr\tseed";
    for (BlockVariant v : variants) out += "\tacc_" + to_string(v);
    out += "\n";
    for (const auto& row : rows) {
        const RunConfig& c = row.config;
        const BlockSpec& b = c.blocks.front();
        char num[64];
        out += join(b.filter_sizes) + "\t" + join(b.dilations) + "\t" + std::to_string(b.growth_rate) + "\t" +
               std::to_string(b.reduce_channels) + "\t" + (b.use_se ? "true" : "false") + "\t" +
               std::to_string(c.blocks.size());
        std::snprintf(num, sizeof num, "\t%g\t%zu\t%g\t%llu", b.dropout, c.train.epochs, c.train.lr,
                      static_cast<unsigned long long>(c.seed));
        out += num;
        for (const auto& cell : row.cells) {
            if (cell.failed) {
                out += "\tFAILED";
            } else {
                std::snprintf(num, sizeof num, "\t%.6f", cell.accuracy);
                out += num;
            }
        }
        out += "\n";
    }
    return out;
}

SweepTable run_sweep(const RunConfig& base, const std::vector<SweepAxis>& axes, const std::vector<BlockVariant>& variants,
                     const std::function<void(const SweepRow&, const SweepCell&)>& progress) {
    if (variants.empty()) throw ConfigError("sweep needs at least one variant");
    SweepTable table{variants, {}};

    // Cartesian product, first axis varying slowest.
    std::vector<std::size_t> idx(axes.size(), 0);
    for (const auto& a : axes)
        if (a.values.empty()) throw ConfigError("sweep axis '" + a.name + "' has no values");
    while (true) {
        SweepRow row;
        row.config = base;
        bool valid = true;
        std::string error;
        for (std::size_t a = 0; a < axes.size(); ++a) {
            row.settings.emplace_back(axes[a].name, axes[a].values[idx[a]]);
            try {
                apply_override(row.config, axes[a].name, axes[a].values[idx[a]]);
            } catch (const std::exception& e) {
                valid = false;
                error = e.what();
            }
        }
        for (BlockVariant v : variants) {
            SweepCell cell;
            cell.variant = v;
            if (!valid) {
                cell.failed = true;
                cell.error = error;
            } else {
                try {
                    RunConfig cfg = row.config;
                    for (auto& b : cfg.blocks) b.variant = v;
                    TrainedRun run = run_experiment(cfg);
                    cell.accuracy = evaluate(*run.model, run.data.test);
                } catch (const std::exception& e) {
                    cell.failed = true;
                    cell.error = e.what();
                }
            }
            if (progress) progress(row, cell);
            row.cells.push_back(std::move(cell));
        }
        table.rows.push_back(std::move(row));

        std::size_t a = axes.size();
        while (a > 0) {
            --a;
            if (++idx[a] < axes[a].values.size()) break;
            idx[a] = 0;
            if (a == 0) return table;
        }
        if (axes.empty()) return table;
    }
}

} // namespace dctcn
