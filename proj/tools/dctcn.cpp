#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dctcn/config.hpp"
#include "dctcn/errors.hpp"
#include "dctcn/experiment.hpp"
#include "dctcn/gradcheck.hpp"
#include "dctcn/rf.hpp"
#include "dctcn/training.hpp"

namespace fs = std::filesystem;
using namespace dctcn;

namespace {

enum Exit { kOk = 0, kRfMismatch = 2, kConfig = 3, kIo = 4, kNumerical = 5 };

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw IoError("cannot write " + path.string());
}

std::uint64_t seed_from_env(std::uint64_t fallback) {
    const char* env = std::getenv("DCTCN_SEED");
    if (!env || !*env) return fallback;
    RunConfig probe = default_run_config();
    apply_override(probe, "seed", env);
    return probe.seed;
}

RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
    RunConfig cfg = path.empty() ? default_run_config() : load_run_config(path);
    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects name=value, got '" + kv + "'");
        apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.seed = seed_from_env(cfg.seed);
    cfg.validate();
    return cfg;
}

std::string join(const std::vector<std::size_t>& v, const char* sep) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + std::to_string(v[i]);
    return s;
}

// ---------------------------------------------------------------- rf

struct RfArgs {
    std::string preset = "all";
    std::string config;
    std::vector<std::size_t> K{3, 5};
    std::vector<std::size_t> D{1, 4};
    bool empirical = false;
    std::string out;
};

int cmd_rf(const RfArgs& a) {
    std::vector<std::size_t> K = a.K, D = a.D;
    std::vector<BlockVariant> modes{BlockVariant::Linear, BlockVariant::MultiScale, BlockVariant::PartiallyDense,
                                    BlockVariant::FullyDense};
    if (!a.config.empty()) {
        const RunConfig cfg = resolve_config(a.config, {});
        K = cfg.blocks.front().filter_sizes;
        D = cfg.blocks.front().dilations;
        if (a.preset == "all") modes = {cfg.blocks.front().variant};
    }
    if (a.preset != "all") modes = {parse_variant(a.preset == "pd" ? "PD" : a.preset == "fd" ? "FD" : a.preset)};
    std::fprintf(stderr, "{\"K\": [%s], \"D\": [%s], \"empirical\": %s}\n", join(K, ", ").c_str(),
                 join(D, ", ").c_str(), a.empirical ? "true" : "false");

    std::string tsv = "mode\tdistinct\tmax\tscales\n";
    std::string summary, chart;
    bool agree = true;
    for (BlockVariant v : modes) {
        const BlockSpec spec = preset_block(v, K, D);
        const RFProfile p = enumerate_profile(ConnectivityGraph::from_spec(spec));
        const std::string name = to_string(v);
        tsv += name + "\t" + std::to_string(p.distinct_count) + "\t" + std::to_string(p.max_scale) + "\t" +
               join(p.scales, " ") + "\n";
        summary += name + ": distinct=" + std::to_string(p.distinct_count) + " max=" + std::to_string(p.max_scale) +
                   " scales=" + join(p.distinct(), " ") + "\n";
        chart += name + "\n";
        for (std::size_t s : p.distinct()) {
            const auto n = static_cast<std::size_t>(std::count(p.scales.begin(), p.scales.end(), s));
            char label[32];
            std::snprintf(label, sizeof label, "  %4zu |", s);
            chart += label + std::string(s, '#') + (n > 1 ? " x" + std::to_string(n) : "") + "\n";
        }
        if (a.empirical) {
            const RFProfile e = empirical_block_profile(spec);
            const bool ok = e.scales == p.scales;
            agree &= ok;
            tsv += name + "-empirical\t" + std::to_string(e.distinct_count) + "\t" + std::to_string(e.max_scale) +
                   "\t" + join(e.scales, " ") + "\n";
            summary += name + ": empirical " + (ok ? "agrees" : "DISAGREES") + "\n";
        }
    }
    std::cout << tsv << "\n" << summary << "\n" << chart;
    if (!a.out.empty()) write_file(fs::path(a.out) / "rf_report.tsv", tsv);
    return agree ? kOk : kRfMismatch;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string config;
    std::string out;
    std::vector<std::string> overrides;
    bool resume = false;
    std::size_t stop_after = 0;
};

int cmd_train(const TrainArgs& a) {
    RunConfig cfg = resolve_config(a.config, a.overrides);
    if (!a.out.empty()) cfg.out_dir = a.out;
    const std::string resolved = to_json_text(cfg);
    std::cerr << resolved;
    const fs::path out = cfg.out_dir;
    write_file(out / "config.resolved.json", resolved);

    TrainOptions opts;
    opts.out_dir = out;
    opts.config_text = resolved;
    opts.stop_after_epoch = a.stop_after;
    if (a.resume) {
        if (!fs::exists(out / "last.ckpt")) throw IoError("nothing to resume: " + (out / "last.ckpt").string());
        opts.resume = out / "last.ckpt";
    }
    std::cout << metrics_header();
    opts.on_epoch = [](const EpochMetrics& m) { std::cout << format_metrics_row(m) << std::flush; };
    TrainedRun run = run_experiment(cfg, opts);
    std::printf("best_val=%.6f best_epoch=%zu test_top1=%.6f\n", run.result.best_val, run.result.best_epoch,
                evaluate(*run.model, run.data.test));
    return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string checkpoint;
    std::size_t drop_frames = 0;
    std::string split = "test";
};

int cmd_eval(const EvalArgs& a) {
    const Split split = parse_split(a.split);
    LoadedCheckpoint ck = load_model_checkpoint(a.checkpoint);
    ck.config.seed = seed_from_env(ck.config.seed);
    std::cerr << to_json_text(ck.config);
    if (a.drop_frames >= ck.config.data.sequence_length)
        throw ConfigError("--drop-frames must be smaller than the sequence length");
    const Dataset data = generate(ck.config.data);
    const double acc = evaluate(*ck.model, data.split(split), a.drop_frames, ck.config.seed);
    std::printf("top1=%.6f\n", acc);
    return kOk;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
    std::string config;
    std::vector<std::string> axes;
    std::vector<std::string> overrides;
    std::string variants = "FD,PD";
    std::string out;
};

int cmd_sweep(const SweepArgs& a) {
    RunConfig cfg = resolve_config(a.config, a.overrides);
    if (!a.out.empty()) cfg.out_dir = a.out;
    std::vector<SweepAxis> axes;
    for (const std::string& s : a.axes) axes.push_back(parse_axis(s));
    std::vector<BlockVariant> variants;
    std::stringstream vs(a.variants);
    for (std::string v; std::getline(vs, v, ',');)
        if (!v.empty()) variants.push_back(parse_variant(v));

    const std::string resolved = to_json_text(cfg);
    std::cerr << resolved;
    const fs::path out = cfg.out_dir;
    write_file(out / "config.resolved.json", resolved);

    const SweepTable table = run_sweep(cfg, axes, variants, [](const SweepRow& row, const SweepCell& cell) {
        std::string where;
        for (const auto& [k, v] : row.settings) where += k + "=" + v + " ";
        if (cell.failed)
            std::fprintf(stderr, "%s%s: FAILED (%s)\n", where.c_str(), to_string(cell.variant).c_str(),
                         cell.error.c_str());
        else
            std::fprintf(stderr, "%s%s: %.4f\n", where.c_str(), to_string(cell.variant).c_str(), cell.accuracy);
    });
    const std::string tsv = table.to_tsv();
    write_file(out / "sweep.tsv", tsv);
    std::cout << tsv;
    return kOk;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(std::uint64_t seed, std::size_t trials, double tol) {
    seed = seed_from_env(seed);
    std::fprintf(stderr, "{\"seed\": %llu, \"trials\": %zu, \"tol\": %g}\n", static_cast<unsigned long long>(seed),
                 trials, tol);
    const auto results = run_gradcheck_suite(seed, trials, tol);
    std::printf("op\ttrials\telements\tskipped\tmax_rel_error\tstatus\n");
    bool ok = true;
    for (const auto& r : results) {
        std::printf("%s\t%zu\t%zu\t%zu\t%.3e\t%s\n", r.name.c_str(), r.trials, r.elements, r.skipped,
                    r.max_rel_error, r.passed ? "PASS" : "FAIL");
        ok &= r.passed;
    }
    return ok ? kOk : kNumerical;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Densely connected temporal convolution toolkit"};
    app.require_subcommand(1);

    RfArgs rf;
    auto* rf_cmd = app.add_subcommand("rf", "Receptive-field profiles of block connectivity modes");
    rf_cmd->add_option("--preset", rf.preset, "linear, multiscale, pd, fd or all")
        ->check(CLI::IsMember({"all", "linear", "multiscale", "pd", "fd"}));
    rf_cmd->add_option("--config", rf.config, "Take K/D and variant from the first block of a run config");
    rf_cmd->add_option("--K", rf.K, "Filter sizes")->delimiter(',');
    rf_cmd->add_option("--D", rf.D, "Dilation rates")->delimiter(',');
    rf_cmd->add_flag("--empirical", rf.empirical, "Confirm every profile with impulse probes on a real block");
    rf_cmd->add_option("--out", rf.out, "Directory for rf_report.tsv");

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train on the synthetic task");
    train_cmd->add_option("--config", tr.config, "Run config (JSON); defaults when omitted");
    train_cmd->add_option("--out", tr.out, "Output directory (overrides out_dir)");
    train_cmd->add_option("--set", tr.overrides, "Override a field, name=value (repeatable)");
    train_cmd->add_flag("--resume", tr.resume, "Continue from <out>/last.ckpt");
    train_cmd->add_option("--stop-after", tr.stop_after, "Stop once this many epochs are done");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Top-1 accuracy of a checkpoint");
    eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint written by train")->required();
    eval_cmd->add_option("--drop-frames", ev.drop_frames, "Frames removed from every sequence");
    eval_cmd->add_option("--split", ev.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));

    SweepArgs sw;
    auto* sweep_cmd = app.add_subcommand("sweep", "Grid of training runs, one accuracy column per variant");
    sweep_cmd->add_option("--config", sw.config, "Base run config (JSON)");
    sweep_cmd->add_option("--axis", sw.axes, "name=v1|v2|... (repeatable)");
    sweep_cmd->add_option("--set", sw.overrides, "Override a base field, name=value (repeatable)");
    sweep_cmd->add_option("--variants", sw.variants, "Comma-separated variants");
    sweep_cmd->add_option("--out", sw.out, "Output directory (overrides out_dir)");

    std::uint64_t gc_seed = 0;
    std::size_t gc_trials = 20;
    double gc_tol = 1e-5;
    auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
    gc_cmd->add_option("--seed", gc_seed, "Base seed");
    gc_cmd->add_option("--trials", gc_trials, "Trials per op");
    gc_cmd->add_option("--tol", gc_tol, "Relative error tolerance");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        if (*rf_cmd) return cmd_rf(rf);
        if (*train_cmd) return cmd_train(tr);
        if (*eval_cmd) return cmd_eval(ev);
        if (*sweep_cmd) return cmd_sweep(sw);
        if (*gc_cmd) return cmd_gradcheck(gc_seed, gc_trials, gc_tol);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfig;
    } catch (const IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return kIo;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return kNumerical;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kConfig;
    }
    return kOk;
}
