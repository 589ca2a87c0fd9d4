#include "dctcn/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "dctcn/errors.hpp"

namespace dctcn {

using nlohmann::json;

namespace {

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + " must be a JSON object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(path_ + "." + key + ": " + e.what());
        }
    }

    const json* sub(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (const auto& [key, _] : j_.items())
            if (!seen_.count(key)) throw ConfigError("unknown key '" + path_ + "." + key + "'");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void get_size(ObjectReader& r, const char* key, std::size_t& out) {
    std::int64_t v = static_cast<std::int64_t>(out);
    r.get(key, v);
    if (v < 0) throw ConfigError(std::string(key) + " must be non-negative");
    out = static_cast<std::size_t>(v);
}

BlockSpec parse_block(const json& j, const std::string& path, BlockSpec b) {
    ObjectReader r(j, path);
    r.get("K", b.filter_sizes);
    r.get("D", b.dilations);
    get_size(r, "growth_rate", b.growth_rate);
    get_size(r, "reduce_channels", b.reduce_channels);
    std::string variant = to_string(b.variant);
    r.get("variant", variant);
    b.variant = parse_variant(variant);
    r.get("use_se", b.use_se);
    get_size(r, "se_reduction", b.se_reduction);
    r.get("final_se", b.final_se);
    r.get("residual", b.residual);
    r.get("dropout", b.dropout);
    r.finish();
    return b;
}

json block_json(const BlockSpec& b) {
    return json{{"K", b.filter_sizes},
                {"D", b.dilations},
                {"growth_rate", b.growth_rate},
                {"reduce_channels", b.reduce_channels},
                {"variant", to_string(b.variant)},
                {"use_se", b.use_se},
                {"se_reduction", b.se_reduction},
                {"final_se", b.final_se},
                {"residual", b.residual},
                {"dropout", b.dropout}};
}

RunConfig from_json(const json& j) {
    RunConfig cfg = default_run_config();
    ObjectReader top(j, "config");
    top.get("seed", cfg.seed);
    top.get("out_dir", cfg.out_dir);

    if (const json* d = top.sub("data")) {
        ObjectReader r(*d, "data");
        get_size(r, "num_classes", cfg.data.num_classes);
        get_size(r, "sequence_length", cfg.data.sequence_length);
        get_size(r, "feature_channels", cfg.data.feature_channels);
        get_size(r, "train_samples", cfg.data.train_samples);
        get_size(r, "val_samples", cfg.data.val_samples);
        get_size(r, "test_samples", cfg.data.test_samples);
        r.get("noise_std", cfg.data.noise_std);
        r.get("long_spacings", cfg.data.long_spacings);
        r.get("seed", cfg.data.seed);
        r.finish();
    }

    if (const json* n = top.sub("network")) {
        ObjectReader r(*n, "network");
        const json* list = r.sub("blocks");
        const json* single = r.sub("block");
        std::size_t num_blocks = cfg.blocks.size();
        get_size(r, "num_blocks", num_blocks);
        r.finish();
        if (list && (single || n->contains("num_blocks")))
            throw ConfigError("network: give either 'blocks' or 'block' + 'num_blocks', not both");
        if (list) {
            if (!list->is_array()) throw ConfigError("network.blocks must be an array");
            cfg.blocks.clear();
            for (std::size_t i = 0; i < list->size(); ++i)
                cfg.blocks.push_back(parse_block((*list)[i], "network.blocks[" + std::to_string(i) + "]",
                                                 default_block_spec()));
        } else {
            const BlockSpec b = single ? parse_block(*single, "network.block", default_block_spec())
                                       : cfg.blocks.front();
            cfg.blocks.assign(num_blocks, b);
        }
    }

    if (const json* t = top.sub("train")) {
        ObjectReader r(*t, "train");
        get_size(r, "epochs", cfg.train.epochs);
        get_size(r, "batch_size", cfg.train.batch_size);
        r.get("lr", cfg.train.lr);
        r.get("weight_decay", cfg.train.optimizer.weight_decay);
        r.get("beta1", cfg.train.optimizer.beta1);
        r.get("beta2", cfg.train.optimizer.beta2);
        r.get("eps", cfg.train.optimizer.eps);
        get_size(r, "max_drop_frames", cfg.train.max_drop_frames);
        get_size(r, "eval_every", cfg.train.eval_every);
        r.get("grad_clip", cfg.train.grad_clip);
        r.finish();
    }
    top.finish();
    cfg.validate();
    return cfg;
}

json to_json(const RunConfig& cfg) {
    json blocks = json::array();
    for (const auto& b : cfg.blocks) blocks.push_back(block_json(b));
    const auto& d = cfg.data;
    const auto& t = cfg.train;
    return json{{"seed", cfg.seed},
                {"out_dir", cfg.out_dir},
                {"data",
                 {{"num_classes", d.num_classes},
                  {"sequence_length", d.sequence_length},
                  {"feature_channels", d.feature_channels},
                  {"train_samples", d.train_samples},
                  {"val_samples", d.val_samples},
                  {"test_samples", d.test_samples},
                  {"noise_std", d.noise_std},
                  {"long_spacings", d.long_spacings},
                  {"seed", d.seed}}},
                {"network", {{"blocks", blocks}}},
                {"train",
                 {{"epochs", t.epochs},
                  {"batch_size", t.batch_size},
                  {"lr", t.lr},
                  {"weight_decay", t.optimizer.weight_decay},
                  {"beta1", t.optimizer.beta1},
                  {"beta2", t.optimizer.beta2},
                  {"eps", t.optimizer.eps},
                  {"max_drop_frames", t.max_drop_frames},
                  {"eval_every", t.eval_every},
                  {"grad_clip", t.grad_clip}}}};
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(item, &used);
            if (used != item.size() || v <= 0) throw std::invalid_argument(item);
            out.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw ConfigError("expected a comma-separated list of positive integers, got '" + s + "'");
        }
    }
    if (out.empty()) throw ConfigError("empty list '" + s + "'");
    return out;
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "on") return true;
    if (s == "false" || s == "0" || s == "off") return false;
    throw ConfigError("expected a boolean, got '" + s + "'");
}

double parse_double(const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("expected a number, got '" + s + "'");
    }
}

std::size_t parse_size(const std::string& s) {
    const auto v = parse_size_list(s);
    if (v.size() != 1) throw ConfigError("expected one integer, got '" + s + "'");
    return v.front();
}

std::uint64_t parse_count(const std::string& s) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(s, &used);
        if (used != s.size() || s.front() == '-') throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("expected a non-negative integer, got '" + s + "'");
    }
}

} // namespace

BlockSpec default_block_spec() {
    BlockSpec b;
    b.filter_sizes = {3, 5};
    b.dilations = {1, 4};
    b.growth_rate = 16;
    b.reduce_channels = 32;
    b.variant = BlockVariant::PartiallyDense;
    return b;
}

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.blocks.assign(2, default_block_spec());
    cfg.train.epochs = 30;
    cfg.train.lr = 3e-3;
    return cfg;
}

NetworkSpec RunConfig::network() const {
    NetworkSpec n;
    n.blocks = blocks;
    n.input_channels = data.feature_channels;
    n.num_classes = data.num_classes;
    n.sequence_length = data.sequence_length;
    return n;
}

void RunConfig::validate() const {
    data.validate();
    network().validate();
    train.validate();
    if (data.train_samples == 0 || data.val_samples == 0) throw ConfigError("train and val splits must be non-empty");
    if (train.max_drop_frames >= data.sequence_length)
        throw ConfigError("max_drop_frames must be smaller than the sequence length");
}

RunConfig parse_run_config(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what());
    }
    return from_json(j);
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

std::string to_json_text(const RunConfig& cfg) {
    return to_json(cfg).dump(2) + "\n";
}

void apply_override(RunConfig& cfg, const std::string& name, const std::string& value) {
    auto each_block = [&](auto fn) {
        for (auto& b : cfg.blocks) fn(b);
    };
    if (name == "K") each_block([&](BlockSpec& b) { b.filter_sizes = parse_size_list(value); });
    else if (name == "D") each_block([&](BlockSpec& b) { b.dilations = parse_size_list(value); });
    else if (name == "growth_rate") each_block([&](BlockSpec& b) { b.growth_rate = parse_size(value); });
    else if (name == "reduce_channels") each_block([&](BlockSpec& b) { b.reduce_channels = parse_size(value); });
    else if (name == "use_se") each_block([&](BlockSpec& b) { b.use_se = parse_bool(value); });
    else if (name == "final_se") each_block([&](BlockSpec& b) { b.final_se = parse_bool(value); });
    else if (name == "residual") each_block([&](BlockSpec& b) { b.residual = parse_bool(value); });
    else if (name == "se_reduction") each_block([&](BlockSpec& b) { b.se_reduction = parse_size(value); });
    else if (name == "dropout") each_block([&](BlockSpec& b) { b.dropout = parse_double(value); });
    else if (name == "variant") each_block([&](BlockSpec& b) { b.variant = parse_variant(value); });
    else if (name == "num_blocks") cfg.blocks.resize(parse_size(value), cfg.blocks.front());
    else if (name == "seed") cfg.seed = parse_count(value);
    else if (name == "epochs") cfg.train.epochs = parse_count(value);
    else if (name == "lr") cfg.train.lr = parse_double(value);
    else if (name == "weight_decay") cfg.train.optimizer.weight_decay = parse_double(value);
    else if (name == "max_drop_frames") cfg.train.max_drop_frames = parse_count(value);
    else if (name == "noise_std") cfg.data.noise_std = parse_double(value);
    else throw ConfigError("unknown sweep axis '" + name + "'");
    cfg.validate();
}

} // namespace dctcn
