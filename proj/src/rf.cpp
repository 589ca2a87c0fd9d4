#include "dctcn/rf.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "dctcn/errors.hpp"

namespace dctcn {

std::size_t layer_rf(std::size_t k, std::size_t d) {
    if (k == 0 || d == 0) throw std::invalid_argument("layer_rf: k and d must be positive");
    return k + (d - 1) * (k - 1);
}

std::size_t stack_rf(std::size_t r1, std::size_t r2) {
    if (r1 == 0 || r2 == 0) throw std::invalid_argument("stack_rf: receptive fields must be positive");
    return r1 + r2 - 1;
}

RFProfile RFProfile::from_scales(std::vector<std::size_t> scales) {
    std::sort(scales.begin(), scales.end());
    RFProfile p;
    p.max_scale = scales.empty() ? 0 : scales.back();
    p.scales = std::move(scales);
    p.distinct_count = p.distinct().size();
    return p;
}

std::vector<std::size_t> RFProfile::distinct() const {
    std::vector<std::size_t> d = scales;
    d.erase(std::unique(d.begin(), d.end()), d.end());
    return d;
}

ConnectivityGraph::ConnectivityGraph() : nodes_{{Kind::Input}, {Kind::Output}}, succ_(2) {}

std::size_t ConnectivityGraph::add_layer(std::size_t k, std::size_t d) {
    nodes_.push_back({Kind::Layer, k, d});
    succ_.emplace_back();
    return nodes_.size() - 1;
}

void ConnectivityGraph::add_edge(std::size_t from, std::size_t to) {
    if (from >= nodes_.size() || to >= nodes_.size()) throw std::out_of_range("graph edge references unknown node");
    if (to == input() || from == output()) throw std::invalid_argument("edges cannot enter the input or leave the output");
    succ_[from].push_back(to);
}

ConnectivityGraph ConnectivityGraph::from_wiring(const BlockWiring& wiring) {
    ConnectivityGraph g;
    std::vector<std::size_t> node_of{g.input()};
    for (const auto& layer : wiring.layers) node_of.push_back(g.add_layer(layer.k, layer.d));
    for (std::size_t i = 0; i < wiring.layers.size(); ++i)
        for (std::size_t s : wiring.layers[i].sources) g.add_edge(node_of.at(s), node_of[i + 1]);
    for (std::size_t s : wiring.reduce_sources) g.add_edge(node_of.at(s), g.output());
    return g;
}

ConnectivityGraph ConnectivityGraph::from_spec(const BlockSpec& spec) {
    return from_wiring(block_wiring(spec));
}

RFProfile enumerate_profile(const ConnectivityGraph& graph, bool include_passthrough) {
    const auto& nodes = graph.nodes();
    const auto& succ = graph.successors();
    const std::size_t n = nodes.size();

    std::vector<std::size_t> indegree(n, 0);
    for (const auto& out : succ)
        for (std::size_t v : out) ++indegree[v];
    std::vector<std::size_t> order, ready{graph.input()};
    if (indegree[graph.input()] != 0) throw std::invalid_argument("input node has incoming edges");
    while (!ready.empty()) {
        const std::size_t u = ready.back();
        ready.pop_back();
        order.push_back(u);
        for (std::size_t v : succ[u])
            if (--indegree[v] == 0) ready.push_back(v);
    }
    for (std::size_t v = 0; v < n; ++v)
        if (indegree[v] != 0) throw std::invalid_argument("connectivity graph has a cycle");

    // Path counts keyed by (accumulated receptive field, crossed a TC layer).
    using Key = std::pair<std::size_t, bool>;
    std::vector<std::map<Key, std::size_t>> paths(n);
    paths[graph.input()][{1, false}] = 1;
    for (std::size_t u : order) {
        const auto& here = paths[u];
        for (std::size_t v : succ[u]) {
            auto& there = paths[v];
            if (nodes[v].kind == ConnectivityGraph::Kind::Layer) {
                const std::size_t r = layer_rf(nodes[v].k, nodes[v].d);
                for (const auto& [key, count] : here) there[{stack_rf(key.first, r), true}] += count;
            } else {
                for (const auto& [key, count] : here) there[key] += count;
            }
        }
    }

    std::vector<std::size_t> scales;
    for (const auto& [key, count] : paths[graph.output()]) {
        if (!key.second && !include_passthrough) continue;
        scales.insert(scales.end(), count, key.first);
    }
    return RFProfile::from_scales(std::move(scales));
}

BlockSpec preset_block(BlockVariant variant, std::vector<std::size_t> filter_sizes,
                       std::vector<std::size_t> dilations) {
    BlockSpec spec;
    spec.variant = variant;
    spec.filter_sizes = std::move(filter_sizes);
    spec.dilations = std::move(dilations);
    spec.validate();
    return spec;
}

Support impulse_support(const std::function<Tensor(const Tensor&)>& f, std::size_t steps,
                        std::size_t channels, std::size_t t0) {
    if (t0 >= steps) throw ShapeError("probe index " + std::to_string(t0) + " outside sequence of length " +
                                      std::to_string(steps));
    Tensor x({1, steps, channels});
    for (std::size_t c = 0; c < channels; ++c) x.at(0, t0, c) = 1.0;
    const Tensor y = f(x);
    require_rank(y, 3, "impulse response");

    Support s;
    std::vector<bool> hit(y.dim(1), false);
    for (std::size_t t = 0; t < y.dim(1); ++t)
        for (std::size_t c = 0; c < y.dim(2); ++c)
            if (y.at(0, t, c) != 0.0) hit[t] = true;
    auto first = std::find(hit.begin(), hit.end(), true);
    if (first == hit.end()) return s;
    auto last = std::find(hit.rbegin(), hit.rend(), true);
    s.first = static_cast<std::size_t>(first - hit.begin());
    s.last = hit.size() - 1 - static_cast<std::size_t>(last - hit.rbegin());
    s.width = s.last - s.first + 1;
    s.contiguous = std::all_of(hit.begin() + static_cast<std::ptrdiff_t>(s.first),
                               hit.begin() + static_cast<std::ptrdiff_t>(s.last) + 1, [](bool b) { return b; });
    return s;
}

std::size_t empirical_layer_rf(std::size_t k, std::size_t d, std::size_t steps) {
    const ConvSpec spec{k, d, 1, 1};
    const Tensor w({1, 1, k}, 1.0), bias({1});
    auto conv = [&](const Tensor& x) { return temporal_conv_forward(x, spec, w, bias); };
    return impulse_support(conv, steps, 1, steps / 2).width;
}

namespace {

void identity_stats(BatchNorm& bn) {
    bn.gamma.value.fill(1.0);
    bn.beta.value.fill(0.0);
    bn.running_mean.fill(0.0);
    bn.running_var.fill(1.0);
}

void constant_weights(Parameter& w, Parameter& b) {
    const double fan_in = static_cast<double>(w.value.size() / w.value.dim(0));
    w.value.fill(1.0 / fan_in);
    b.value.fill(0.0);
}

} // namespace

void linearize_for_probe(Model& model) {
    for (auto& block : model.blocks) {
        if (block.final_se) throw ShapeError("impulse probing requires SE to be disabled");
        for (auto& layer : block.layers) {
            if (layer.se) throw ShapeError("impulse probing requires SE to be disabled");
            constant_weights(layer.conv.weight, layer.conv.bias);
            identity_stats(layer.bn);
        }
        constant_weights(block.reduce.weight, block.reduce.bias);
        identity_stats(block.reduce_bn);
        if (block.convert) constant_weights(block.convert->weight, block.convert->bias);
    }
}

std::size_t empirical_rf(Model& model, std::size_t t0, std::size_t steps) {
    const ForwardContext ctx{Mode::Eval, nullptr, false};
    auto probe = [&](const Tensor& x) { return model.features(x, ctx); };
    return impulse_support(probe, steps, model.spec().input_channels, t0).width;
}

RFProfile empirical_block_profile(const BlockSpec& spec) {
    BlockSpec probe_spec = spec;
    probe_spec.use_se = false;
    probe_spec.residual = false;
    probe_spec.growth_rate = 1;
    probe_spec.reduce_channels = 1;
    probe_spec.dropout = 0.0;
    Rng rng(0);
    Block block(probe_spec, 1, rng);
    const auto& wiring = block.wiring();

    std::size_t bound = 1;
    for (const auto& l : wiring.layers) bound += layer_rf(l.k, l.d) - 1;
    const std::size_t steps = 2 * bound + 1;

    // Each path is a chain of (layer index, position of its predecessor in
    // that layer's concatenated input), listed from the reduce end.
    struct Hop {
        std::size_t layer;
        std::size_t input_slot;
    };
    std::vector<std::size_t> scales;
    std::vector<Hop> hops;
    const ForwardContext ctx{Mode::Eval, nullptr, false};

    auto measure = [&](std::size_t reduce_slot) {
        for (auto& layer : block.layers) {
            layer.conv.weight.value.fill(0.0);
            layer.conv.bias.value.fill(0.0);
            identity_stats(layer.bn);
        }
        identity_stats(block.reduce_bn);
        block.reduce.weight.value.fill(0.0);
        block.reduce.bias.value.fill(0.0);
        block.reduce.weight.value[reduce_slot] = 1.0;
        for (const Hop& h : hops) {
            Tensor& w = block.layers[h.layer].conv.weight.value;
            const std::size_t k = w.dim(2);
            for (std::size_t j = 0; j < k; ++j) w[h.input_slot * k + j] = 1.0;
        }
        auto f = [&](const Tensor& x) { return block.forward(x, ctx); };
        scales.push_back(impulse_support(f, steps, 1, bound).width);
    };

    // Walk backwards from a node to the block input, one source at a time.
    std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t node, std::size_t reduce_slot) {
        if (node == 0) {
            measure(reduce_slot);
            return;
        }
        const auto& sources = wiring.layers[node - 1].sources;
        for (std::size_t slot = 0; slot < sources.size(); ++slot) {
            hops.push_back({node - 1, slot});
            walk(sources[slot], reduce_slot);
            hops.pop_back();
        }
    };
    for (std::size_t slot = 0; slot < wiring.reduce_sources.size(); ++slot)
        if (wiring.reduce_sources[slot] != 0) walk(wiring.reduce_sources[slot], slot);

    return RFProfile::from_scales(std::move(scales));
}

} // namespace dctcn
