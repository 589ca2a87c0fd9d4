#include "doctest.h"

#include <functional>
#include <set>

#include "dctcn/errors.hpp"
#include "dctcn/rf.hpp"
#include "test_support.hpp"

using namespace dctcn;

namespace {

// Receptive field by literally sweeping the filter taps: the span of
// offsets (j - (k-1)/2) d for j in [0, k).
std::size_t tap_span(std::size_t k, std::size_t d) {
    const long half = static_cast<long>((k - 1) / 2);
    long lo = 0, hi = 0;
    for (long j = 0; j < static_cast<long>(k); ++j) {
        lo = std::min(lo, (j - half) * static_cast<long>(d));
        hi = std::max(hi, (j - half) * static_cast<long>(d));
    }
    return static_cast<std::size_t>(hi - lo + 1);
}

// Enumerate every simple path by depth-first search over an adjacency list
// built by hand, stacking receptive fields along the way.
std::multiset<std::size_t> dfs_scales(const std::vector<std::size_t>& rf,
                                      const std::vector<std::vector<std::size_t>>& sources,
                                      const std::vector<std::size_t>& output_sources) {
    std::multiset<std::size_t> out;
    std::function<void(std::size_t, std::size_t, bool)> go = [&](std::size_t node, std::size_t acc, bool crossed) {
        if (node == 0) {
            if (crossed) out.insert(acc);
            return;
        }
        for (std::size_t s : sources[node - 1]) go(s, acc + rf[node - 1] - 1, true);
    };
    for (std::size_t s : output_sources) go(s, 1, false);
    return out;
}

std::vector<std::size_t> sorted(const std::multiset<std::size_t>& s) { return {s.begin(), s.end()}; }

} // namespace

TEST_CASE("layer receptive field") {
    CHECK(layer_rf(3, 1) == 3);
    CHECK(layer_rf(5, 1) == 5);
    CHECK(layer_rf(3, 4) == 9);
    CHECK(layer_rf(5, 4) == 17);
    CHECK(layer_rf(1, 7) == 1);
    CHECK_THROWS_AS(layer_rf(0, 1), std::invalid_argument);
    for (std::size_t k = 1; k <= 9; k += 2)
        for (std::size_t d = 1; d <= 8; ++d) {
            CHECK(layer_rf(k, d) == tap_span(k, d));
            CHECK(layer_rf(k, d) == empirical_layer_rf(k, d, 4 * layer_rf(k, d) + 1));
        }
}

TEST_CASE("stacking receptive fields") {
    CHECK(stack_rf(3, 5) == 7);
    CHECK(stack_rf(1, 9) == 9);
    for (std::size_t a = 1; a < 20; ++a)
        for (std::size_t b = 1; b < 20; ++b) CHECK(stack_rf(a, b) == stack_rf(b, a));
}

TEST_CASE("reference profiles for K={3,5}, D={1,4}") {
    auto profile = [](BlockVariant v) {
        return enumerate_profile(ConnectivityGraph::from_spec(preset_block(v, {3, 5}, {1, 4})));
    };
    const RFProfile lin = profile(BlockVariant::Linear);
    CHECK(lin.distinct() == std::vector<std::size_t>{3, 7, 15, 31});
    const RFProfile ms = profile(BlockVariant::MultiScale);
    CHECK(ms.distinct() == std::vector<std::size_t>{3, 5, 9, 17});
    const RFProfile pd = profile(BlockVariant::PartiallyDense);
    CHECK(pd.distinct_count == 8);
    CHECK(pd.distinct() == std::vector<std::size_t>{3, 5, 9, 11, 13, 17, 19, 21});
    const RFProfile fd = profile(BlockVariant::FullyDense);
    CHECK(fd.distinct_count == 15);
    CHECK(fd.max_scale == 31);
}

TEST_CASE("fully dense scales are the non-empty subset sums") {
    // Every ordered subset of layers is a path, so the scale multiset is
    // {1 + sum (R_i - 1) : non-empty subsets}.
    const std::vector<std::size_t> rfs{3, 5, 9, 17};
    std::multiset<std::size_t> expected;
    for (unsigned mask = 1; mask < 16; ++mask) {
        std::size_t r = 1;
        for (unsigned i = 0; i < 4; ++i)
            if (mask & (1u << i)) r += rfs[i] - 1;
        expected.insert(r);
    }
    const RFProfile fd = enumerate_profile(
        ConnectivityGraph::from_spec(preset_block(BlockVariant::FullyDense, {3, 5}, {1, 4})));
    CHECK(fd.scales == sorted(expected));
}

TEST_CASE("graph enumeration agrees with brute-force path search on hand-built wirings") {
    // PD for K={3,5}, D={1,4}: layers (k3d1, k5d1) read the input; (k3d4, k5d4) read input + both.
    const std::vector<std::size_t> rf{3, 5, 9, 17};
    const std::vector<std::vector<std::size_t>> pd{{0}, {0}, {0, 1, 2}, {0, 1, 2}};
    const RFProfile got = enumerate_profile(
        ConnectivityGraph::from_spec(preset_block(BlockVariant::PartiallyDense, {3, 5}, {1, 4})));
    CHECK(got.scales == sorted(dfs_scales(rf, pd, {0, 1, 2, 3, 4})));

    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(seed);
        const std::size_t n = 1 + rng.below(6);
        ConnectivityGraph g;
        std::vector<std::size_t> rfs;
        std::vector<std::vector<std::size_t>> srcs(n);
        std::vector<std::size_t> out_src;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t k = 1 + 2 * rng.below(4), d = 1 + rng.below(5);
            g.add_layer(k, d);
            rfs.push_back(layer_rf(k, d));
        }
        auto graph_node = [](std::size_t node) { return node == 0 ? std::size_t{0} : node + 1; };
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t s = 0; s <= i; ++s)
                if (s == 0 && srcs[i].empty() ? true : rng.bernoulli(0.5)) {
                    srcs[i].push_back(s);
                    g.add_edge(graph_node(s), graph_node(i + 1));
                }
        }
        for (std::size_t s = 0; s <= n; ++s)
            if (s == n || rng.bernoulli(0.5)) {
                out_src.push_back(s);
                g.add_edge(graph_node(s), g.output());
            }
        CHECK(enumerate_profile(g).scales == sorted(dfs_scales(rfs, srcs, out_src)));
    }
}

TEST_CASE("passthrough paths and cycles") {
    ConnectivityGraph g;
    const std::size_t a = g.add_layer(3, 1);
    g.add_edge(g.input(), a);
    g.add_edge(a, g.output());
    g.add_edge(g.input(), g.output());
    CHECK(enumerate_profile(g).scales == std::vector<std::size_t>{3});
    CHECK(enumerate_profile(g, true).scales == std::vector<std::size_t>{1, 3});

    const std::size_t b = g.add_layer(3, 1);
    g.add_edge(a, b);
    g.add_edge(b, a);
    CHECK_THROWS_AS(enumerate_profile(g), std::invalid_argument);
}

TEST_CASE("dense profiles dominate the sparse ones") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        std::vector<std::size_t> ks, ds;
        for (std::size_t k = 3; k <= 7; k += 2)
            if (rng.bernoulli(0.6)) ks.push_back(k);
        for (std::size_t d = 1; d <= 5; ++d)
            if (rng.bernoulli(0.5)) ds.push_back(d);
        if (ks.empty()) ks.push_back(3);
        if (ds.empty()) ds.push_back(1);
        auto prof = [&](BlockVariant v) {
            return enumerate_profile(ConnectivityGraph::from_spec(preset_block(v, ks, ds)));
        };
        const RFProfile fd = prof(BlockVariant::FullyDense), ms = prof(BlockVariant::MultiScale),
                        lin = prof(BlockVariant::Linear);
        CHECK(fd.max_scale == lin.max_scale);
        CHECK(fd.distinct_count >= ms.distinct_count);
        CHECK(fd.distinct_count >= lin.distinct_count);
        const std::size_t n = ks.size() * ds.size();
        CHECK(fd.scales.size() == (std::size_t{1} << n) - 1);
    }
}

TEST_CASE("impulse probe on a linearized model measures the stacked receptive field") {
    NetworkSpec n;
    BlockSpec b = preset_block(BlockVariant::Linear, {3, 5}, {1, 4});
    b.use_se = false;
    b.growth_rate = 2;
    b.reduce_channels = 2;
    b.dropout = 0.0;
    n.blocks = {b, b};
    n.input_channels = 2;
    n.num_classes = 2;
    Rng rng(1);
    Model m(n, rng);
    linearize_for_probe(m);
    // Two linear blocks stack to 31 + 31 - 1.
    CHECK(empirical_rf(m, 60, 121) == 61);

    n.blocks[0].use_se = true;
    n.blocks[1].use_se = true;
    Model with_se(n, rng);
    CHECK_THROWS_AS(linearize_for_probe(with_se), ShapeError);
}

TEST_CASE("impulse support edge cases") {
    auto identity = [](const Tensor& x) { return x; };
    const Support s = impulse_support(identity, 5, 1, 4);
    CHECK(s.first == 4);
    CHECK(s.width == 1);
    CHECK_THROWS_AS(impulse_support(identity, 5, 1, 5), ShapeError);
    auto zero = [](const Tensor& x) { return Tensor(x.shape()); };
    CHECK(impulse_support(zero, 5, 1, 2).width == 0);
}
