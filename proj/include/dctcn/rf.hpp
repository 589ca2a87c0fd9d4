#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "dctcn/blocks.hpp"
#include "dctcn/tensor.hpp"

namespace dctcn {

/// Receptive field of one dilated layer: k + (d - 1)(k - 1).
std::size_t layer_rf(std::size_t k, std::size_t d);
/// Receptive field of two stacked layers: r1 + r2 - 1.
std::size_t stack_rf(std::size_t r1, std::size_t r2);

struct RFProfile {
    std::vector<std::size_t> scales;  // sorted multiset
    std::size_t max_scale = 0;
    std::size_t distinct_count = 0;

    static RFProfile from_scales(std::vector<std::size_t> scales);
    std::vector<std::size_t> distinct() const;
};

/// DAG of TC layers between a single input and a single output node.
class ConnectivityGraph {
public:
    enum class Kind { Input, Layer, Output };

    struct Node {
        Kind kind;
        std::size_t k = 1;
        std::size_t d = 1;
    };

    ConnectivityGraph();

    std::size_t input() const { return 0; }
    std::size_t output() const { return 1; }
    std::size_t add_layer(std::size_t k, std::size_t d);
    void add_edge(std::size_t from, std::size_t to);

    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<std::vector<std::size_t>>& successors() const { return succ_; }

    /// Graph of a block's wiring: dense concatenations become edges from
    /// every source to the consuming layer; every reduce source feeds the output.
    static ConnectivityGraph from_wiring(const BlockWiring& wiring);
    static ConnectivityGraph from_spec(const BlockSpec& spec);

private:
    std::vector<Node> nodes_;
    std::vector<std::vector<std::size_t>> succ_;
};

/// Receptive field of every input-to-output path. Paths that cross no TC
/// layer (R = 1) are left out unless include_passthrough is set.
RFProfile enumerate_profile(const ConnectivityGraph& graph, bool include_passthrough = false);

/// Block spec with the given K/D and connectivity, for analysis only.
BlockSpec preset_block(BlockVariant variant, std::vector<std::size_t> filter_sizes,
                       std::vector<std::size_t> dilations);

struct Support {
    std::size_t first = 0;
    std::size_t last = 0;
    std::size_t width = 0;  // 0 when nothing responds
    bool contiguous = true;
};

/// Feeds a unit impulse at time t0 (all channels) through f on a zero
/// sequence of length steps and reports which output steps are nonzero.
Support impulse_support(const std::function<Tensor(const Tensor&)>& f, std::size_t steps,
                        std::size_t channels, std::size_t t0);

/// Impulse support of a single all-ones (k, d) convolution.
std::size_t empirical_layer_rf(std::size_t k, std::size_t d, std::size_t steps);

/// Prepare a model for impulse probing: positive constant weights, zero
/// biases, identity batchnorm statistics and no SE. Throws if any block
/// has SE enabled.
void linearize_for_probe(Model& model);

/// Support width of the block stack's response to an impulse at t0, in eval mode.
std::size_t empirical_rf(Model& model, std::size_t t0, std::size_t steps);

/// Receptive field multiset of a block measured on a real instance: each
/// input-to-reduce path is isolated by masking the concatenated input
/// channels of every layer, and its impulse support is measured.
RFProfile empirical_block_profile(const BlockSpec& spec);

} // namespace dctcn
