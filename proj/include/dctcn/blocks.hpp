#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dctcn/checkpoint.hpp"
#include "dctcn/layers.hpp"

namespace dctcn {

/// Connectivity of the TC layers inside a block.
///
/// FullyDense and PartiallyDense are the densely connected variants.
/// Linear (plain chain) and MultiScale (parallel branches on the block
/// input) are the sparse baselines used for comparison.
enum class BlockVariant { FullyDense, PartiallyDense, Linear, MultiScale };

std::string to_string(BlockVariant v);
BlockVariant parse_variant(const std::string& s);

struct BlockSpec {
    std::vector<std::size_t> filter_sizes{3, 5};  // K
    std::vector<std::size_t> dilations{1, 4};     // D
    std::size_t growth_rate = 128;                // C_o
    std::size_t reduce_channels = 512;            // C_r
    BlockVariant variant = BlockVariant::PartiallyDense;
    bool use_se = true;
    std::size_t se_reduction = 16;
    bool final_se = true;  // SE on the concatenation feeding the reduce layer
    bool residual = true;  // add (converted) block input to the reduce output
    double dropout = 0.2;

    void validate() const;
    std::size_t num_layers() const { return filter_sizes.size() * dilations.size(); }
};

/// Node 0 is the block input; node i > 0 is the output of layer i - 1.
struct LayerWiring {
    std::size_t k = 1;
    std::size_t d = 1;
    std::vector<std::size_t> sources;  // concatenated in this order
};

struct BlockWiring {
    std::vector<LayerWiring> layers;
    std::vector<std::size_t> reduce_sources;
};

/// Layer order and inputs for a block. FD orders layers by ascending
/// receptive field (ties: smaller k first) and feeds each one the block
/// input plus every earlier output. PD groups layers by dilation
/// (ascending d, ascending k within a group); each group reads the block
/// input plus all outputs of earlier groups. The reduce layer reads the
/// block input followed by every layer output.
BlockWiring block_wiring(const BlockSpec& spec);

struct BlockPlan {
    std::size_t in_channels = 0;
    std::vector<std::size_t> layer_in_channels;
    std::size_t pre_reduce_width = 0;
    std::size_t out_channels = 0;
};

/// Channel accounting without allocating parameters.
BlockPlan plan_block(const BlockSpec& spec, std::size_t in_channels);

/// SE (optional) -> dilated conv -> batchnorm -> relu -> dropout.
class TcLayer {
public:
    TcLayer(const BlockSpec& spec, std::size_t k, std::size_t d, std::size_t in_channels, Rng& rng);

    Tensor forward(const Tensor& x, const ForwardContext& ctx);
    Tensor backward(const Tensor& grad_out);
    void register_params(const std::string& prefix, ParamRegistry& reg);

    std::string name() const;
    std::size_t in_channels() const { return conv.spec().in_channels; }

    std::optional<SqueezeExcite> se;
    TemporalConv conv;
    BatchNorm bn;
    Dropout dropout;

private:
    std::optional<Tensor> activated_;
};

class Block {
public:
    Block(const BlockSpec& spec, std::size_t in_channels, Rng& rng);

    /// x: (B,T,C_i) -> (B,T,C_r).
    Tensor forward(const Tensor& x, const ForwardContext& ctx);
    Tensor backward(const Tensor& grad_out);
    void register_params(const std::string& prefix, ParamRegistry& reg);

    const BlockSpec& spec() const { return spec_; }
    const BlockWiring& wiring() const { return wiring_; }
    const BlockPlan& plan() const { return plan_; }
    std::size_t in_channels() const { return plan_.in_channels; }
    std::size_t out_channels() const { return plan_.out_channels; }

    std::vector<TcLayer> layers;
    std::optional<SqueezeExcite> final_se;
    Pointwise reduce;
    BatchNorm reduce_bn;
    Dropout reduce_dropout;
    std::optional<Pointwise> convert;  // present when C_i != C_r

private:
    std::vector<std::size_t> node_widths() const;
    void scatter(const Tensor& grad, const std::vector<std::size_t>& sources,
                 std::vector<Tensor>& node_grads) const;

    BlockSpec spec_;
    BlockWiring wiring_;
    BlockPlan plan_;
    std::optional<Tensor> output_;
    Shape input_shape_;
};

struct NetworkSpec {
    std::vector<BlockSpec> blocks{BlockSpec{}};
    std::size_t input_channels = 512;  // C_2
    std::size_t num_classes = 500;     // C_4
    std::size_t sequence_length = 29;  // T

    void validate() const;
    /// C_3, the width entering temporal pooling.
    std::size_t head_channels() const { return blocks.back().reduce_channels; }
};

/// Blocks -> masked mean over time -> linear head producing logits.
class Model {
public:
    Model(const NetworkSpec& spec, Rng& rng);

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    /// (B,T,C_2) -> (B,T,C_3), the block stack alone.
    Tensor features(const Tensor& x, const ForwardContext& ctx);
    /// (B,T,C_2) -> (B,C_4) logits. lengths gives the valid prefix of each
    /// sequence; empty means full length.
    Tensor forward(const Tensor& x, std::span<const std::size_t> lengths, const ForwardContext& ctx);
    Tensor forward(const Tensor& x, const ForwardContext& ctx) { return forward(x, {}, ctx); }
    /// Accumulates parameter gradients, returns d loss / d input.
    Tensor backward(const Tensor& grad_logits);

    const ParamRegistry& registry() const { return registry_; }
    void zero_grad();
    std::size_t num_parameters() const;

    /// Parameters and buffers by name.
    NamedTensors state() const;
    void load_state(const NamedTensors& state);

    const NetworkSpec& spec() const { return spec_; }

    std::vector<Block> blocks;
    Pointwise head;

private:
    NetworkSpec spec_;
    ParamRegistry registry_;
    std::vector<std::size_t> lengths_;
    Shape feature_shape_;
};

} // namespace dctcn
