#include "dctcn/blocks.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "dctcn/errors.hpp"
#include "dctcn/rf.hpp"

namespace dctcn {

std::string to_string(BlockVariant v) {
    switch (v) {
        case BlockVariant::FullyDense: return "FD";
        case BlockVariant::PartiallyDense: return "PD";
        case BlockVariant::Linear: return "linear";
        case BlockVariant::MultiScale: return "multiscale";
    }
    return "?";
}

BlockVariant parse_variant(const std::string& s) {
    if (s == "FD" || s == "fd") return BlockVariant::FullyDense;
    if (s == "PD" || s == "pd") return BlockVariant::PartiallyDense;
    if (s == "linear") return BlockVariant::Linear;
    if (s == "multiscale") return BlockVariant::MultiScale;
    throw ConfigError("unknown block variant '" + s + "' (expected FD, PD, linear or multiscale)");
}

void BlockSpec::validate() const {
    auto check_set = [](const std::vector<std::size_t>& v, const char* what) {
        if (v.empty()) throw ConfigError(std::string("block ") + what + " set is empty");
        if (std::set<std::size_t>(v.begin(), v.end()).size() != v.size())
            throw ConfigError(std::string("block ") + what + " set has duplicates");
        for (std::size_t x : v)
            if (x == 0) throw ConfigError(std::string("block ") + what + " values must be positive");
    };
    check_set(filter_sizes, "filter size");
    check_set(dilations, "dilation");
    for (std::size_t k : filter_sizes)
        if (k % 2 == 0) throw ConfigError("filter sizes must be odd, got " + std::to_string(k));
    if (growth_rate == 0 || reduce_channels == 0) throw ConfigError("growth rate and reduce channels must be positive");
    if (use_se && se_reduction == 0) throw ConfigError("SE reduction ratio must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

BlockWiring block_wiring(const BlockSpec& spec) {
    spec.validate();
    std::vector<std::size_t> ks = spec.filter_sizes, ds = spec.dilations;
    std::sort(ks.begin(), ks.end());
    std::sort(ds.begin(), ds.end());

    BlockWiring w;
    if (spec.variant == BlockVariant::PartiallyDense) {
        std::vector<std::size_t> visible{0};
        for (std::size_t d : ds) {
            std::vector<std::size_t> group_nodes;
            for (std::size_t k : ks) {
                w.layers.push_back({k, d, visible});
                group_nodes.push_back(w.layers.size());
            }
            visible.insert(visible.end(), group_nodes.begin(), group_nodes.end());
        }
    } else {
        std::vector<std::pair<std::size_t, std::size_t>> kd;
        for (std::size_t k : ks)
            for (std::size_t d : ds) kd.emplace_back(k, d);
        std::stable_sort(kd.begin(), kd.end(), [](const auto& a, const auto& b) {
            const auto ra = layer_rf(a.first, a.second), rb = layer_rf(b.first, b.second);
            return ra != rb ? ra < rb : a.first < b.first;
        });
        for (std::size_t i = 0; i < kd.size(); ++i) {
            std::vector<std::size_t> sources;
            switch (spec.variant) {
                case BlockVariant::FullyDense:
                    for (std::size_t s = 0; s <= i; ++s) sources.push_back(s);
                    break;
                case BlockVariant::Linear: sources = {i}; break;
                default: sources = {0}; break;
            }
            w.layers.push_back({kd[i].first, kd[i].second, std::move(sources)});
        }
    }
    for (std::size_t n = 0; n <= w.layers.size(); ++n) w.reduce_sources.push_back(n);
    return w;
}

BlockPlan plan_block(const BlockSpec& spec, std::size_t in_channels) {
    if (in_channels == 0) throw ConfigError("block input channels must be positive");
    const BlockWiring w = block_wiring(spec);
    auto width = [&](std::size_t node) { return node == 0 ? in_channels : spec.growth_rate; };
    BlockPlan plan;
    plan.in_channels = in_channels;
    for (const auto& layer : w.layers) {
        std::size_t c = 0;
        for (std::size_t s : layer.sources) c += width(s);
        plan.layer_in_channels.push_back(c);
    }
    for (std::size_t s : w.reduce_sources) plan.pre_reduce_width += width(s);
    plan.out_channels = spec.reduce_channels;
    return plan;
}

TcLayer::TcLayer(const BlockSpec& spec, std::size_t k, std::size_t d, std::size_t in_channels, Rng& rng)
    : se(spec.use_se ? std::optional<SqueezeExcite>(std::in_place, SESpec{in_channels, spec.se_reduction}, rng)
                     : std::nullopt),
      conv(ConvSpec{k, d, in_channels, spec.growth_rate}, rng),
      bn(spec.growth_rate),
      dropout(spec.dropout) {}

std::string TcLayer::name() const {
    return "layer_k" + std::to_string(conv.spec().k) + "d" + std::to_string(conv.spec().d);
}

Tensor TcLayer::forward(const Tensor& x, const ForwardContext& ctx) {
    Tensor h = conv.forward(se ? se->forward(x, ctx) : x, ctx);
    Tensor a = relu_forward(bn.forward(h, ctx));
    Tensor y = dropout.forward(a, ctx);
    if (ctx.record) activated_ = std::move(a);
    else activated_.reset();
    return y;
}

Tensor TcLayer::backward(const Tensor& grad_out) {
    if (!activated_) throw std::logic_error("TC layer: backward called without a recorded forward");
    Tensor g = relu_backward(dropout.backward(grad_out), *activated_);
    g = conv.backward(bn.backward(g));
    return se ? se->backward(g) : g;
}

void TcLayer::register_params(const std::string& prefix, ParamRegistry& reg) {
    if (se) se->register_params(prefix + ".se", reg);
    conv.register_params(prefix + ".conv", reg);
    bn.register_params(prefix + ".bn", reg);
}

Block::Block(const BlockSpec& spec, std::size_t in_channels, Rng& rng)
    : reduce(plan_block(spec, in_channels).pre_reduce_width, spec.reduce_channels, rng),
      reduce_bn(spec.reduce_channels),
      reduce_dropout(spec.dropout),
      spec_(spec),
      wiring_(block_wiring(spec)),
      plan_(plan_block(spec, in_channels)) {
    layers.reserve(wiring_.layers.size());
    for (std::size_t i = 0; i < wiring_.layers.size(); ++i) {
        const auto& lw = wiring_.layers[i];
        layers.emplace_back(spec_, lw.k, lw.d, plan_.layer_in_channels[i], rng);
    }
    if (spec_.use_se && spec_.final_se) final_se.emplace(SESpec{plan_.pre_reduce_width, spec_.se_reduction}, rng);
    if (spec_.residual && in_channels != spec_.reduce_channels) convert.emplace(in_channels, spec_.reduce_channels, rng);
}

std::vector<std::size_t> Block::node_widths() const {
    std::vector<std::size_t> widths{plan_.in_channels};
    widths.resize(layers.size() + 1, spec_.growth_rate);
    return widths;
}

namespace {

Tensor gather(const std::vector<Tensor>& nodes, const std::vector<std::size_t>& sources) {
    if (sources.size() == 1) return nodes[sources.front()];
    std::vector<const Tensor*> parts;
    parts.reserve(sources.size());
    for (std::size_t s : sources) parts.push_back(&nodes[s]);
    return concat_channels(parts);
}

} // namespace

void Block::scatter(const Tensor& grad, const std::vector<std::size_t>& sources,
                    std::vector<Tensor>& node_grads) const {
    const auto widths = node_widths();
    const std::size_t rows = grad.dim(0) * grad.dim(1), total = grad.dim(2);
    std::size_t offset = 0;
    for (std::size_t s : sources) {
        Tensor& dst = node_grads[s];
        const std::size_t w = widths[s];
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < w; ++c) dst[r * w + c] += grad[r * total + offset + c];
        offset += w;
    }
}

Tensor Block::forward(const Tensor& x, const ForwardContext& ctx) {
    require_rank(x, 3, "block input");
    if (x.dim(2) != plan_.in_channels)
        throw ShapeError("block expects " + std::to_string(plan_.in_channels) + " input channels, got " +
                         shape_str(x.shape()));
    input_shape_ = x.shape();

    std::vector<Tensor> nodes;
    nodes.reserve(layers.size() + 1);
    nodes.push_back(x);
    for (std::size_t i = 0; i < layers.size(); ++i)
        nodes.push_back(layers[i].forward(gather(nodes, wiring_.layers[i].sources), ctx));

    Tensor cat = gather(nodes, wiring_.reduce_sources);
    if (final_se) cat = final_se->forward(cat, ctx);
    Tensor r = reduce_dropout.forward(reduce_bn.forward(reduce.forward(cat, ctx), ctx), ctx);
    if (spec_.residual) add_inplace(r, convert ? convert->forward(x, ctx) : x);
    Tensor out = relu_forward(r);
    if (ctx.record) output_ = out;
    else output_.reset();
    return out;
}

Tensor Block::backward(const Tensor& grad_out) {
    if (!output_) throw std::logic_error("block: backward called without a recorded forward");
    Tensor g = relu_backward(grad_out, *output_);

    const auto widths = node_widths();
    std::vector<Tensor> node_grads;
    node_grads.reserve(widths.size());
    for (std::size_t w : widths) node_grads.emplace_back(Shape{input_shape_[0], input_shape_[1], w});

    if (spec_.residual) add_inplace(node_grads[0], convert ? convert->backward(g) : g);
    g = reduce.backward(reduce_bn.backward(reduce_dropout.backward(g)));
    if (final_se) g = final_se->backward(g);
    scatter(g, wiring_.reduce_sources, node_grads);

    for (std::size_t i = layers.size(); i-- > 0;) {
        Tensor gi = layers[i].backward(node_grads[i + 1]);
        scatter(gi, wiring_.layers[i].sources, node_grads);
    }
    return std::move(node_grads[0]);
}

void Block::register_params(const std::string& prefix, ParamRegistry& reg) {
    for (auto& layer : layers) layer.register_params(prefix + "." + layer.name(), reg);
    if (final_se) final_se->register_params(prefix + ".se_final", reg);
    reduce.register_params(prefix + ".reduce", reg);
    reduce_bn.register_params(prefix + ".reduce_bn", reg);
    if (convert) convert->register_params(prefix + ".convert", reg);
}

void NetworkSpec::validate() const {
    if (blocks.empty()) throw ConfigError("network needs at least one block");
    if (input_channels == 0) throw ConfigError("input channels must be positive");
    if (num_classes < 2) throw ConfigError("need at least two classes");
    if (sequence_length == 0) throw ConfigError("sequence length must be positive");
    for (const auto& b : blocks) {
        b.validate();
        if (b.variant != blocks.front().variant) throw ConfigError("all blocks must share one variant");
    }
}

Model::Model(const NetworkSpec& spec, Rng& rng)
    : head((spec.validate(), spec.head_channels()), spec.num_classes, rng), spec_(spec) {
    // head is constructed first (member order); blocks draw from rng afterwards.
    blocks.reserve(spec_.blocks.size());
    std::size_t channels = spec_.input_channels;
    for (const auto& bs : spec_.blocks) {
        blocks.emplace_back(bs, channels, rng);
        channels = bs.reduce_channels;
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) blocks[b].register_params("block" + std::to_string(b), registry_);
    head.register_params("head", registry_);
}

Tensor Model::features(const Tensor& x, const ForwardContext& ctx) {
    require_rank(x, 3, "model input");
    if (x.dim(2) != spec_.input_channels)
        throw ShapeError("model expects " + std::to_string(spec_.input_channels) + " feature channels, got " +
                         shape_str(x.shape()));
    Tensor h = x;
    for (auto& block : blocks) h = block.forward(h, ctx);
    return h;
}

Tensor Model::forward(const Tensor& x, std::span<const std::size_t> lengths, const ForwardContext& ctx) {
    Tensor f = features(x, ctx);
    feature_shape_ = f.shape();
    if (lengths.empty()) lengths_.assign(x.dim(0), x.dim(1));
    else lengths_.assign(lengths.begin(), lengths.end());
    return head.forward(global_mean_over_time(f, lengths_), ctx);
}

Tensor Model::backward(const Tensor& grad_logits) {
    Tensor gpool = head.backward(grad_logits);
    const std::size_t batch = feature_shape_[0], channels = feature_shape_[2];
    Tensor g(feature_shape_);
    for (std::size_t b = 0; b < batch; ++b) {
        const double inv = 1.0 / static_cast<double>(lengths_[b]);
        for (std::size_t t = 0; t < lengths_[b]; ++t)
            for (std::size_t c = 0; c < channels; ++c) g.at(b, t, c) = gpool[b * channels + c] * inv;
    }
    for (std::size_t b = blocks.size(); b-- > 0;) g = blocks[b].backward(g);
    return g;
}

void Model::zero_grad() {
    for (auto& p : registry_.params) p.param->zero_grad();
}

std::size_t Model::num_parameters() const {
    std::size_t n = 0;
    for (const auto& p : registry_.params) n += p.param->value.size();
    return n;
}

NamedTensors Model::state() const {
    NamedTensors out;
    for (const auto& p : registry_.params) out.emplace(p.name, p.param->value);
    for (const auto& b : registry_.buffers) out.emplace(b.name, *b.buffer);
    return out;
}

void Model::load_state(const NamedTensors& state) {
    auto assign = [&](const std::string& name, Tensor& dst) {
        auto it = state.find(name);
        if (it == state.end()) throw IoError("checkpoint is missing '" + name + "'");
        if (it->second.shape() != dst.shape())
            throw IoError("checkpoint entry '" + name + "' has shape " + shape_str(it->second.shape()) +
                          ", model expects " + shape_str(dst.shape()));
        dst = it->second;
    };
    for (auto& p : registry_.params) assign(p.name, p.param->value);
    for (auto& b : registry_.buffers) assign(b.name, *b.buffer);
}

} // namespace dctcn
