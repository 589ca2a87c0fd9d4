#include "dctcn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dctcn/errors.hpp"

namespace dctcn {

namespace {

constexpr std::uint64_t kMotifStream = 0x6d6f746966ULL;
constexpr std::size_t kMotifChannels = 4;

double signed_amplitude(Rng& rng) {
    const double mag = rng.uniform(0.5, 1.0);
    return rng.bernoulli(0.5) ? mag : -mag;
}

// k distinct channels from [lo, hi), ascending.
std::vector<std::size_t> pick_channels(Rng& rng, std::size_t lo, std::size_t hi, std::size_t k) {
    std::vector<std::size_t> pool(hi - lo);
    std::iota(pool.begin(), pool.end(), lo);
    k = std::min(k, pool.size());
    for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

} // namespace

const char* to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw ConfigError("unknown split '" + s + "'");
}

void DatasetSpec::validate() const {
    if (num_classes < 2) throw ConfigError("dataset needs at least two classes");
    if (feature_channels < 2) throw ConfigError("dataset needs at least two feature channels");
    if (long_spacings.empty()) throw ConfigError("dataset needs at least one long-motif spacing");
    if (noise_std < 0.0 || !std::isfinite(noise_std)) throw ConfigError("noise_std must be finite and non-negative");
    for (std::size_t d : long_spacings) {
        if (d == 0) throw ConfigError("long-motif spacing must be positive");
        if ((kLongMotifPulses - 1) * d + 1 > sequence_length)
            throw ConfigError("long motif with spacing " + std::to_string(d) + " spans " +
                              std::to_string((kLongMotifPulses - 1) * d + 1) + " frames, more than T=" +
                              std::to_string(sequence_length));
    }
    if (sequence_length < kShortMotifFrames) throw ConfigError("sequence too short for the short motif");
}

std::size_t DatasetSpec::samples(Split s) const {
    switch (s) {
        case Split::Train: return train_samples;
        case Split::Val: return val_samples;
        case Split::Test: return test_samples;
    }
    return 0;
}

MotifBank make_motifs(const DatasetSpec& spec) {
    spec.validate();
    Rng rng(Rng::derive(spec.seed, {kMotifStream}));
    const std::size_t channels = spec.feature_channels, half = channels / 2;
    const std::size_t num_short = (spec.num_classes + 1) / 2;

    MotifBank bank;
    for (std::size_t m = 0; m < num_short; ++m) {
        Tensor pattern({kShortMotifFrames, channels});
        for (std::size_t c : pick_channels(rng, 0, half, kMotifChannels))
            for (std::size_t f = 0; f < kShortMotifFrames; ++f) pattern[f * channels + c] = signed_amplitude(rng);
        bank.short_patterns.push_back(std::move(pattern));
    }
    bank.long_pulse.assign(channels, 0.0);
    for (std::size_t c : pick_channels(rng, half, channels, kMotifChannels)) bank.long_pulse[c] = signed_amplitude(rng);
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        bank.short_index.push_back(c / 2);
        bank.long_spacing.push_back(spec.long_spacings[c % spec.long_spacings.size()]);
    }
    return bank;
}

Sample generate_sample(const DatasetSpec& spec, const MotifBank& motifs, Split split, std::size_t index) {
    Rng rng(Rng::derive(spec.seed, {static_cast<std::uint64_t>(split), index}));
    const std::size_t steps = spec.sequence_length, channels = spec.feature_channels;
    Sample s{Tensor({steps, channels}), index % spec.num_classes};
    if (spec.noise_std > 0.0)
        for (double& v : s.features.data()) v = spec.noise_std * rng.normal();

    const Tensor& pattern = motifs.short_patterns[motifs.short_index[s.label]];
    const std::size_t short_onset = rng.below(steps - kShortMotifFrames + 1);
    for (std::size_t f = 0; f < kShortMotifFrames; ++f)
        for (std::size_t c = 0; c < channels; ++c)
            s.features[(short_onset + f) * channels + c] += pattern[f * channels + c];

    const std::size_t spacing = motifs.long_spacing[s.label];
    const std::size_t span = (kLongMotifPulses - 1) * spacing + 1;
    const std::size_t long_onset = rng.below(steps - span + 1);
    for (std::size_t p = 0; p < kLongMotifPulses; ++p)
        for (std::size_t c = 0; c < channels; ++c)
            s.features[(long_onset + p * spacing) * channels + c] += motifs.long_pulse[c];
    return s;
}

const std::vector<Sample>& Dataset::split(Split s) const {
    switch (s) {
        case Split::Train: return train;
        case Split::Val: return val;
        default: return test;
    }
}

Dataset generate(const DatasetSpec& spec) {
    Dataset ds{spec, make_motifs(spec), {}, {}, {}};
    for (Split s : {Split::Train, Split::Val, Split::Test}) {
        auto& out = s == Split::Train ? ds.train : s == Split::Val ? ds.val : ds.test;
        out.reserve(spec.samples(s));
        for (std::size_t i = 0; i < spec.samples(s); ++i) out.push_back(generate_sample(spec, ds.motifs, s, i));
    }
    return ds;
}

Tensor drop_frames(const Tensor& x, std::size_t n, Rng& rng) {
    require_rank(x, 2, "drop_frames");
    const std::size_t steps = x.dim(0), channels = x.dim(1);
    if (n >= steps)
        throw ShapeError("drop_frames: cannot drop " + std::to_string(n) + " of " + std::to_string(steps) + " frames");
    if (n == 0) return x;
    std::vector<std::size_t> idx(steps);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.below(steps - i)]);
    std::vector<bool> dropped(steps, false);
    for (std::size_t i = 0; i < n; ++i) dropped[idx[i]] = true;

    Tensor out({steps - n, channels});
    std::size_t row = 0;
    for (std::size_t t = 0; t < steps; ++t) {
        if (dropped[t]) continue;
        std::copy_n(&x[t * channels], channels, &out[row * channels]);
        ++row;
    }
    return out;
}

Batch make_batch(std::span<const Tensor> sequences, std::span<const std::size_t> labels, std::size_t max_steps) {
    if (sequences.empty()) throw ShapeError("make_batch: empty batch");
    if (labels.size() != sequences.size()) throw ShapeError("make_batch: label count mismatch");
    const std::size_t channels = sequences.front().dim(1);
    Batch batch{Tensor({sequences.size(), max_steps, channels}), {}, {labels.begin(), labels.end()}};
    for (std::size_t b = 0; b < sequences.size(); ++b) {
        const Tensor& x = sequences[b];
        require_rank(x, 2, "make_batch");
        if (x.dim(1) != channels || x.dim(0) > max_steps || x.dim(0) == 0)
            throw ShapeError("make_batch: sequence " + shape_str(x.shape()) + " does not fit width " +
                             std::to_string(max_steps));
        std::copy(x.data().begin(), x.data().end(), &batch.features.at(b, 0, 0));
        batch.lengths.push_back(x.dim(0));
    }
    return batch;
}

std::size_t matched_filter_predict(const MotifBank& motifs, const Tensor& x) {
    require_rank(x, 2, "matched_filter_predict");
    const std::size_t steps = x.dim(0), channels = x.dim(1), half = channels / 2;

    // Cosine similarity between a template and a set of frames, restricted
    // to the channel range the template family lives on.
    auto cosine = [&](auto frame_of, std::size_t frames, auto templ, std::size_t lo, std::size_t hi) {
        double dot = 0.0, xx = 0.0, tt = 0.0;
        for (std::size_t f = 0; f < frames; ++f)
            for (std::size_t c = lo; c < hi; ++c) {
                const double xv = x[frame_of(f) * channels + c], tv = templ(f, c);
                dot += xv * tv;
                xx += xv * xv;
                tt += tv * tv;
            }
        return (xx == 0.0 || tt == 0.0) ? 0.0 : dot / std::sqrt(xx * tt);
    };

    auto best_short = [&](const Tensor& pattern) {
        double best = -1.0;
        for (std::size_t o = 0; o + kShortMotifFrames <= steps; ++o)
            best = std::max(best, cosine([&](std::size_t f) { return o + f; }, kShortMotifFrames,
                                         [&](std::size_t f, std::size_t c) { return pattern[f * channels + c]; }, 0,
                                         half));
        return best;
    };
    auto best_long = [&](std::size_t spacing) {
        double best = -1.0;
        for (std::size_t o = 0; o + (kLongMotifPulses - 1) * spacing < steps; ++o)
            best = std::max(best, cosine([&](std::size_t f) { return o + f * spacing; }, kLongMotifPulses,
                                         [&](std::size_t, std::size_t c) { return motifs.long_pulse[c]; }, half,
                                         channels));
        return best;
    };

    std::size_t arg = 0;
    double top = -INFINITY;
    for (std::size_t c = 0; c < motifs.short_index.size(); ++c) {
        const double score = best_short(motifs.short_patterns[motifs.short_index[c]]) + best_long(motifs.long_spacing[c]);
        if (score > top) {
            top = score;
            arg = c;
        }
    }
    return arg;
}

} // namespace dctcn
