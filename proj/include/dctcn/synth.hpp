#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dctcn/rng.hpp"
#include "dctcn/tensor.hpp"

namespace dctcn {

enum class Split : std::uint64_t { Train = 1, Val = 2, Test = 3 };

const char* to_string(Split s);
Split parse_split(const std::string& s);

/// Multi-scale synthetic classification task.
///
/// Class c carries a short motif (3 frames on a channel subset in the
/// lower half of the channels) and a long motif (3 pulses spaced
/// long_spacings[c % |spacings|] frames apart on a fixed channel subset in
/// the upper half). Classes 2m and 2m+1 share their short motif, so
/// short-range evidence alone cannot separate them.
struct DatasetSpec {
    std::size_t num_classes = 4;
    std::size_t sequence_length = 29;
    std::size_t feature_channels = 32;
    std::size_t train_samples = 256;
    std::size_t val_samples = 64;
    std::size_t test_samples = 128;
    double noise_std = 0.0;
    std::vector<std::size_t> long_spacings{8, 10, 12, 14};
    std::uint64_t seed = 1234;

    void validate() const;
    std::size_t samples(Split s) const;
};

struct Sample {
    Tensor features;  // (T, C)
    std::size_t label = 0;
};

inline constexpr std::size_t kShortMotifFrames = 3;
inline constexpr std::size_t kLongMotifPulses = 3;

struct MotifBank {
    // short_patterns[m] is (3, C) with nonzeros only on motif m's channels.
    std::vector<Tensor> short_patterns;
    // Pulse amplitude per channel, shared by all classes.
    std::vector<double> long_pulse;
    std::vector<std::size_t> short_index;    // per class
    std::vector<std::size_t> long_spacing;   // per class
};

MotifBank make_motifs(const DatasetSpec& spec);

/// Sample index of a split; a pure function of (spec, split, index).
Sample generate_sample(const DatasetSpec& spec, const MotifBank& motifs, Split split, std::size_t index);

struct Dataset {
    DatasetSpec spec;
    MotifBank motifs;
    std::vector<Sample> train, val, test;

    const std::vector<Sample>& split(Split s) const;
};

Dataset generate(const DatasetSpec& spec);

/// Removes n distinct uniformly chosen time steps, keeping the order of
/// the rest. x: (T, C) -> (T - n, C).
Tensor drop_frames(const Tensor& x, std::size_t n, Rng& rng);

struct Batch {
    Tensor features;                   // (B, T, C), right-padded with zeros
    std::vector<std::size_t> lengths;  // valid prefix per sequence
    std::vector<std::size_t> labels;
};

/// Stacks (T_i, C) samples into a padded batch of width max_steps.
Batch make_batch(std::span<const Tensor> sequences, std::span<const std::size_t> labels, std::size_t max_steps);

/// Cross-correlates both motif families of every class against x and
/// returns the class with the highest normalized score.
std::size_t matched_filter_predict(const MotifBank& motifs, const Tensor& x);

} // namespace dctcn
