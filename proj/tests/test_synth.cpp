#include "doctest.h"

#include <algorithm>
#include <set>

#include "dctcn/errors.hpp"
#include "dctcn/synth.hpp"
#include "test_support.hpp"

using namespace dctcn;

TEST_CASE("samples are pure functions of (seed, split, index)") {
    DatasetSpec spec;
    spec.noise_std = 0.3;
    const MotifBank motifs = make_motifs(spec);
    const Sample a = generate_sample(spec, motifs, Split::Val, 17);
    const Sample b = generate_sample(spec, motifs, Split::Val, 17);
    CHECK(a.features == b.features);
    CHECK(a.label == 17 % spec.num_classes);
    CHECK_FALSE(a.features == generate_sample(spec, motifs, Split::Test, 17).features);
    const Dataset ds = generate(spec);
    CHECK(ds.val[17].features == a.features);
    CHECK(ds.train.size() == spec.train_samples);
    CHECK(ds.test.size() == spec.test_samples);
}

TEST_CASE("classes are balanced and carry the right motifs") {
    DatasetSpec spec;
    const Dataset ds = generate(spec);
    std::vector<std::size_t> counts(spec.num_classes, 0);
    for (const Sample& s : ds.train) ++counts[s.label];
    for (std::size_t c : counts) CHECK(c == spec.train_samples / spec.num_classes);

    const std::size_t C = spec.feature_channels, half = C / 2;
    for (const Sample& s : ds.train) {
        // Upper half: exactly three active frames, spaced by the class spacing.
        std::vector<std::size_t> frames;
        for (std::size_t t = 0; t < spec.sequence_length; ++t) {
            bool any = false;
            for (std::size_t c = half; c < C; ++c) any |= s.features[t * C + c] != 0.0;
            if (any) frames.push_back(t);
        }
        REQUIRE(frames.size() == 3);
        const std::size_t spacing = spec.long_spacings[s.label % spec.long_spacings.size()];
        CHECK(frames[1] - frames[0] == spacing);
        CHECK(frames[2] - frames[1] == spacing);

        // Lower half: one contiguous run of three frames on four channels.
        std::vector<std::size_t> low_frames;
        std::set<std::size_t> low_channels;
        for (std::size_t t = 0; t < spec.sequence_length; ++t)
            for (std::size_t c = 0; c < half; ++c)
                if (s.features[t * C + c] != 0.0) {
                    if (low_frames.empty() || low_frames.back() != t) low_frames.push_back(t);
                    low_channels.insert(c);
                }
        REQUIRE(low_frames.size() == 3);
        CHECK(low_frames[2] - low_frames[0] == 2);
        CHECK(low_channels.size() == 4);
    }
}

TEST_CASE("paired classes share their short motif") {
    const MotifBank m = make_motifs(DatasetSpec{});
    CHECK(m.short_index == std::vector<std::size_t>{0, 0, 1, 1});
    CHECK(m.short_patterns.size() == 2);
    CHECK(m.long_spacing == std::vector<std::size_t>{8, 10, 12, 14});
}

TEST_CASE("dataset spec validation") {
    DatasetSpec spec;
    spec.long_spacings = {15};  // 2 * 15 + 1 = 31 > 29
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = {};
    spec.noise_std = -1.0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = {};
    spec.num_classes = 1;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    CHECK_THROWS_AS(parse_split("dev"), ConfigError);
}

TEST_CASE("zero-noise task is solved exactly by matched filtering") {
    DatasetSpec spec;
    spec.test_samples = 256;
    const Dataset ds = generate(spec);
    for (const Sample& s : ds.test) CHECK(matched_filter_predict(ds.motifs, s.features) == s.label);
}

TEST_CASE("drop_frames removes distinct frames and keeps order") {
    Tensor x({10, 2});
    for (std::size_t t = 0; t < 10; ++t) {
        x[t * 2] = static_cast<double>(t);
        x[t * 2 + 1] = -static_cast<double>(t);
    }
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        const std::size_t n = rng.below(10);
        const Tensor y = drop_frames(x, n, rng);
        REQUIRE(y.dim(0) == 10 - n);
        for (std::size_t t = 0; t < y.dim(0); ++t) {
            CHECK(y[t * 2 + 1] == -y[t * 2]);
            if (t > 0) CHECK(y[t * 2] > y[(t - 1) * 2]);
        }
    }
    Rng rng(0);
    CHECK(drop_frames(x, 0, rng) == x);
    CHECK_THROWS_AS(drop_frames(x, 10, rng), ShapeError);
}

TEST_CASE("drop_frames picks frames uniformly") {
    Tensor x({5, 1});
    for (std::size_t t = 0; t < 5; ++t) x[t] = static_cast<double>(t);
    std::vector<std::size_t> dropped(5, 0);
    Rng rng(123);
    const int trials = 20000;
    for (int i = 0; i < trials; ++i) {
        const Tensor y = drop_frames(x, 1, rng);
        std::size_t missing = 10;
        for (std::size_t t = 0; t < 4; ++t) missing -= static_cast<std::size_t>(y[t]);
        ++dropped[missing];
    }
    for (std::size_t c : dropped) CHECK(std::abs(static_cast<double>(c) / trials - 0.2) < 0.015);
}

TEST_CASE("make_batch pads on the right and records lengths") {
    const std::vector<Tensor> seqs{Tensor({2, 1}, {1, 2}), Tensor({3, 1}, {3, 4, 5})};
    const std::vector<std::size_t> labels{0, 1};
    const Batch b = make_batch(seqs, labels, 4);
    CHECK(b.features.shape() == Shape{2, 4, 1});
    CHECK(b.features.values() == std::vector<double>{1, 2, 0, 0, 3, 4, 5, 0});
    CHECK(b.lengths == std::vector<std::size_t>{2, 3});
    CHECK_THROWS_AS(make_batch(seqs, labels, 2), ShapeError);
}

TEST_CASE("drops from one stream are nested as N grows") {
    Tensor x({12, 1});
    for (std::size_t t = 0; t < 12; ++t) x[t] = static_cast<double>(t);
    auto kept = [&](std::size_t n) {
        Rng rng(99);
        const Tensor y = drop_frames(x, n, rng);
        return std::set<double>(y.data().begin(), y.data().end());
    };
    for (std::size_t n = 0; n + 1 < 12; ++n) {
        const auto a = kept(n), b = kept(n + 1);
        CHECK(b.size() + 1 == a.size());
        CHECK(std::includes(a.begin(), a.end(), b.begin(), b.end()));
    }
}
