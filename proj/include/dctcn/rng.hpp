#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>

namespace dctcn {

/// SplitMix64 generator.
///
/// The state is a 64-bit counter advanced by the golden-ratio increment
/// 0x9E3779B97F4A7C15 and passed through the SplitMix64 finalizer. The
/// stream depends only on the seed, so results are identical on every
/// platform. Doubles use the top 53 bits; normals use Box-Muller without
/// caching the second variate.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64();

    /// Uniform on [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    /// Uniform integer on [0, n). n must be positive.
    std::size_t below(std::size_t n);
    bool bernoulli(double p) { return uniform() < p; }

    std::uint64_t state() const { return state_; }

    /// Hash a seed and a list of tags into an independent stream seed.
    static std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

private:
    std::uint64_t state_;
};

} // namespace dctcn
