#pragma once

#include <cstdint>

namespace bellpulse {

/// Deterministic xoshiro256** generator with splitmix64 seeding.
///
/// Simulation output must be byte-identical for a given seed, so sampling is
/// done with fixed algorithms here instead of the (implementation-defined)
/// std::*_distribution classes.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform double in [0, 1).
    double uniform();

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi);

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n);

    bool bernoulli(double p);

    /// Standard normal via Box-Muller (a spare is cached).
    double gaussian();
    double gaussian(double mean, double sigma);

    /// Exact Poisson sample (Knuth multiplication; large means are split).
    std::uint64_t poisson(double mean);

    /// Independent generator for a labeled substream (one per run, station, ...).
    Rng split(std::uint64_t stream_id) const;

private:
    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace bellpulse
