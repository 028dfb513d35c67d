#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace bellpulse::randomness {

/// Minimum Entropy of a binary series: -log2 of the larger empirical bit
/// frequency. 1 for a balanced series, 0 for a constant one.
/// Throws DataError on an empty series.
double min_entropy(std::span<const std::uint8_t> bits);

/// Number of phrases c(N) in the Lempel-Ziv 1976 production parsing of the
/// series: each phrase is the shortest prefix of the remainder that cannot be
/// reproduced by copying (self-overlap allowed) from the prior history; the
/// final partial phrase counts. Kaspar-Schuster exhaustive-history variant.
/// Throws DataError on an empty series.
std::size_t lz76_phrase_count(std::span<const std::uint8_t> bits);

/// Normalized complexity estimate Kc = c(N) * log2(N) / N.
/// Near 0 for periodic series, near 1 for coin flips. Requires N >= 2.
double kc_normalized(std::span<const std::uint8_t> bits);

/// Occurrence counts of all 2^n length-n strings over overlapping windows.
/// Result is indexed by the string read as a big-endian integer (bits[i] is
/// the most significant bit of the window starting at i). Sum of counts is
/// N - n + 1. Requires 1 <= n <= 16 and N >= n.
std::vector<std::uint64_t> string_census(std::span<const std::uint8_t> bits, int n);

/// Number of length-n strings that never occur in the series.
std::uint64_t missing_string_count(std::span<const std::uint8_t> bits, int n);

struct RandomnessReport {
    double hm = 0.0;
    double kc = 0.0;
    std::size_t n_bits = 0;
    std::size_t phrase_count = 0;
    /// (n, count of absent length-n strings) for each requested census length.
    std::vector<std::pair<int, std::uint64_t>> missing_strings;
};

RandomnessReport analyze(std::span<const std::uint8_t> bits,
                         std::span<const int> census_lengths = {});

} // namespace bellpulse::randomness
