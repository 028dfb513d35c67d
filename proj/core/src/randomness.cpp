#include "bellpulse/randomness.hpp"

#include <cmath>

#include "bellpulse/errors.hpp"

namespace bellpulse::randomness {

double min_entropy(std::span<const std::uint8_t> bits) {
    if (bits.empty())
        throw DataError("min_entropy: empty series");
    std::size_t ones = 0;
    for (std::uint8_t b : bits) ones += (b != 0);
    const double n = static_cast<double>(bits.size());
    const double p1 = static_cast<double>(ones) / n;
    const double pmax = p1 > 0.5 ? p1 : 1.0 - p1;
    return -std::log2(pmax);
}

std::size_t lz76_phrase_count(std::span<const std::uint8_t> bits) {
    const std::size_t n = bits.size();
    if (n == 0)
        throw DataError("lz76_phrase_count: empty series");
    if (n == 1)
        return 1;

    // Kaspar-Schuster scan. The phrase under construction starts at position
    // l (0-based: bits[l]); i < l enumerates candidate copy origins and k is
    // the current match length, so bits[i + k - 1] is compared against
    // bits[l + k - 1]. kmax tracks the longest copyable prefix seen plus one,
    // i.e. the length of the finished phrase.
    std::size_t c = 1;
    std::size_t l = 1, i = 0, k = 1, kmax = 1;
    for (;;) {
        if (bits[i + k - 1] != bits[l + k - 1]) {
            if (k > kmax) kmax = k;
            ++i;
            if (i == l) {
                ++c;
                l += kmax;
                if (l + 1 > n) break;
                i = 0;
                k = 1;
                kmax = 1;
            } else {
                k = 1;
            }
        } else {
            ++k;
            if (l + k > n) {
                ++c; // final phrase reaches the end while still copyable
                break;
            }
        }
    }
    return c;
}

double kc_normalized(std::span<const std::uint8_t> bits) {
    const std::size_t n = bits.size();
    if (n < 2)
        throw DataError("kc_normalized: series must have at least 2 bits");
    const double c = static_cast<double>(lz76_phrase_count(bits));
    return c * std::log2(static_cast<double>(n)) / static_cast<double>(n);
}

std::vector<std::uint64_t> string_census(std::span<const std::uint8_t> bits, int n) {
    if (n < 1 || n > 16)
        throw DataError("string_census: n must be in [1, 16]");
    if (bits.size() < static_cast<std::size_t>(n))
        throw DataError("string_census: series shorter than n");

    std::vector<std::uint64_t> counts(std::size_t{1} << n, 0);
    const std::uint32_t mask = (n == 32) ? ~0u : ((1u << n) - 1u);
    std::uint32_t window = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        window = ((window << 1) | (bits[i] ? 1u : 0u)) & mask;
        if (i + 1 >= static_cast<std::size_t>(n))
            ++counts[window];
    }
    return counts;
}

std::uint64_t missing_string_count(std::span<const std::uint8_t> bits, int n) {
    const auto counts = string_census(bits, n);
    std::uint64_t missing = 0;
    for (std::uint64_t c : counts) missing += (c == 0);
    return missing;
}

RandomnessReport analyze(std::span<const std::uint8_t> bits, std::span<const int> census_lengths) {
    RandomnessReport r;
    r.n_bits = bits.size();
    r.hm = min_entropy(bits);
    r.phrase_count = lz76_phrase_count(bits);
    r.kc = bits.size() >= 2 ? kc_normalized(bits) : 0.0;
    for (int n : census_lengths)
        if (bits.size() >= static_cast<std::size_t>(n))
            r.missing_strings.emplace_back(n, missing_string_count(bits, n));
    return r;
}

} // namespace bellpulse::randomness
