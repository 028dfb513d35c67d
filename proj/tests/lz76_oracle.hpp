#pragma once

#include <cstdint>
#include <span>
#include <vector>

// Test-only reference parser for the 1976 Lempel-Ziv production complexity.
// Direct transcription of the definition: the next phrase is the shortest
// prefix of the remaining symbols that cannot be reproduced by copying from
// an earlier start position (the copy may run into the phrase itself); the
// final phrase counts even if it is still reproducible when the series ends.
//
// Kept independent of the production implementation on purpose.
inline std::size_t lz76_naive_phrase_count(std::span<const std::uint8_t> bits) {
    const std::size_t n = bits.size();
    std::size_t phrases = 0;
    std::size_t p = 0; // start of the current phrase
    while (p < n) {
        // candidate copy origins j < p still matching bits[p..p+len-1]
        std::vector<std::size_t> alive;
        for (std::size_t j = 0; j < p; ++j)
            if (bits[j] == bits[p]) alive.push_back(j);

        std::size_t len = 1; // matched length so far (bits[p..p+len-1] reproducible)
        if (alive.empty()) {
            // bits[p] itself is not reproducible: phrase is that single symbol
            ++phrases;
            p += 1;
            continue;
        }
        while (p + len < n) {
            std::vector<std::size_t> still;
            for (std::size_t j : alive)
                if (bits[j + len] == bits[p + len]) still.push_back(j);
            if (still.empty()) break;
            alive.swap(still);
            ++len;
        }
        if (p + len >= n) {
            // reproducible all the way to the end: one final phrase
            ++phrases;
            break;
        }
        // bits[p..p+len-1] reproducible, bits[p..p+len] is not
        ++phrases;
        p += len + 1;
    }
    return phrases;
}
