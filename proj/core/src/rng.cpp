#include "bellpulse/rng.hpp"

#include <cmath>

namespace bellpulse {
namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

} // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::uniform_index(std::uint64_t n) {
    if (n == 0) return 0;
    // rejection to avoid modulo bias
    const std::uint64_t limit = n * (~0ull / n);
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % n;
}

bool Rng::bernoulli(double p) { return uniform() < p; }

double Rng::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1, u2;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

double Rng::gaussian(double mean, double sigma) { return mean + sigma * gaussian(); }

std::uint64_t Rng::poisson(double mean) {
    if (!(mean > 0.0)) return 0;
    // split large means so exp(-mean) stays representable and the Knuth loop short
    std::uint64_t total = 0;
    while (mean > 32.0) {
        const double half = mean / 2.0;
        total += poisson(half);
        mean -= half;
    }
    const double limit = std::exp(-mean);
    std::uint64_t k = 0;
    double prod = uniform();
    while (prod > limit) {
        ++k;
        prod *= uniform();
    }
    return total + k;
}

Rng Rng::split(std::uint64_t stream_id) const {
    std::uint64_t mix = state_[0] ^ rotl(state_[3], 13);
    mix ^= 0x6a09e667f3bcc909ull + stream_id * 0x9e3779b97f4a7c15ull;
    return Rng(mix);
}

} // namespace bellpulse
