#include <benchmark/benchmark.h>

#include <vector>

#include "bellpulse/randomness.hpp"
#include "bellpulse/rng.hpp"

using namespace bellpulse;

namespace {

std::vector<std::uint8_t> coin_bits(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::uint8_t> v(n);
    for (auto& b : v) b = rng.bernoulli(0.5);
    return v;
}

void bm_lz76_random(benchmark::State& state) {
    const auto bits = coin_bits(static_cast<std::size_t>(state.range(0)), 7);
    for (auto _ : state)
        benchmark::DoNotOptimize(randomness::lz76_phrase_count(bits));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_lz76_random)->Arg(3000)->Arg(6000)->Arg(50000);

void bm_lz76_periodic(benchmark::State& state) {
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(state.range(0)));
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = i % 2;
    for (auto _ : state)
        benchmark::DoNotOptimize(randomness::lz76_phrase_count(bits));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_lz76_periodic)->Arg(3000)->Arg(50000);

void bm_min_entropy(benchmark::State& state) {
    const auto bits = coin_bits(static_cast<std::size_t>(state.range(0)), 8);
    for (auto _ : state)
        benchmark::DoNotOptimize(randomness::min_entropy(bits));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_min_entropy)->Arg(6000);

void bm_string_census(benchmark::State& state) {
    const auto bits = coin_bits(6000, 9);
    for (auto _ : state)
        benchmark::DoNotOptimize(randomness::string_census(bits, static_cast<int>(state.range(0))));
}
BENCHMARK(bm_string_census)->Arg(4)->Arg(8)->Arg(16);

} // namespace
