#include <benchmark/benchmark.h>

#include <vector>

#include "bellpulse/coincidence.hpp"
#include "bellpulse/rng.hpp"

using namespace bellpulse;

namespace {

// ~2% occupied pulses, the experiment's operating regime
std::pair<std::vector<DetectionEvent>, std::vector<DetectionEvent>> make_events(
    std::int64_t n_pulses, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<DetectionEvent> a, b;
    for (std::int64_t pulse = 0; pulse < n_pulses; ++pulse) {
        if (!rng.bernoulli(0.02)) continue;
        const double u = rng.uniform(0.0, 500.0);
        const auto bit = static_cast<std::uint8_t>(rng.bernoulli(0.5));
        if (rng.bernoulli(0.8))
            a.push_back({pulse, u + rng.gaussian(0.0, 0.4), bit, Station::Alice, true});
        if (rng.bernoulli(0.8))
            b.push_back({pulse, u + rng.gaussian(0.0, 0.4), bit, Station::Bob, true});
    }
    return {std::move(a), std::move(b)};
}

void bm_find_coincidences(benchmark::State& state) {
    const auto [a, b] = make_events(state.range(0), 11);
    const SettingPair set{0.0, 22.5};
    for (auto _ : state) {
        auto recs = coincidence::find_coincidences(a, b, 2.0, set);
        benchmark::DoNotOptimize(recs);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(a.size() + b.size()));
}
BENCHMARK(bm_find_coincidences)->Arg(100000)->Arg(1000000);

void bm_classify_counts(benchmark::State& state) {
    Rng rng(12);
    std::vector<CoincidenceRecord> recs;
    const SettingPair set{0.0, 22.5};
    for (int i = 0; i < 100000; ++i)
        recs.push_back({i, rng.uniform(0.0, 500.0), static_cast<std::uint8_t>(rng.bernoulli(0.5)),
                        static_cast<std::uint8_t>(rng.bernoulli(0.5)), set});
    const SlotConfig slots{5, 100.0, 500.0};
    for (auto _ : state) {
        auto counts = coincidence::classify_counts(recs, slots);
        benchmark::DoNotOptimize(counts);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(recs.size()));
}
BENCHMARK(bm_classify_counts);

} // namespace
