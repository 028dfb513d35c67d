#include <benchmark/benchmark.h>

#include "bellpulse/rng.hpp"
#include "bellpulse/simulator.hpp"
#include "bellpulse/sync.hpp"

using namespace bellpulse;

namespace {

void bm_recover_pulse_numbering(benchmark::State& state) {
    simulator::ExperimentConfig cfg;
    cfg.clock_b.rate_offset_ppm = 10.0;
    cfg.clock_b.offset_ns = 1000.0;
    Rng rng(13);
    const auto train =
        simulator::generate_pulse_train(cfg, static_cast<std::uint64_t>(state.range(0)), rng);
    std::vector<std::uint64_t> ta, tb;
    for (const auto& r : train.alice_triggers) ta.push_back(r.time_ps);
    for (const auto& r : train.bob_triggers) tb.push_back(r.time_ps);

    for (auto _ : state) {
        auto map = sync::recover_pulse_numbering(ta, tb, cfg.modulation);
        benchmark::DoNotOptimize(map);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_recover_pulse_numbering)->Arg(100000)->Arg(1000000);

void bm_generate_pulse_train(benchmark::State& state) {
    simulator::ExperimentConfig cfg;
    for (auto _ : state) {
        Rng rng(14);
        auto train = simulator::generate_pulse_train(
            cfg, static_cast<std::uint64_t>(state.range(0)), rng);
        benchmark::DoNotOptimize(train);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_generate_pulse_train)->Arg(1000000);

} // namespace
