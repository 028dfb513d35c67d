#include <doctest.h>

#include <cmath>

#include "bellpulse/ingest.hpp"
#include "bellpulse/rng.hpp"
#include "bellpulse/simulator.hpp"
#include "bellpulse/sync.hpp"

using namespace bellpulse;
using namespace bellpulse::sync;

namespace {

std::vector<std::uint64_t> trigger_times(const TimeTagStream& s) {
    std::vector<std::uint64_t> out;
    for (const auto& r : s)
        if (r.channel == Channel::Trigger) out.push_back(r.time_ps);
    return out;
}

simulator::ExperimentConfig clean_config() {
    simulator::ExperimentConfig cfg;
    cfg.trigger_jitter_ns = 0.0;
    cfg.detector_a.jitter_sigma_ns = 0.0;
    cfg.detector_b.jitter_sigma_ns = 0.0;
    cfg.detector_a.dark_rate_hz = 0.0;
    cfg.detector_b.dark_rate_hz = 0.0;
    return cfg;
}

} // namespace

TEST_CASE("identical trigger lists map to the identity") {
    auto cfg = clean_config();
    Rng rng(1);
    const auto train = simulator::generate_pulse_train(cfg, 5000, rng);
    const auto ta = trigger_times(train.alice_triggers);

    const auto map = recover_pulse_numbering(ta, ta, cfg.modulation);
    CHECK(map.clock.ratio == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::fabs(map.clock.offset_ps) < 1.0);
    CHECK(map.clock.residual_max_ns == doctest::Approx(0.0));
    REQUIRE(map.index_a.size() == ta.size());
    for (std::size_t i = 0; i < ta.size(); ++i) {
        CHECK(map.index_a[i] == static_cast<std::int64_t>(i));
        CHECK(map.index_b[i] == static_cast<std::int64_t>(i));
    }
}

TEST_CASE("drifted and shifted stream recovers ground-truth numbering") {
    auto cfg = clean_config();
    cfg.clock_b.rate_offset_ppm = 50.0;
    cfg.clock_b.offset_ns = 1000.0;
    cfg.trigger_jitter_ns = 0.5;
    Rng rng(2);
    const auto train = simulator::generate_pulse_train(cfg, 100000, rng);
    const auto ta = trigger_times(train.alice_triggers);
    const auto tb = trigger_times(train.bob_triggers);

    const auto map = recover_pulse_numbering(ta, tb, cfg.modulation);
    REQUIRE(map.index_b.size() == tb.size());
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < tb.size(); ++i)
        if (map.index_b[i] != static_cast<std::int64_t>(i)) ++mismatches;
    CHECK(mismatches == 0);
    CHECK(map.clock.ratio == doctest::Approx(1.0 + 50e-6).epsilon(1e-9));
    CHECK(map.clock.residual_max_ns < 5.0); // trigger jitter scale
}

TEST_CASE("constant-rate stream cannot be synchronized") {
    auto cfg = clean_config();
    cfg.modulation.blocks.clear(); // constant rate
    Rng rng(3);
    const auto train = simulator::generate_pulse_train(cfg, 5000, rng);
    const auto ta = trigger_times(train.alice_triggers);

    ModulationPattern pattern{{{5e5, 1000}, {4.5e5, 1000}}};
    CHECK_THROWS_AS(recover_pulse_numbering(ta, ta, pattern), SyncError);

    ModulationPattern degenerate{{{5e5, 1000}, {5e5, 1000}}};
    CHECK_THROWS_AS(recover_pulse_numbering(ta, ta, degenerate), ConfigError);

    CHECK_THROWS_AS(recover_pulse_numbering({}, ta, pattern), SyncError);
}

TEST_CASE("assign_detections positions offsets against the trigger") {
    // trigger at 10,000,000 ps, delay 57 ns, detection 123.456 ns into the pulse
    const std::vector<std::uint64_t> triggers{10000000};
    const std::vector<std::int64_t> indices{0};
    TimeTagStream stream{{10000000, Channel::Trigger},
                         {10000000 - 57000 + 123456, Channel::Out1}};
    auto events = assign_detections(stream, triggers, indices, Station::Alice, 57.0, 500.0);
    REQUIRE(events.size() == 1);
    CHECK(events[0].pulse_index == 0);
    CHECK(events[0].offset_ns == doctest::Approx(123.456));
    CHECK(events[0].outcome == 1);
    CHECK(events[0].in_pulse);
    CHECK(events[0].station == Station::Alice);

    // offset 600 ns with 500 ns pulses: out of pulse
    TimeTagStream late{{10000000 - 57000 + 600000, Channel::Out0}};
    events = assign_detections(late, triggers, indices, Station::Bob, 57.0, 500.0);
    REQUIRE(events.size() == 1);
    CHECK(!events[0].in_pulse);
    CHECK(events[0].offset_ns == doctest::Approx(600.0));
    CHECK(events[0].outcome == 0);

    // detection before the first pulse: out-of-pulse, never an error
    TimeTagStream early{{1000, Channel::Out1}};
    events = assign_detections(early, triggers, indices, Station::Alice, 57.0, 500.0);
    REQUIRE(events.size() == 1);
    CHECK(!events[0].in_pulse);
    CHECK(events[0].offset_ns < 0.0);
}

TEST_CASE("assign_detections preserves the event count") {
    auto cfg = clean_config();
    cfg.pair_yield_per_pulse = 0.2;
    cfg.detector_a.dark_rate_hz = 500.0;
    cfg.detector_b.dark_rate_hz = 500.0;
    cfg.n_pulses_per_run = 20000;
    cfg.runs = {{0.0, 22.5}};
    cfg.write_ground_truth = false;
    const auto dir = std::filesystem::temp_directory_path() / "bellpulse_tests" / "assign";
    std::filesystem::remove_all(dir);
    const auto sim = simulator::run_experiment(cfg, dir);
    const auto data = ingest::load_experiment(sim.manifest_path);

    const auto& run = data.runs.front();
    const auto ta = trigger_times(run.alice.records);
    std::size_t non_trigger = run.alice.records.size() - ta.size();
    std::vector<std::int64_t> idx(ta.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int64_t>(i);
    const auto events = assign_detections(run.alice.records, ta, idx, Station::Alice, 57.0, 500.0);
    CHECK(events.size() == non_trigger);
}

TEST_CASE("time histogram totals and placement") {
    const auto empty = build_time_histogram({}, 10.0, 0.0, 2000.0);
    CHECK(empty.total() == 0);

    std::vector<DetectionEvent> events;
    for (int i = 0; i < 42; ++i) events.push_back({0, 250.0, 1, Station::Alice, true});
    const auto h = build_time_histogram(events, 10.0, 0.0, 2000.0);
    CHECK(h.total() == 42);
    CHECK(h.counts[25] == 42);

    events.push_back({0, -5.0, 0, Station::Alice, false}); // outside the range
    CHECK(build_time_histogram(events, 10.0, 0.0, 2000.0).total() == 42);
    CHECK(build_time_histogram(events, 10.0, -10.0, 2000.0).total() == 43);

    CHECK_THROWS_AS(build_time_histogram(events, 0.0, 0.0, 100.0), ConfigError);
}

TEST_CASE("dark counts produce a flat out-of-pulse level") {
    auto cfg = clean_config();
    cfg.pair_yield_per_pulse = 0.0;
    cfg.detector_a.dark_rate_hz = 140.0;
    cfg.n_pulses_per_run = 0;
    cfg.duration_s = 4.0;
    cfg.modulation.blocks.clear(); // plain 2000 ns period for a clean window
    cfg.runs = {{0.0, 22.5}};
    cfg.write_ground_truth = false;
    const auto dir = std::filesystem::temp_directory_path() / "bellpulse_tests" / "darkhist";
    std::filesystem::remove_all(dir);
    const auto sim = simulator::run_experiment(cfg, dir);
    const auto data = ingest::load_experiment(sim.manifest_path);

    const auto& run = data.runs.front();
    const auto ta = trigger_times(run.alice.records);
    std::vector<std::int64_t> idx(ta.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int64_t>(i);
    const auto events = assign_detections(run.alice.records, ta, idx, Station::Alice, 57.0, 500.0);

    // out-of-pulse region [500, 2000): expect rate * 2 channels * live time there
    const auto h = build_time_histogram(events, 100.0, 500.0, 2000.0);
    const double duration = static_cast<double>(cfg.pulses_per_run()) * 2000e-9;
    const double expect = 2.0 * 140.0 * duration * (1500.0 / 2000.0);
    const double sigma = std::sqrt(expect);
    CHECK(std::fabs(static_cast<double>(h.total()) - expect) < 3.0 * sigma);

    // per-bin flatness: each 100 ns bin carries expect/15 on average
    const double per_bin = expect / 15.0;
    for (auto c : h.counts)
        CHECK(std::fabs(static_cast<double>(c) - per_bin) < 5.0 * std::sqrt(per_bin));
}

TEST_CASE("trigger delay estimator finds the configured constant") {
    auto cfg = clean_config();
    cfg.pair_yield_per_pulse = 0.2;
    cfg.n_pulses_per_run = 30000;
    cfg.modulation.blocks.clear();
    cfg.runs = {{0.0, 22.5}};
    cfg.write_ground_truth = false;
    const auto dir = std::filesystem::temp_directory_path() / "bellpulse_tests" / "delay";
    std::filesystem::remove_all(dir);
    const auto sim = simulator::run_experiment(cfg, dir);
    const auto data = ingest::load_experiment(sim.manifest_path);
    const auto& run = data.runs.front();
    const auto ta = trigger_times(run.alice.records);

    const double est = estimate_trigger_delay(run.alice.records, ta, 2000.0, 1.0);
    CHECK(std::fabs(est - 57.0) <= 1.5);
}
