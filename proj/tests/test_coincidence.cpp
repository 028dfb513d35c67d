#include <doctest.h>

#include <map>

#include "bellpulse/coincidence.hpp"
#include "bellpulse/rng.hpp"

using namespace bellpulse;
using namespace bellpulse::coincidence;

namespace {

DetectionEvent ev(std::int64_t pulse, double offset, std::uint8_t outcome, Station st,
                  bool in_pulse = true) {
    return DetectionEvent{pulse, offset, outcome, st, in_pulse};
}

const SettingPair kSet{0.0, 22.5};

} // namespace

TEST_CASE("a pair needs the same pulse and a close offset") {
    const std::vector<DetectionEvent> a{ev(7, 100.0, 1, Station::Alice)};
    const std::vector<DetectionEvent> b{ev(7, 101.0, 0, Station::Bob)};
    auto recs = find_coincidences(a, b, 2.0, kSet);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].pulse_index == 7);
    CHECK(recs[0].outcome_a == 1);
    CHECK(recs[0].outcome_b == 0);
    CHECK(recs[0].offset_ns == doctest::Approx(100.5));
    CHECK(recs[0].settings == kSet);

    // different pulse numbering: no match
    const std::vector<DetectionEvent> b2{ev(8, 100.0, 0, Station::Bob)};
    CHECK(find_coincidences(a, b2, 2.0, kSet).empty());

    // offsets too far apart: no match
    const std::vector<DetectionEvent> b3{ev(7, 103.5, 0, Station::Bob)};
    CHECK(find_coincidences(a, b3, 2.0, kSet).empty());

    CHECK_THROWS_AS(find_coincidences(a, b, 0.0, kSet), ConfigError);
}

TEST_CASE("out-of-pulse events never match") {
    const std::vector<DetectionEvent> a{ev(7, 600.0, 1, Station::Alice, false)};
    const std::vector<DetectionEvent> b{ev(7, 600.5, 0, Station::Bob, false)};
    CHECK(find_coincidences(a, b, 2.0, kSet).empty());
}

TEST_CASE("greedy matching pairs nearest offsets and reuses nothing") {
    // two Alice detections of the same outcome, one Bob detection
    const std::vector<DetectionEvent> a{ev(3, 100.0, 1, Station::Alice),
                                        ev(3, 101.5, 1, Station::Alice)};
    const std::vector<DetectionEvent> b{ev(3, 101.4, 1, Station::Bob)};
    MatchDiagnostics diag;
    const auto recs = find_coincidences(a, b, 2.0, kSet, &diag);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].offset_ns == doctest::Approx((101.5 + 101.4) / 2.0));
    CHECK(diag.unmatched_a == 1);
    CHECK(diag.unmatched_b == 0);
    CHECK(diag.ambiguous_pulses_a == 0);
}

TEST_CASE("a station pulse with both outcomes is discarded as ambiguous") {
    const std::vector<DetectionEvent> a{ev(3, 100.0, 1, Station::Alice),
                                        ev(3, 101.0, 0, Station::Alice)};
    const std::vector<DetectionEvent> b{ev(3, 100.2, 1, Station::Bob)};
    MatchDiagnostics diag;
    const auto recs = find_coincidences(a, b, 2.0, kSet, &diag);
    CHECK(recs.empty());
    CHECK(diag.ambiguous_pulses_a == 1);
    CHECK(diag.ambiguous_pulses_b == 0);
    CHECK(diag.unmatched_b == 1);
}

TEST_CASE("matching is symmetric under station exchange") {
    Rng rng(64);
    std::vector<DetectionEvent> a, b;
    for (std::int64_t pulse = 0; pulse < 300; ++pulse) {
        for (int k = 0; k < static_cast<int>(rng.uniform_index(3)); ++k)
            a.push_back(ev(pulse, rng.uniform(0.0, 500.0), 1, Station::Alice));
        for (int k = 0; k < static_cast<int>(rng.uniform_index(3)); ++k)
            b.push_back(ev(pulse, rng.uniform(0.0, 500.0), 0, Station::Bob));
    }
    const auto fwd = find_coincidences(a, b, 2.0, kSet);
    const auto rev = find_coincidences(b, a, 2.0, kSet);
    REQUIRE(fwd.size() == rev.size());
    for (std::size_t i = 0; i < fwd.size(); ++i) {
        CHECK(fwd[i].pulse_index == rev[i].pulse_index);
        CHECK(fwd[i].offset_ns == doctest::Approx(rev[i].offset_ns));
        CHECK(fwd[i].outcome_a == rev[i].outcome_b);
        CHECK(fwd[i].outcome_b == rev[i].outcome_a);
    }
}

TEST_CASE("no detection is matched twice") {
    Rng rng(65);
    std::vector<DetectionEvent> a, b;
    for (std::int64_t pulse = 0; pulse < 200; ++pulse) {
        const double base = rng.uniform(0.0, 490.0);
        for (int k = 0; k < 3; ++k) {
            a.push_back(ev(pulse, base + rng.uniform(0.0, 3.0), 1, Station::Alice));
            b.push_back(ev(pulse, base + rng.uniform(0.0, 3.0), 1, Station::Bob));
        }
    }
    MatchDiagnostics diag;
    const auto recs = find_coincidences(a, b, 2.0, kSet, &diag);
    CHECK(recs.size() <= 600);
    CHECK(recs.size() + diag.unmatched_a == a.size());
    CHECK(recs.size() + diag.unmatched_b == b.size());
}

TEST_CASE("classify_counts tallies joint outcomes per slot") {
    const SlotConfig cfg{5, 100.0, 500.0};
    std::vector<CoincidenceRecord> recs;
    for (int i = 0; i < 10; ++i) recs.push_back({i, 50.0, 1, 1, kSet});
    auto counts = classify_counts(recs, cfg);
    REQUIRE(counts.size() == 1);
    const auto& per_slot = counts.begin()->second;
    REQUIRE(per_slot.size() == 5);
    CHECK(per_slot[0].c_pp == 10);
    CHECK(per_slot[0].total() == 10);
    CHECK(per_slot[1].total() == 0);

    CHECK(classify_counts({}, cfg).empty());
}

TEST_CASE("classify_counts equals a brute-force tally") {
    const SlotConfig cfg{5, 100.0, 500.0};
    Rng rng(66);
    std::vector<CoincidenceRecord> recs;
    const SettingPair sets[2] = {{0.0, 22.5}, {45.0, 67.5}};
    for (int i = 0; i < 2000; ++i)
        recs.push_back({i, rng.uniform(0.0, 500.0), static_cast<std::uint8_t>(rng.bernoulli(0.5)),
                        static_cast<std::uint8_t>(rng.bernoulli(0.5)),
                        sets[rng.uniform_index(2)]});

    const auto counts = classify_counts(recs, cfg);

    // independent tally
    std::map<std::pair<SettingKey, int>, CoincidenceCounts> oracle;
    for (const auto& r : recs) {
        const int slot = static_cast<int>(r.offset_ns / 100.0);
        auto& c = oracle[{SettingKey::from(r.settings), slot}];
        if (r.outcome_a && r.outcome_b) ++c.c_pp;
        if (!r.outcome_a && !r.outcome_b) ++c.c_mm;
        if (r.outcome_a && !r.outcome_b) ++c.c_pm;
        if (!r.outcome_a && r.outcome_b) ++c.c_mp;
    }
    for (const auto& [key, per_slot] : counts)
        for (int slot = 0; slot < cfg.n_slots; ++slot)
            CHECK(per_slot[static_cast<std::size_t>(slot)] == oracle[{key, slot}]);
}

TEST_CASE("expected accidentals formula") {
    CHECK(expected_accidentals(200.0, 200.0, 2.0, 30.0) == doctest::Approx(2.4e-3));
    CHECK(expected_accidentals(0.0, 200.0, 2.0, 30.0) == 0.0);
    CHECK(expected_accidentals(1000.0, 1000.0, 1.0, 1.0) == doctest::Approx(1.0e-3));
    CHECK_THROWS_AS(expected_accidentals(-1.0, 1.0, 1.0, 1.0), ConfigError);
}

TEST_CASE("slot series keep pulse order and station separation") {
    const SlotConfig cfg{5, 100.0, 500.0};
    std::vector<CoincidenceRecord> recs{
        {1, 50.0, 1, 0, kSet}, {2, 150.0, 0, 1, kSet}, {3, 55.0, 0, 0, kSet},
        {4, 450.0, 1, 1, kSet},
    };
    const auto series = build_slot_series(recs, cfg, "runX");
    REQUIRE(series.size() == 10);
    // alice slot 0: pulses 1, 3 -> bits 1, 0
    CHECK(series[0].station == Station::Alice);
    CHECK(series[0].slot_index == 0);
    CHECK(series[0].bits == std::vector<std::uint8_t>{1, 0});
    // bob slot 0: bits 0, 0
    CHECK(series[5].station == Station::Bob);
    CHECK(series[5].bits == std::vector<std::uint8_t>{0, 0});
    // slot 4 holds the pulse-4 record
    CHECK(series[4].bits == std::vector<std::uint8_t>{1});
    CHECK(series[9].bits == std::vector<std::uint8_t>{1});
    CHECK(series[0].run_id == "runX");
}
