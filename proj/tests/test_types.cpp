#include <doctest.h>

#include "bellpulse/rng.hpp"
#include "bellpulse/types.hpp"

using namespace bellpulse;

TEST_CASE("slot_of maps offsets to half-open slots") {
    const SlotConfig cfg{5, 100.0, 500.0};
    CHECK(slot_of(0.0, cfg) == 0);
    CHECK(slot_of(499.9, cfg) == 4);
    CHECK(slot_of(600.0, cfg) == kOutOfPulse);
    CHECK(slot_of(500.0, cfg) == kOutOfPulse); // half-open upper edge
    CHECK(slot_of(-0.001, cfg) == kOutOfPulse);
    CHECK(slot_of(100.0, cfg) == 1);
    CHECK(slot_of(99.9999, cfg) == 0);
}

TEST_CASE("slot_of rejects invalid configs") {
    CHECK_THROWS_AS(slot_of(10.0, SlotConfig{5, 0.0, 500.0}), ConfigError);
    CHECK_THROWS_AS(slot_of(10.0, SlotConfig{0, 100.0, 500.0}), ConfigError);
    CHECK_THROWS_AS(slot_of(10.0, SlotConfig{5, 90.0, 500.0}), ConfigError);
}

TEST_CASE("slots cover the pulse exactly") {
    const SlotConfig cfg{10, 50.0, 500.0};
    Rng rng(7);
    for (int i = 0; i < 5000; ++i) {
        const double off = rng.uniform(0.0, cfg.pulse_duration_ns);
        const int slot = slot_of(off, cfg);
        REQUIRE(slot != kOutOfPulse);
        REQUIRE(slot >= 0);
        REQUIRE(slot < cfg.n_slots);
        CHECK(off >= slot * cfg.slot_width_ns);
        CHECK(off < (slot + 1) * cfg.slot_width_ns);
    }
    // boundaries are half-open
    for (int k = 0; k < cfg.n_slots; ++k)
        CHECK(slot_of(k * cfg.slot_width_ns, cfg) == k);
}

TEST_CASE("slot config label") {
    CHECK(SlotConfig{5, 100.0, 500.0}.label() == "5x100");
    CHECK(SlotConfig{10, 50.0, 500.0}.label() == "10x50");
}

TEST_CASE("angles compare modulo 180") {
    CHECK(normalize_angle_deg(202.5) == doctest::Approx(22.5));
    CHECK(normalize_angle_deg(-22.5) == doctest::Approx(157.5));
    CHECK(same_setting({0.0, 22.5}, {180.0, 202.5}));
    CHECK(same_setting({179.9999999, 0.0}, {0.0, 0.0})); // wrap-around closeness
    CHECK(!same_setting({0.0, 22.5}, {0.0, 67.5}));
}
