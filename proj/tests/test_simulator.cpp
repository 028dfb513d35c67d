#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "bellpulse/coincidence.hpp"
#include "bellpulse/pipeline.hpp"
#include "bellpulse/randomness.hpp"
#include "bellpulse/rng.hpp"
#include "bellpulse/simulator.hpp"

using namespace bellpulse;
using namespace bellpulse::simulator;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
    const auto dir = fs::temp_directory_path() / "bellpulse_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ExperimentConfig clean_config() {
    ExperimentConfig cfg;
    cfg.trigger_jitter_ns = 0.0;
    cfg.detector_a.jitter_sigma_ns = 0.0;
    cfg.detector_b.jitter_sigma_ns = 0.0;
    cfg.detector_a.dark_rate_hz = 0.0;
    cfg.detector_b.dark_rate_hz = 0.0;
    return cfg;
}

std::vector<std::byte> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::vector<std::byte> bytes;
    char c;
    while (in.get(c)) bytes.push_back(static_cast<std::byte>(c));
    return bytes;
}

} // namespace

TEST_CASE("rng sampling sanity") {
    Rng rng(123);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double g = rng.gaussian();
        sum += g;
        sq += g * g;
    }
    CHECK(std::fabs(sum / n) < 0.01);
    CHECK(std::fabs(sq / n - 1.0) < 0.02);

    for (double mean : {3.0, 120.0}) {
        double ps = 0.0, ps2 = 0.0;
        const int m = 50000;
        for (int i = 0; i < m; ++i) {
            const auto k = static_cast<double>(rng.poisson(mean));
            ps += k;
            ps2 += k * k;
        }
        const double mhat = ps / m;
        const double vhat = ps2 / m - mhat * mhat;
        CHECK(std::fabs(mhat - mean) < 0.05 * mean);
        CHECK(std::fabs(vhat - mean) < 0.10 * mean);
    }
}

TEST_CASE("unmodulated pulse train is exactly periodic") {
    auto cfg = clean_config();
    cfg.modulation.blocks.clear();
    Rng rng(1);
    const auto train = generate_pulse_train(cfg, 10, rng);
    REQUIRE(train.alice_triggers.size() == 10);
    for (std::size_t i = 1; i < 10; ++i) {
        CHECK(train.alice_triggers[i].time_ps - train.alice_triggers[i - 1].time_ps == 2000000);
        CHECK(train.bob_triggers[i].time_ps == train.alice_triggers[i].time_ps);
    }
}

TEST_CASE("clock rate offset accumulates over the train") {
    auto cfg = clean_config();
    cfg.modulation.blocks.clear();
    cfg.clock_b.rate_offset_ppm = 10.0;
    Rng rng(2);
    const std::uint64_t n = 1000000;
    const auto train = generate_pulse_train(cfg, n, rng);
    const double trig_true_ns = train.start_true_ns.back() + cfg.trigger_delay_ns;
    const double expected_shift_ps = trig_true_ns * 10e-6 * 1e3;
    const double shift_ps = static_cast<double>(train.bob_triggers.back().time_ps) -
                            static_cast<double>(train.alice_triggers.back().time_ps);
    CHECK(std::fabs(shift_ps - expected_shift_ps) <= 1.0);
    // ~2 s of pulses drift 20 us
    CHECK(shift_ps == doctest::Approx(20000080.57).epsilon(1e-6));
}

TEST_CASE("modulated pattern blocks are realized exactly") {
    auto cfg = clean_config();
    cfg.modulation.blocks = {{5e5, 10}, {4e5, 5}}; // 2000 ns and 2500 ns, integral ps
    Rng rng(3);
    const auto train = generate_pulse_train(cfg, 40, rng);
    std::vector<std::uint64_t> intervals;
    for (std::size_t i = 1; i < 40; ++i)
        intervals.push_back(train.alice_triggers[i].time_ps -
                            train.alice_triggers[i - 1].time_ps);
    // pulse i keeps its block's period; blocks cycle 10 + 5
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        const std::size_t phase = i % 15;
        CHECK(intervals[i] == (phase < 10 ? 2000000u : 2500000u));
    }
}

TEST_CASE("qm joint law: perfect correlation at zero angle difference") {
    Rng rng(4);
    for (int i = 0; i < 2000; ++i) {
        const auto [a, b] = sample_joint_outcome({30.0, 30.0}, SourceModel::qm, 1.0, rng);
        CHECK(a == b);
    }
    // at 45 deg difference every joint outcome is equally likely
    int same = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const auto [a, b] = sample_joint_outcome({0.0, 45.0}, SourceModel::qm, 1.0, rng);
        same += (a == b);
    }
    const double e = 2.0 * same / n - 1.0;
    CHECK(std::fabs(e) < 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("qm correlation follows V cos 2 delta") {
    Rng rng(5);
    const double v = 0.7;
    for (double delta : {0.0, 30.0, 60.0, 90.0}) {
        int same = 0, ones_a = 0;
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            const auto [a, b] =
                sample_joint_outcome({delta, 0.0}, SourceModel::qm, v, rng);
            same += (a == b);
            ones_a += a;
        }
        const double e = 2.0 * same / n - 1.0;
        const double expect = v * std::cos(2.0 * delta * M_PI / 180.0);
        const double sigma = std::sqrt((1.0 - expect * expect) / n);
        CHECK(std::fabs(e - expect) < 3.0 * sigma);
        // uniform marginals
        CHECK(std::fabs(ones_a / static_cast<double>(n) - 0.5) <
              3.0 * 0.5 / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("local deterministic model yields the sawtooth correlation") {
    Rng rng(6);
    const int n = 100000;
    double ones_a = 0.0;
    auto e_at = [&](double alpha, double beta) {
        int same = 0;
        for (int i = 0; i < n; ++i) {
            const auto [a, b] = sample_joint_outcome({alpha, beta},
                                                     SourceModel::local_deterministic, 1.0, rng);
            same += (a == b);
            ones_a += a;
        }
        return 2.0 * same / n - 1.0;
    };
    // E = 1 - 4|delta|/pi for the sign model: 0.5 at 22.5 deg, -0.5 at 67.5 deg
    CHECK(std::fabs(e_at(0.0, 22.5) - 0.5) < 0.02);
    CHECK(std::fabs(e_at(0.0, 67.5) + 0.5) < 0.02);
    CHECK(std::fabs(e_at(0.0, 0.0) - 1.0) < 0.01);
    // marginals stay 50/50
    CHECK(std::fabs(ones_a / (3.0 * n) - 0.5) < 3.0 * 0.5 / std::sqrt(3.0 * n));
}

TEST_CASE("non-ergodic joint sampling is rejected") {
    Rng rng(7);
    CHECK_THROWS_AS(sample_joint_outcome({0.0, 0.0}, SourceModel::non_ergodic, 1.0, rng),
                    ConfigError);
}

TEST_CASE("forbidden string never occurs") {
    Rng rng(8);
    const std::vector<std::uint8_t> f11{1, 1};
    const auto s = sample_nonergodic_series(10000, f11, rng);
    CHECK(randomness::string_census(s, 2)[0b11] == 0);

    const std::vector<std::uint8_t> f1010{1, 0, 1, 0};
    const auto s2 = sample_nonergodic_series(3000, f1010, rng);
    CHECK(randomness::string_census(s2, 4)[0b1010] == 0);
    CHECK(randomness::kc_normalized(s2) < 1.0);
}

TEST_CASE("forbidding every single-bit string is impossible") {
    CHECK_THROWS_AS(NonErgodicSampler({{0}, {1}}), DataError);
    CHECK_THROWS_AS(NonErgodicSampler(std::vector<std::vector<std::uint8_t>>{{}}), ConfigError);
}

TEST_CASE("pass-through sampling is coin-flip uniform under a census chi-square") {
    Rng rng(9);
    const auto s = sample_nonergodic_series(8192, {}, rng);
    // non-overlapping windows give a clean multinomial chi-square
    for (int n = 1; n <= 4; ++n) {
        std::vector<std::uint64_t> counts(std::size_t{1} << n, 0);
        std::size_t windows = 0;
        for (std::size_t i = 0; i + n <= s.size(); i += n) {
            std::uint32_t w = 0;
            for (int k = 0; k < n; ++k) w = (w << 1) | s[i + static_cast<std::size_t>(k)];
            ++counts[w];
            ++windows;
        }
        const double expect = static_cast<double>(windows) / static_cast<double>(counts.size());
        double chi2 = 0.0;
        for (auto c : counts) {
            const double d = static_cast<double>(c) - expect;
            chi2 += d * d / expect;
        }
        const double df = static_cast<double>(counts.size() - 1);
        CHECK(chi2 < df + 3.0 * std::sqrt(2.0 * df));
    }
}

TEST_CASE("outcome bias shifts the detected series frequency") {
    Rng rng(10);
    const auto s = simulate_detected_series(100000, SourceModel::qm, 0.966, {0.0, 22.5},
                                            0.43, rng);
    double ones = 0;
    for (auto b : s) ones += b;
    const double p = ones / static_cast<double>(s.size());
    CHECK(std::fabs(p - 0.715) < 3.0 * std::sqrt(0.715 * 0.285 / 100000.0));
}

TEST_CASE("biased 6-kbit series reproduce the reference slot-1 complexity") {
    // 136 series of ~6 kbit at the bias that matches the reported Hm levels;
    // the mean normalized complexity lands at 0.881 +- 0.05
    Rng rng(11);
    double sum = 0.0;
    const int n_series = 136;
    for (int i = 0; i < n_series; ++i) {
        Rng sub = rng.split(static_cast<std::uint64_t>(i));
        const auto s = simulate_detected_series(6000, SourceModel::qm, 0.966, {0.0, 22.5},
                                                0.43, sub);
        sum += randomness::kc_normalized(s);
    }
    const double mean = sum / n_series;
    CHECK(mean > 0.881 - 0.05);
    CHECK(mean < 0.881 + 0.05);
}

TEST_CASE("noise-free run: every emitted pair is a perfect equal-outcome coincidence") {
    auto cfg = clean_config();
    cfg.detector_a.efficiency = 1.0;
    cfg.detector_b.efficiency = 1.0;
    cfg.visibility = 1.0;
    cfg.pair_yield_per_pulse = 0.1;
    cfg.n_pulses_per_run = 20000;
    cfg.runs = {{0.0, 0.0}};
    cfg.seed = 77;
    const auto dir = temp_dir("noise_free");
    const auto sim = run_experiment(cfg, dir);
    REQUIRE(sim.truth.runs.size() == 1);
    const auto& truth = sim.truth.runs.front();
    CHECK(truth.emitted_pairs == truth.detected_pairs.size());
    CHECK(truth.emitted_pairs > 1500);

    const auto data = ingest::load_experiment(sim.manifest_path);
    pipeline::AnalysisOptions opt;
    opt.slot_configs = {SlotConfig{5, 100.0, 500.0}};
    const auto analysis = pipeline::analyze_experiment(data, opt);
    REQUIRE(analysis.runs.size() == 1);
    CHECK(analysis.runs[0].n_coincidences == truth.detected_pairs.size());
    for (const auto& [run_id, recs] : analysis.run_records)
        for (const auto& r : recs) CHECK(r.outcome_a == r.outcome_b);
}

TEST_CASE("identical seed and config produce byte-identical simulation output") {
    auto cfg = clean_config();
    cfg.trigger_jitter_ns = 0.15;
    cfg.detector_a.jitter_sigma_ns = 0.35;
    cfg.detector_b.jitter_sigma_ns = 0.35;
    cfg.detector_a.dark_rate_hz = 200.0;
    cfg.detector_b.dark_rate_hz = 200.0;
    cfg.n_pulses_per_run = 5000;
    cfg.seed = 31;
    const auto d1 = temp_dir("det1");
    const auto d2 = temp_dir("det2");
    run_experiment(cfg, d1);
    run_experiment(cfg, d2);
    for (const auto& entry : fs::directory_iterator(d1)) {
        const auto other = d2 / entry.path().filename();
        REQUIRE(fs::exists(other));
        CHECK(file_bytes(entry.path()) == file_bytes(other));
    }
}

TEST_CASE("config validation rejects bad physics") {
    auto cfg = clean_config();
    cfg.pair_yield_per_pulse = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = clean_config();
    cfg.pulse_duration_ns = 3000.0; // longer than the 2000 ns period
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = clean_config();
    cfg.detector_a.efficiency = 0.9;
    cfg.detector_a.outcome_bias = 0.5; // 0.9 * 1.5 > 1
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = clean_config();
    cfg.source_model = SourceModel::non_ergodic;
    CHECK_THROWS_AS(cfg.validate(), ConfigError); // missing forbidden string
}
