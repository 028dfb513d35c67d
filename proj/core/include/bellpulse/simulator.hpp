#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bellpulse/bell.hpp"
#include "bellpulse/rng.hpp"
#include "bellpulse/sync.hpp"
#include "bellpulse/types.hpp"

namespace bellpulse::simulator {

struct DetectorConfig {
    double efficiency = 0.6;
    double jitter_sigma_ns = 0.35;
    /// Dark counts per second on each outcome channel.
    double dark_rate_hz = 200.0;
    /// Detection-efficiency asymmetry between the outcome channels, in
    /// [-1, 1]: outcome 1 is detected with efficiency*(1+bias), outcome 0 with
    /// efficiency*(1-bias). Biases the detected series toward one bit the way
    /// mismatched detectors would. Default off.
    double outcome_bias = 0.0;
};

struct ClockConfig {
    double rate_offset_ppm = 0.0;
    double offset_ns = 0.0;
};

enum class SourceModel { qm, local_deterministic, non_ergodic };

/// CHSH analyzer angles in degrees.
struct ChshAngles {
    double a = 0.0;
    double a_prime = 45.0;
    double b = 22.5;
    double b_prime = 67.5;

    bell::ChshSchedule schedule() const;
};

struct ExperimentConfig {
    double pulse_duration_ns = 500.0;
    double repetition_rate_hz = 5e5;
    /// Empty pattern = constant rate (not synchronizable).
    sync::ModulationPattern modulation{{{5e5, 1000}, {4.5e5, 1000}}};
    /// Pulses per run; 0 derives the count from duration_s.
    std::uint64_t n_pulses_per_run = 0;
    double duration_s = 30.0;
    /// Pair-emission probability per pulse. The default together with the
    /// detector efficiency puts ~2% of pulses in the "produced a detection"
    /// regime.
    double pair_yield_per_pulse = 0.033;
    double visibility = 0.966;
    DetectorConfig detector_a;
    DetectorConfig detector_b;
    ClockConfig clock_b;
    double trigger_jitter_ns = 0.15;
    double trigger_delay_ns = 57.0;
    ChshAngles angles;
    /// Setting pair of each run; empty = one run per canonical CHSH leg.
    std::vector<SettingPair> runs;
    SourceModel source_model = SourceModel::qm;
    std::vector<std::uint8_t> forbidden_string; // non_ergodic only, length <= 12
    std::uint64_t seed = 1;
    std::string condition = "sim";
    bool write_ground_truth = true;

    void validate() const;
    std::uint64_t pulses_per_run() const;
    double mean_period_ns() const;
    std::vector<SettingPair> run_settings() const; // runs or the 4 legs
};

/// Trigger streams of both stations for one run, ground truth retained.
/// Alice records ideal time; Bob records through his distorted clock.
struct PulseTrain {
    std::vector<double> start_true_ns; // pulse starts, ideal clock
    TimeTagStream alice_triggers;
    TimeTagStream bob_triggers;
};

PulseTrain generate_pulse_train(const ExperimentConfig& cfg, std::uint64_t n_pulses, Rng& rng);

/// One sample of the joint outcome law at the given settings.
///   qm:    P(s,t) = 1/4 [1 + s t V cos 2(alpha-beta)], uniform marginals.
///   local_deterministic: lambda ~ U[0,pi), s = sign cos 2(alpha-lambda),
///                        t = sign cos 2(beta-lambda).
/// The non_ergodic model is stateful and handled by NonErgodicSampler.
std::pair<std::uint8_t, std::uint8_t> sample_joint_outcome(const SettingPair& settings,
                                                           SourceModel model,
                                                           double visibility, Rng& rng);

/// Uniform bit proposals filtered so that no forbidden string ever completes
/// (the proposal is flipped whenever it would); guarantees zero occurrences.
/// Throws DataError when the forbidden set blocks every continuation.
class NonErgodicSampler {
public:
    explicit NonErgodicSampler(std::vector<std::vector<std::uint8_t>> forbidden);
    explicit NonErgodicSampler(std::span<const std::uint8_t> forbidden);

    std::uint8_t next(Rng& rng);

private:
    // small DFA over bit strings; state = longest suffix that prefixes a
    // forbidden string
    std::vector<std::array<int, 2>> next_state_;
    std::vector<bool> dead_;
    int state_ = 0;
};

/// Series of `length` filtered bits; an empty forbidden string passes coin
/// flips through unchanged.
std::vector<std::uint8_t> sample_nonergodic_series(std::size_t length,
                                                   std::span<const std::uint8_t> forbidden,
                                                   Rng& rng);

/// Station-A detected outcome series at the configured bias: joint outcomes
/// are sampled and thinned by the outcome-dependent efficiency, the way the
/// detectors would. Uniform marginals turn into P(1) = (1+bias)/2.
std::vector<std::uint8_t> simulate_detected_series(std::size_t n_bits, SourceModel model,
                                                   double visibility,
                                                   const SettingPair& settings,
                                                   double outcome_bias, Rng& rng);

struct TruePair {
    std::int64_t pulse_index = 0;
    std::uint8_t outcome_a = 0;
    std::uint8_t outcome_b = 0;
    // Recorded offsets exactly as the analysis will observe them: timestamp
    // minus (trigger - delay), in each station's own clock, ps-rounded.
    double offset_a_ns = 0.0;
    double offset_b_ns = 0.0;
    // Both recorded offsets inside [0, pulse_duration): the pair is present
    // in the data and can be matched. Edge-jittered detections are not.
    bool matchable = false;
};

struct RunTruth {
    std::string run_id;
    SettingPair settings;
    std::uint64_t n_pulses = 0;
    std::uint64_t emitted_pairs = 0;
    std::vector<TruePair> detected_pairs; // both arms detected
};

struct ExperimentTruth {
    std::vector<RunTruth> runs;
};

struct SimulationOutput {
    std::filesystem::path manifest_path;
    std::filesystem::path ground_truth_path; // empty when disabled
    ExperimentTruth truth;
};

/// Generates the whole experiment: per run a frequency-modulated pulse train,
/// pair emissions, jointly sampled outcomes, efficiency thinning, jitter,
/// dark counts on both outcome channels, everything timestamped per station
/// clock and written as .btt files plus a manifest (and a ground-truth
/// sidecar unless disabled). Identical seed and config give byte-identical
/// files.
SimulationOutput run_experiment(const ExperimentConfig& cfg,
                                const std::filesystem::path& out_dir);

} // namespace bellpulse::simulator
