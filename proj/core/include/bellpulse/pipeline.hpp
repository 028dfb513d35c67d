#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bellpulse/bell.hpp"
#include "bellpulse/coincidence.hpp"
#include "bellpulse/ingest.hpp"
#include "bellpulse/simulator.hpp"
#include "bellpulse/stats.hpp"
#include "bellpulse/sync.hpp"
#include "bellpulse/types.hpp"

namespace bellpulse::pipeline {

struct AnalysisOptions {
    std::vector<SlotConfig> slot_configs; // default: 5x100 and 10x50
    double window_ns = 2.0;
    double trigger_delay_ns = 57.0;
    double pulse_duration_ns = 500.0;
    bell::ChshSchedule schedule = bell::ChshSchedule::canonical();
    sync::ModulationPattern modulation{{{5e5, 1000}, {4.5e5, 1000}}};
    stats::TTestMode ttest_mode = stats::TTestMode::welch;
    stats::DfConvention df_convention = stats::DfConvention::sample;
    double alpha = 0.95;
    std::vector<int> census_lengths;
    ingest::ParseOptions parse;

    void validate() const;
};

struct PipelineConfig {
    simulator::ExperimentConfig experiment;
    AnalysisOptions analysis;

    void validate() const; // cross-checks slot configs against the pulse duration
};

/// "5x100" -> 5 slots of 100 ns. The product must equal pulse_duration_ns.
SlotConfig parse_slot_spec(const std::string& spec, double pulse_duration_ns);

PipelineConfig default_config();
PipelineConfig parse_config_json(const std::string& text);
PipelineConfig load_config_file(const std::filesystem::path& path);
std::string config_to_json(const PipelineConfig& cfg);

struct RunSummary {
    std::string run_id;
    SettingPair settings;
    sync::ClockModel clock;
    coincidence::MatchDiagnostics diag;
    std::uint64_t n_triggers_a = 0;
    std::uint64_t n_triggers_b = 0;
    std::uint64_t in_pulse_a = 0;
    std::uint64_t in_pulse_b = 0;
    std::uint64_t out_of_pulse_a = 0;
    std::uint64_t out_of_pulse_b = 0;
    std::uint64_t n_coincidences = 0;
};

struct SeriesValue {
    std::string run_id;
    Station station = Station::Alice;
    int slot = 0;
    std::size_t n_bits = 0;
    double hm = 0.0;
    double kc = 0.0;
};

struct SlotAggregate {
    Station station = Station::Alice;
    int slot = 0;
    std::uint64_t n_series = 0;
    double mean_hm = 0.0;
    double std_hm = 0.0;
    double mean_kc = 0.0;
    double std_kc = 0.0;
};

struct EstimatorBattery {
    Station station = Station::Alice;
    std::string estimator; // "hm" or "kc"
    stats::SlotBattery battery;
};

struct SlotConfigAnalysis {
    SlotConfig slots;
    std::optional<bell::SParameterSeries> chsh; // present when all four legs have data
    std::optional<stats::SlopeFit> chsh_slope;  // S against slot index
    std::vector<SlotSeries> series;             // every (run, station, slot) series
    std::vector<SeriesValue> values;            // estimator values per series (>= 2 bits)
    std::vector<SlotAggregate> aggregates;
    std::vector<EstimatorBattery> batteries;    // needs >= 2 runs
};

struct ExperimentAnalysis {
    std::string condition;
    std::vector<RunSummary> runs;
    std::vector<std::pair<std::string, std::vector<CoincidenceRecord>>> run_records;
    std::vector<SlotConfigAnalysis> per_slot_config;

    std::vector<CoincidenceRecord> all_records() const;
};

/// The full analysis chain on loaded streams: pulse-numbering recovery,
/// detection assignment, coincidence matching, slot series, randomness
/// estimators, statistical battery - for every configured slotting.
ExperimentAnalysis analyze_experiment(const ingest::ExperimentData& data,
                                      const AnalysisOptions& options);

/// Deterministic nested summary (the pipeline's machine-readable result).
std::string summary_json(const ExperimentAnalysis& analysis, const PipelineConfig& cfg);

struct PipelineResult {
    ExperimentAnalysis analysis;
    std::string summary;
    std::filesystem::path summary_path;
};

/// simulate -> ingest -> sync -> coincidences -> series -> estimators ->
/// stats; writes per-stage artifacts under out_dir and summary.json.
PipelineResult run_full_pipeline(const PipelineConfig& cfg,
                                 const std::filesystem::path& out_dir);

// ---- artifact formats (CSV columns fixed, numbers printed with 9
// ---- significant digits; JSON for nested structures)

std::string fmt_sig9(double v);

void write_chsh_csv(const std::filesystem::path& path, const bell::SParameterSeries& series);
void write_coincidences_csv(const std::filesystem::path& path,
                            std::span<const CoincidenceRecord> records, const SlotConfig& slots);

void write_series_json(const std::filesystem::path& path, const SlotConfigAnalysis& sca,
                       const std::string& condition);

struct SeriesFile {
    std::string condition;
    std::string slot_label;
    std::vector<SlotSeries> series;
};
SeriesFile read_series_json(const std::filesystem::path& path);

struct ValuesRow {
    std::string condition;
    std::string run_id;
    Station station = Station::Alice;
    int slot = 0;
    std::size_t n_bits = 0;
    double hm = 0.0;
    double kc = 0.0;
};

void write_values_csv(const std::filesystem::path& path, std::span<const SeriesValue> values,
                      const std::string& condition);
std::vector<ValuesRow> read_values_csv(const std::filesystem::path& path);

void write_randomness_csv(const std::filesystem::path& path,
                          std::span<const SlotAggregate> aggregates,
                          const std::string& condition);
void write_ttest_csv(const std::filesystem::path& path,
                     std::span<const EstimatorBattery> batteries, const std::string& condition);

struct ReportOptions {
    stats::TTestMode mode = stats::TTestMode::welch;
    stats::DfConvention df_convention = stats::DfConvention::sample;
    double alpha = 0.95;
};

/// Comparison report over one or two conditions (the experimental-tables
/// layout: per-slot means with dispersions and their ratio, the t-value
/// tables, and the yes/no overlap answers).
struct Report {
    std::string tables_csv;
    std::string ttests_csv;
    std::string answers_json;
};
Report build_report(std::span<const ValuesRow> condition1, std::span<const ValuesRow> condition2,
                    const ReportOptions& options);

} // namespace bellpulse::pipeline
