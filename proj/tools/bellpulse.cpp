// bellpulse: pulsed two-station Bell experiment analysis toolkit.
//
// One subcommand per pipeline stage so every intermediate is an inspectable
// file: simulate, ingest, sync, coincidences, chsh, randomness, ttest,
// report, pipeline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bellpulse/bell.hpp"
#include "bellpulse/errors.hpp"
#include "bellpulse/ingest.hpp"
#include "bellpulse/pipeline.hpp"
#include "bellpulse/randomness.hpp"
#include "bellpulse/simulator.hpp"
#include "bellpulse/stats.hpp"
#include "bellpulse/sync.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bellpulse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

struct CommonOptions {
    std::string config_path;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> slots;
    std::optional<double> window_ns;
    std::optional<std::string> df_convention;
};

pipeline::PipelineConfig effective_config(const CommonOptions& opt) {
    pipeline::PipelineConfig cfg = opt.config_path.empty()
                                       ? pipeline::default_config()
                                       : pipeline::load_config_file(opt.config_path);
    if (opt.seed) cfg.experiment.seed = *opt.seed;
    if (!opt.slots.empty()) {
        cfg.analysis.slot_configs.clear();
        for (const auto& spec : opt.slots)
            cfg.analysis.slot_configs.push_back(
                pipeline::parse_slot_spec(spec, cfg.analysis.pulse_duration_ns));
    }
    if (opt.window_ns) cfg.analysis.window_ns = *opt.window_ns;
    if (opt.df_convention) {
        if (*opt.df_convention == "sample")
            cfg.analysis.df_convention = stats::DfConvention::sample;
        else if (*opt.df_convention == "paper")
            cfg.analysis.df_convention = stats::DfConvention::paper;
        else
            throw ConfigError("unknown df convention: " + *opt.df_convention);
    }
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, CommonOptions& opt, bool with_out_dir) {
    cmd->add_option("--config", opt.config_path, "Pipeline config JSON");
    if (with_out_dir) cmd->add_option("--out", opt.out, "Output location");
    cmd->add_option("--seed", opt.seed, "Override the experiment seed");
    cmd->add_option("--slots", opt.slots, "Slot configs like 5x100 (repeatable)");
    cmd->add_option("--window-ns", opt.window_ns, "Coincidence window (ns)");
    cmd->add_option("--df-convention", opt.df_convention, "t-test df convention: sample|paper");
}

std::ostream& open_output(std::ofstream& file, const std::string& out) {
    if (out.empty()) return std::cout;
    file.open(out, std::ios::trunc | std::ios::binary);
    if (!file)
        throw DataError("cannot write output file: " + out);
    return file;
}

// ---- subcommand bodies

int cmd_simulate(const CommonOptions& opt) {
    const auto cfg = effective_config(opt);
    const auto out_dir = opt.out.empty() ? fs::path("sim_out") : fs::path(opt.out);
    const auto sim = simulator::run_experiment(cfg.experiment, out_dir);
    json j;
    j["manifest"] = sim.manifest_path.string();
    if (!sim.ground_truth_path.empty()) j["ground_truth"] = sim.ground_truth_path.string();
    j["runs"] = json::array();
    for (const auto& r : sim.truth.runs)
        j["runs"].push_back({{"run_id", r.run_id},
                             {"n_pulses", r.n_pulses},
                             {"emitted_pairs", r.emitted_pairs},
                             {"detected_pairs", r.detected_pairs.size()}});
    std::cout << j.dump(2) << '\n';
    return kExitOk;
}

int cmd_ingest(const std::string& manifest, const CommonOptions& opt) {
    const auto cfg = effective_config(opt);
    const auto data = ingest::load_experiment(manifest, cfg.analysis.parse);
    json j;
    j["condition"] = data.manifest.condition;
    j["runs"] = json::array();
    for (const auto& run : data.runs) {
        auto count = [](const ingest::ParsedStream& s) {
            std::uint64_t triggers = 0;
            for (const auto& r : s.records)
                if (r.channel == Channel::Trigger) ++triggers;
            return json{{"records", s.records.size()},
                        {"triggers", triggers},
                        {"monotonicity_violations", s.monotonicity_violations}};
        };
        j["runs"].push_back({{"run_id", run.manifest.run_id},
                             {"alpha_deg", run.manifest.settings.alpha_deg},
                             {"beta_deg", run.manifest.settings.beta_deg},
                             {"alice", count(run.alice)},
                             {"bob", count(run.bob)}});
    }
    std::ofstream file;
    open_output(file, opt.out) << j.dump(2) << '\n';
    return kExitOk;
}

int cmd_sync(const std::string& manifest, const CommonOptions& opt) {
    const auto cfg = effective_config(opt);
    const auto data = ingest::load_experiment(manifest, cfg.analysis.parse);
    json j;
    j["runs"] = json::array();
    for (const auto& run : data.runs) {
        std::vector<std::uint64_t> ta, tb;
        for (const auto& r : run.alice.records)
            if (r.channel == Channel::Trigger) ta.push_back(r.time_ps);
        for (const auto& r : run.bob.records)
            if (r.channel == Channel::Trigger) tb.push_back(r.time_ps);
        const auto map = sync::recover_pulse_numbering(ta, tb, cfg.analysis.modulation);
        j["runs"].push_back({{"run_id", run.manifest.run_id},
                             {"ratio", map.clock.ratio},
                             {"offset_ps", map.clock.offset_ps},
                             {"residual_rms_ns", map.clock.residual_rms_ns},
                             {"residual_max_ns", map.clock.residual_max_ns},
                             {"matched_boundaries", map.clock.matched_boundaries},
                             {"n_triggers_a", ta.size()},
                             {"n_triggers_b", tb.size()}});
    }
    std::ofstream file;
    open_output(file, opt.out) << j.dump(2) << '\n';
    return kExitOk;
}

int cmd_coincidences(const std::string& manifest, const CommonOptions& opt) {
    const auto cfg = effective_config(opt);
    const auto data = ingest::load_experiment(manifest, cfg.analysis.parse);
    const auto analysis = pipeline::analyze_experiment(data, cfg.analysis);
    const auto all = analysis.all_records();
    const auto tmp = fs::temp_directory_path() / "bellpulse_coincidences.csv";
    pipeline::write_coincidences_csv(opt.out.empty() ? tmp : fs::path(opt.out), all,
                                     cfg.analysis.slot_configs.front());
    if (opt.out.empty()) {
        std::ifstream in(tmp, std::ios::binary);
        std::cout << in.rdbuf();
        fs::remove(tmp);
    }
    return kExitOk;
}

int cmd_chsh(const std::string& manifest, const CommonOptions& opt) {
    const auto cfg = effective_config(opt);
    const auto data = ingest::load_experiment(manifest, cfg.analysis.parse);
    const auto analysis = pipeline::analyze_experiment(data, cfg.analysis);
    const auto& sca = analysis.per_slot_config.front();
    if (!sca.chsh)
        throw DataError("chsh: the four schedule legs are not all present in the data");
    const auto tmp = fs::temp_directory_path() / "bellpulse_chsh.csv";
    pipeline::write_chsh_csv(opt.out.empty() ? tmp : fs::path(opt.out), *sca.chsh);
    if (opt.out.empty()) {
        std::ifstream in(tmp, std::ios::binary);
        std::cout << in.rdbuf();
        fs::remove(tmp);
    }
    std::fprintf(stderr, "time_avg S = %s +- %s over %s\n",
                 pipeline::fmt_sig9(sca.chsh->time_avg).c_str(),
                 pipeline::fmt_sig9(sca.chsh->time_avg_sigma).c_str(),
                 sca.slots.label().c_str());
    return kExitOk;
}

int cmd_randomness(const std::string& series_path, const std::string& out_values,
                   const CommonOptions& opt) {
    const auto cfg = effective_config(opt);
    const auto file = pipeline::read_series_json(series_path);

    std::vector<pipeline::SeriesValue> values;
    for (const auto& s : file.series) {
        if (s.bits.size() < 2) continue;
        const auto rep = randomness::analyze(s.bits, cfg.analysis.census_lengths);
        values.push_back({s.run_id, s.station, s.slot_index, rep.n_bits, rep.hm, rep.kc});
    }
    if (values.empty())
        throw DataError("randomness: no series with at least 2 bits");

    // aggregate per (station, slot)
    std::vector<pipeline::SlotAggregate> aggregates;
    for (Station st : {Station::Alice, Station::Bob}) {
        std::map<int, std::vector<std::pair<double, double>>> by_slot;
        for (const auto& v : values)
            if (v.station == st) by_slot[v.slot].push_back({v.hm, v.kc});
        for (const auto& [slot, vals] : by_slot) {
            stats::SlotSample hm{slot, {}}, kc{slot, {}};
            for (const auto& [h, k] : vals) {
                hm.values.push_back(h);
                kc.values.push_back(k);
            }
            aggregates.push_back({st, slot, vals.size(), hm.mean(), hm.stddev(), kc.mean(),
                                  kc.stddev()});
        }
    }

    if (!out_values.empty())
        pipeline::write_values_csv(out_values, values, file.condition);
    const auto tmp = fs::temp_directory_path() / "bellpulse_randomness.csv";
    pipeline::write_randomness_csv(opt.out.empty() ? tmp : fs::path(opt.out), aggregates,
                                   file.condition);
    if (opt.out.empty()) {
        std::ifstream in(tmp, std::ios::binary);
        std::cout << in.rdbuf();
        fs::remove(tmp);
    }
    return kExitOk;
}

int cmd_ttest(const std::string& values_path, const CommonOptions& opt) {
    const auto cfg = effective_config(opt);
    const auto rows = pipeline::read_values_csv(values_path);
    if (rows.empty())
        throw DataError("ttest: values file is empty");
    pipeline::ReportOptions ropt{cfg.analysis.ttest_mode, cfg.analysis.df_convention,
                                 cfg.analysis.alpha};
    const auto report = pipeline::build_report(rows, {}, ropt);
    std::ofstream file;
    open_output(file, opt.out) << report.ttests_csv;
    return kExitOk;
}

int cmd_report(const std::string& values_path, const std::string& values2_path,
               const CommonOptions& opt) {
    const auto cfg = effective_config(opt);
    const auto rows = pipeline::read_values_csv(values_path);
    std::vector<pipeline::ValuesRow> rows2;
    if (!values2_path.empty()) rows2 = pipeline::read_values_csv(values2_path);
    pipeline::ReportOptions ropt{cfg.analysis.ttest_mode, cfg.analysis.df_convention,
                                 cfg.analysis.alpha};
    const auto report = pipeline::build_report(rows, rows2, ropt);

    const fs::path dir = opt.out.empty() ? fs::path(".") : fs::path(opt.out);
    fs::create_directories(dir);
    for (auto [name, text] : {std::pair{"report_tables.csv", &report.tables_csv},
                              std::pair{"report_ttests.csv", &report.ttests_csv},
                              std::pair{"report_answers.json", &report.answers_json}}) {
        std::ofstream out(dir / name, std::ios::trunc | std::ios::binary);
        if (!out)
            throw DataError(std::string("cannot write ") + name);
        out << *text;
    }
    std::cout << report.answers_json;
    return kExitOk;
}

int cmd_pipeline(const CommonOptions& opt) {
    const auto cfg = effective_config(opt);
    const auto out_dir = opt.out.empty() ? fs::path("pipeline_out") : fs::path(opt.out);
    const auto result = pipeline::run_full_pipeline(cfg, out_dir);
    std::fprintf(stderr, "summary written to %s\n", result.summary_path.string().c_str());
    for (const auto& sca : result.analysis.per_slot_config) {
        if (sca.chsh)
            std::fprintf(stderr, "  %s: <S(t)> = %s +- %s\n", sca.slots.label().c_str(),
                         pipeline::fmt_sig9(sca.chsh->time_avg).c_str(),
                         pipeline::fmt_sig9(sca.chsh->time_avg_sigma).c_str());
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pulsed two-station Bell experiment analysis: time-tag ingestion, clock "
                 "synchronization, coincidences, time-resolved CHSH, per-slot randomness "
                 "estimation, and the statistical comparison battery, with an embedded "
                 "Monte-Carlo simulator."};
    app.require_subcommand(1);

    CommonOptions sim_opt;
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic experiment (.btt files)");
    add_common(simulate, sim_opt, true);

    CommonOptions ingest_opt;
    std::string ingest_manifest;
    auto* ingest_cmd = app.add_subcommand("ingest", "Parse time-tag files and report stream stats");
    ingest_cmd->add_option("--manifest", ingest_manifest, "Experiment manifest JSON")->required();
    add_common(ingest_cmd, ingest_opt, true);

    CommonOptions sync_opt;
    std::string sync_manifest;
    auto* sync_cmd = app.add_subcommand("sync", "Fit the two-station clock model (JSON)");
    sync_cmd->add_option("--manifest", sync_manifest, "Experiment manifest JSON")->required();
    add_common(sync_cmd, sync_opt, true);

    CommonOptions coinc_opt;
    std::string coinc_manifest;
    auto* coinc_cmd = app.add_subcommand("coincidences", "Extract coincidences (CSV)");
    coinc_cmd->add_option("--manifest", coinc_manifest, "Experiment manifest JSON")->required();
    add_common(coinc_cmd, coinc_opt, true);

    CommonOptions chsh_opt;
    std::string chsh_manifest;
    auto* chsh_cmd = app.add_subcommand("chsh", "Time-resolved S_CHSH per slot (CSV)");
    chsh_cmd->add_option("--manifest", chsh_manifest, "Experiment manifest JSON")->required();
    add_common(chsh_cmd, chsh_opt, true);

    CommonOptions rand_opt;
    std::string rand_series, rand_out_values;
    auto* rand_cmd = app.add_subcommand("randomness", "Per-slot Hm/Kc estimates (CSV)");
    rand_cmd->add_option("--series", rand_series, "Slot-series JSON file")->required();
    rand_cmd->add_option("--out-values", rand_out_values, "Also write per-series values CSV");
    add_common(rand_cmd, rand_opt, true);

    CommonOptions ttest_opt;
    std::string ttest_values;
    auto* ttest_cmd = app.add_subcommand("ttest", "Slot-comparison t-tables (CSV)");
    ttest_cmd->add_option("--values", ttest_values, "Per-series values CSV")->required();
    add_common(ttest_cmd, ttest_opt, true);

    CommonOptions report_opt;
    std::string report_values, report_values2;
    auto* report_cmd = app.add_subcommand("report", "Comparison tables and overlap answers");
    report_cmd->add_option("--values", report_values, "Condition 1 values CSV")->required();
    report_cmd->add_option("--values2", report_values2, "Condition 2 values CSV (optional)");
    add_common(report_cmd, report_opt, true);

    CommonOptions pipe_opt;
    auto* pipe_cmd = app.add_subcommand("pipeline", "simulate + analyze end to end");
    add_common(pipe_cmd, pipe_opt, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(sim_opt);
        if (ingest_cmd->parsed()) return cmd_ingest(ingest_manifest, ingest_opt);
        if (sync_cmd->parsed()) return cmd_sync(sync_manifest, sync_opt);
        if (coinc_cmd->parsed()) return cmd_coincidences(coinc_manifest, coinc_opt);
        if (chsh_cmd->parsed()) return cmd_chsh(chsh_manifest, chsh_opt);
        if (rand_cmd->parsed()) return cmd_randomness(rand_series, rand_out_values, rand_opt);
        if (ttest_cmd->parsed()) return cmd_ttest(ttest_values, ttest_opt);
        if (report_cmd->parsed()) return cmd_report(report_values, report_values2, report_opt);
        if (pipe_cmd->parsed()) return cmd_pipeline(pipe_opt);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return kExitInternal;
    }
    return kExitInternal;
}
