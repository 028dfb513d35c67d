#include "bellpulse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bellpulse/errors.hpp"
#include "bellpulse/randomness.hpp"

namespace bellpulse::pipeline {
namespace {

using nlohmann::json;

Station station_from(const std::string& s) {
    if (s == "alice") return Station::Alice;
    if (s == "bob") return Station::Bob;
    throw ParseError("unknown station name: " + s);
}

json clock_to_json(const sync::ClockModel& c) {
    return {{"ratio", c.ratio},
            {"offset_ps", c.offset_ps},
            {"residual_rms_ns", c.residual_rms_ns},
            {"residual_max_ns", c.residual_max_ns},
            {"matched_boundaries", c.matched_boundaries}};
}

json ttest_to_json(const stats::TTestResult& t) {
    json j{{"df", t.df},
           {"t_critical", t.t_critical},
           {"significant", t.significant},
           {"infinite_t", t.infinite_t}};
    if (std::isfinite(t.t_value)) j["t"] = t.t_value;
    return j;
}

std::string ttest_csv_fields(const stats::TTestResult& t) {
    std::string s;
    s += t.infinite_t ? "inf" : fmt_sig9(t.t_value);
    s += ',' + std::to_string(t.df);
    s += ',' + fmt_sig9(t.t_critical);
    s += ',' + std::string(t.significant ? "1" : "0");
    return s;
}

} // namespace

std::string fmt_sig9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void AnalysisOptions::validate() const {
    if (slot_configs.empty())
        throw ConfigError("analysis: at least one slot config required");
    for (const auto& sc : slot_configs) {
        sc.validate();
        if (std::fabs(sc.pulse_duration_ns - pulse_duration_ns) > 1e-9 * pulse_duration_ns)
            throw ConfigError("analysis: slot config " + sc.label() +
                              " does not partition the pulse duration");
    }
    if (!(window_ns > 0.0))
        throw ConfigError("analysis: window_ns must be positive");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("analysis: alpha must be in (0, 1)");
    for (int n : census_lengths)
        if (n < 1 || n > 16)
            throw ConfigError("analysis: census lengths must be in [1, 16]");
}

void PipelineConfig::validate() const {
    experiment.validate();
    analysis.validate();
    if (std::fabs(analysis.pulse_duration_ns - experiment.pulse_duration_ns) >
        1e-9 * experiment.pulse_duration_ns)
        throw ConfigError("analysis pulse duration disagrees with the experiment");
}

SlotConfig parse_slot_spec(const std::string& spec, double pulse_duration_ns) {
    const auto x = spec.find('x');
    if (x == std::string::npos || x == 0 || x + 1 >= spec.size())
        throw ConfigError("slot spec must look like <n>x<width_ns>: " + spec);
    SlotConfig cfg;
    try {
        std::size_t used = 0;
        cfg.n_slots = std::stoi(spec.substr(0, x), &used);
        if (used != x) throw std::invalid_argument(spec);
        cfg.slot_width_ns = std::stod(spec.substr(x + 1), &used);
        if (used != spec.size() - x - 1) throw std::invalid_argument(spec);
    } catch (const std::exception&) {
        throw ConfigError("cannot parse slot spec: " + spec);
    }
    cfg.pulse_duration_ns = static_cast<double>(cfg.n_slots) * cfg.slot_width_ns;
    cfg.validate();
    if (std::fabs(cfg.pulse_duration_ns - pulse_duration_ns) > 1e-9 * pulse_duration_ns)
        throw ConfigError("slot spec " + spec + " does not cover the pulse duration (" +
                          fmt_sig9(pulse_duration_ns) + " ns)");
    return cfg;
}

PipelineConfig default_config() {
    PipelineConfig cfg;
    cfg.analysis.slot_configs = {SlotConfig{5, 100.0, 500.0}, SlotConfig{10, 50.0, 500.0}};
    cfg.analysis.pulse_duration_ns = cfg.experiment.pulse_duration_ns;
    cfg.analysis.trigger_delay_ns = cfg.experiment.trigger_delay_ns;
    cfg.analysis.modulation = cfg.experiment.modulation;
    cfg.analysis.schedule = cfg.experiment.angles.schedule();
    return cfg;
}

namespace {

simulator::ExperimentConfig experiment_from_json(const json& j) {
    simulator::ExperimentConfig e;
    e.pulse_duration_ns = j.value("pulse_duration_ns", e.pulse_duration_ns);
    e.repetition_rate_hz = j.value("repetition_rate_hz", e.repetition_rate_hz);
    if (j.contains("modulation")) {
        e.modulation.blocks.clear();
        for (const auto& blk : j.at("modulation"))
            e.modulation.blocks.push_back(
                {blk.at(0).get<double>(), blk.at(1).get<std::uint32_t>()});
    }
    e.n_pulses_per_run = j.value("n_pulses_per_run", e.n_pulses_per_run);
    e.duration_s = j.value("duration_s", e.duration_s);
    e.pair_yield_per_pulse = j.value("pair_yield_per_pulse", e.pair_yield_per_pulse);
    e.visibility = j.value("visibility", e.visibility);
    auto detector = [](const json& jd, simulator::DetectorConfig d) {
        d.efficiency = jd.value("efficiency", d.efficiency);
        d.jitter_sigma_ns = jd.value("jitter_sigma_ns", d.jitter_sigma_ns);
        d.dark_rate_hz = jd.value("dark_rate_hz", d.dark_rate_hz);
        d.outcome_bias = jd.value("outcome_bias", d.outcome_bias);
        return d;
    };
    if (j.contains("detector_a")) e.detector_a = detector(j.at("detector_a"), e.detector_a);
    if (j.contains("detector_b")) e.detector_b = detector(j.at("detector_b"), e.detector_b);
    if (j.contains("clock_b")) {
        e.clock_b.rate_offset_ppm = j.at("clock_b").value("rate_offset_ppm", 0.0);
        e.clock_b.offset_ns = j.at("clock_b").value("offset_ns", 0.0);
    }
    e.trigger_jitter_ns = j.value("trigger_jitter_ns", e.trigger_jitter_ns);
    e.trigger_delay_ns = j.value("trigger_delay_ns", e.trigger_delay_ns);
    if (j.contains("angles")) {
        const auto& ja = j.at("angles");
        e.angles.a = ja.value("a", e.angles.a);
        e.angles.a_prime = ja.value("a_prime", e.angles.a_prime);
        e.angles.b = ja.value("b", e.angles.b);
        e.angles.b_prime = ja.value("b_prime", e.angles.b_prime);
    }
    if (j.contains("runs")) {
        for (const auto& jr : j.at("runs"))
            e.runs.push_back({jr.at("alpha_deg").get<double>(), jr.at("beta_deg").get<double>()});
    }
    const std::string model = j.value("source_model", std::string("qm"));
    if (model == "qm")
        e.source_model = simulator::SourceModel::qm;
    else if (model == "local_deterministic")
        e.source_model = simulator::SourceModel::local_deterministic;
    else if (model == "non_ergodic")
        e.source_model = simulator::SourceModel::non_ergodic;
    else
        throw ConfigError("unknown source_model: " + model);
    if (j.contains("forbidden_string")) {
        for (char c : j.at("forbidden_string").get<std::string>()) {
            if (c != '0' && c != '1')
                throw ConfigError("forbidden_string must be a 0/1 string");
            e.forbidden_string.push_back(c == '1');
        }
    }
    e.seed = j.value("seed", e.seed);
    e.condition = j.value("condition", e.condition);
    e.write_ground_truth = j.value("write_ground_truth", e.write_ground_truth);
    return e;
}

json experiment_to_json(const simulator::ExperimentConfig& e) {
    json j;
    j["pulse_duration_ns"] = e.pulse_duration_ns;
    j["repetition_rate_hz"] = e.repetition_rate_hz;
    j["modulation"] = json::array();
    for (const auto& b : e.modulation.blocks)
        j["modulation"].push_back({b.rate_hz, b.length_pulses});
    j["n_pulses_per_run"] = e.n_pulses_per_run;
    j["duration_s"] = e.duration_s;
    j["pair_yield_per_pulse"] = e.pair_yield_per_pulse;
    j["visibility"] = e.visibility;
    auto detector = [](const simulator::DetectorConfig& d) {
        return json{{"efficiency", d.efficiency},
                    {"jitter_sigma_ns", d.jitter_sigma_ns},
                    {"dark_rate_hz", d.dark_rate_hz},
                    {"outcome_bias", d.outcome_bias}};
    };
    j["detector_a"] = detector(e.detector_a);
    j["detector_b"] = detector(e.detector_b);
    j["clock_b"] = {{"rate_offset_ppm", e.clock_b.rate_offset_ppm},
                    {"offset_ns", e.clock_b.offset_ns}};
    j["trigger_jitter_ns"] = e.trigger_jitter_ns;
    j["trigger_delay_ns"] = e.trigger_delay_ns;
    j["angles"] = {{"a", e.angles.a},
                   {"a_prime", e.angles.a_prime},
                   {"b", e.angles.b},
                   {"b_prime", e.angles.b_prime}};
    if (!e.runs.empty()) {
        j["runs"] = json::array();
        for (const auto& r : e.runs)
            j["runs"].push_back({{"alpha_deg", r.alpha_deg}, {"beta_deg", r.beta_deg}});
    }
    switch (e.source_model) {
    case simulator::SourceModel::qm: j["source_model"] = "qm"; break;
    case simulator::SourceModel::local_deterministic:
        j["source_model"] = "local_deterministic";
        break;
    case simulator::SourceModel::non_ergodic: j["source_model"] = "non_ergodic"; break;
    }
    if (!e.forbidden_string.empty()) {
        std::string f;
        for (auto b : e.forbidden_string) f += b ? '1' : '0';
        j["forbidden_string"] = f;
    }
    j["seed"] = e.seed;
    j["condition"] = e.condition;
    j["write_ground_truth"] = e.write_ground_truth;
    return j;
}

} // namespace

PipelineConfig parse_config_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }

    PipelineConfig cfg = default_config();
    try {
        if (j.contains("experiment")) cfg.experiment = experiment_from_json(j.at("experiment"));

        // analysis defaults follow the experiment section
        cfg.analysis.pulse_duration_ns = cfg.experiment.pulse_duration_ns;
        cfg.analysis.trigger_delay_ns = cfg.experiment.trigger_delay_ns;
        cfg.analysis.modulation = cfg.experiment.modulation;
        cfg.analysis.schedule = cfg.experiment.angles.schedule();
        cfg.analysis.slot_configs.clear();
        for (int n : {5, 10})
            if (std::fmod(cfg.experiment.pulse_duration_ns, n) == 0.0)
                cfg.analysis.slot_configs.push_back(
                    SlotConfig{n, cfg.experiment.pulse_duration_ns / n,
                               cfg.experiment.pulse_duration_ns});

        if (j.contains("analysis")) {
            const auto& ja = j.at("analysis");
            if (ja.contains("slot_configs")) {
                cfg.analysis.slot_configs.clear();
                for (const auto& s : ja.at("slot_configs"))
                    cfg.analysis.slot_configs.push_back(parse_slot_spec(
                        s.get<std::string>(), cfg.analysis.pulse_duration_ns));
            }
            cfg.analysis.window_ns = ja.value("window_ns", cfg.analysis.window_ns);
            cfg.analysis.trigger_delay_ns =
                ja.value("trigger_delay_ns", cfg.analysis.trigger_delay_ns);
            if (ja.contains("ttest_mode")) {
                const auto m = ja.at("ttest_mode").get<std::string>();
                if (m == "welch")
                    cfg.analysis.ttest_mode = stats::TTestMode::welch;
                else if (m == "pooled")
                    cfg.analysis.ttest_mode = stats::TTestMode::pooled;
                else
                    throw ConfigError("unknown ttest_mode: " + m);
            }
            if (ja.contains("df_convention")) {
                const auto c = ja.at("df_convention").get<std::string>();
                if (c == "sample")
                    cfg.analysis.df_convention = stats::DfConvention::sample;
                else if (c == "paper")
                    cfg.analysis.df_convention = stats::DfConvention::paper;
                else
                    throw ConfigError("unknown df_convention: " + c);
            }
            cfg.analysis.alpha = ja.value("alpha", cfg.analysis.alpha);
            if (ja.contains("census_lengths"))
                cfg.analysis.census_lengths =
                    ja.at("census_lengths").get<std::vector<int>>();
            cfg.analysis.parse.max_monotonicity_violations = ja.value(
                "max_monotonicity_violations", cfg.analysis.parse.max_monotonicity_violations);
        }
    } catch (const json::exception& e) {
        throw ConfigError("config field error: " + std::string(e.what()));
    }
    cfg.validate();
    return cfg;
}

PipelineConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_json(ss.str());
}

std::string config_to_json(const PipelineConfig& cfg) {
    json j;
    j["experiment"] = experiment_to_json(cfg.experiment);
    json ja;
    ja["slot_configs"] = json::array();
    for (const auto& sc : cfg.analysis.slot_configs) ja["slot_configs"].push_back(sc.label());
    ja["window_ns"] = cfg.analysis.window_ns;
    ja["trigger_delay_ns"] = cfg.analysis.trigger_delay_ns;
    ja["ttest_mode"] = cfg.analysis.ttest_mode == stats::TTestMode::welch ? "welch" : "pooled";
    ja["df_convention"] =
        cfg.analysis.df_convention == stats::DfConvention::sample ? "sample" : "paper";
    ja["alpha"] = cfg.analysis.alpha;
    ja["census_lengths"] = cfg.analysis.census_lengths;
    ja["max_monotonicity_violations"] = cfg.analysis.parse.max_monotonicity_violations;
    j["analysis"] = ja;
    return j.dump(2);
}

std::vector<CoincidenceRecord> ExperimentAnalysis::all_records() const {
    std::vector<CoincidenceRecord> all;
    for (const auto& [run_id, records] : run_records)
        all.insert(all.end(), records.begin(), records.end());
    return all;
}

ExperimentAnalysis analyze_experiment(const ingest::ExperimentData& data,
                                      const AnalysisOptions& options) {
    options.validate();
    if (data.runs.empty())
        throw DataError("analyze_experiment: no runs loaded");

    ExperimentAnalysis out;
    out.condition = data.manifest.condition;

    for (const auto& run : data.runs) {
        std::vector<std::uint64_t> trig_a, trig_b;
        for (const auto& rec : run.alice.records)
            if (rec.channel == Channel::Trigger) trig_a.push_back(rec.time_ps);
        for (const auto& rec : run.bob.records)
            if (rec.channel == Channel::Trigger) trig_b.push_back(rec.time_ps);

        const auto map = sync::recover_pulse_numbering(trig_a, trig_b, options.modulation);
        const auto ev_a = sync::assign_detections(run.alice.records, map.trigger_ps_a,
                                                  map.index_a, Station::Alice,
                                                  options.trigger_delay_ns,
                                                  options.pulse_duration_ns);
        const auto ev_b = sync::assign_detections(run.bob.records, map.trigger_ps_b,
                                                  map.index_b, Station::Bob,
                                                  options.trigger_delay_ns,
                                                  options.pulse_duration_ns);

        RunSummary rs;
        rs.run_id = run.manifest.run_id;
        rs.settings = run.manifest.settings;
        rs.clock = map.clock;
        rs.n_triggers_a = trig_a.size();
        rs.n_triggers_b = trig_b.size();
        for (const auto& ev : ev_a) (ev.in_pulse ? rs.in_pulse_a : rs.out_of_pulse_a)++;
        for (const auto& ev : ev_b) (ev.in_pulse ? rs.in_pulse_b : rs.out_of_pulse_b)++;

        auto records = coincidence::find_coincidences(ev_a, ev_b, options.window_ns,
                                                      run.manifest.settings, &rs.diag);
        rs.n_coincidences = records.size();
        out.runs.push_back(rs);
        out.run_records.emplace_back(run.manifest.run_id, std::move(records));
    }

    const auto all = out.all_records();
    for (const auto& slots : options.slot_configs) {
        SlotConfigAnalysis sca;
        sca.slots = slots;

        // CHSH legs
        const auto by_setting = coincidence::classify_counts(all, slots);
        std::array<std::vector<coincidence::CoincidenceCounts>, 4> legs;
        bool have_all_legs = true;
        const auto leg_settings = options.schedule.legs();
        for (int i = 0; i < 4; ++i) {
            const auto it =
                by_setting.find(coincidence::SettingKey::from(leg_settings[static_cast<std::size_t>(i)]));
            if (it == by_setting.end()) {
                have_all_legs = false;
                break;
            }
            legs[static_cast<std::size_t>(i)] = it->second;
        }
        if (have_all_legs) {
            sca.chsh = bell::s_time_resolved(legs, slots);
            std::vector<double> xs, ys, ss;
            bool all_sigma_positive = true;
            for (const auto& slot : sca.chsh->slots) {
                if (slot.flagged) continue;
                xs.push_back(slot.slot);
                ys.push_back(slot.s);
                ss.push_back(slot.sigma);
                if (!(slot.sigma > 0.0)) all_sigma_positive = false;
            }
            if (xs.size() >= 2)
                sca.chsh_slope = stats::slope_fit(
                    xs, ys, all_sigma_positive ? std::span<const double>(ss)
                                               : std::span<const double>{});
        }

        // per-run slot series and estimator values
        for (const auto& [run_id, records] : out.run_records) {
            auto series = coincidence::build_slot_series(records, slots, run_id);
            for (auto& s : series) {
                if (s.bits.size() >= 2) {
                    const auto rep = randomness::analyze(s.bits, options.census_lengths);
                    sca.values.push_back(
                        {run_id, s.station, s.slot_index, rep.n_bits, rep.hm, rep.kc});
                }
                sca.series.push_back(std::move(s));
            }
        }

        // aggregates per (station, slot)
        for (Station st : {Station::Alice, Station::Bob}) {
            for (int slot = 0; slot < slots.n_slots; ++slot) {
                stats::SlotSample hm_sample{slot, {}}, kc_sample{slot, {}};
                for (const auto& v : sca.values) {
                    if (v.station != st || v.slot != slot) continue;
                    hm_sample.values.push_back(v.hm);
                    kc_sample.values.push_back(v.kc);
                }
                if (hm_sample.values.empty()) continue;
                SlotAggregate agg;
                agg.station = st;
                agg.slot = slot;
                agg.n_series = hm_sample.values.size();
                agg.mean_hm = hm_sample.mean();
                agg.std_hm = hm_sample.stddev();
                agg.mean_kc = kc_sample.mean();
                agg.std_kc = kc_sample.stddev();
                sca.aggregates.push_back(agg);
            }
        }

        // slot battery per station and estimator (needs >= 2 values per slot)
        for (Station st : {Station::Alice, Station::Bob}) {
            for (const char* est : {"hm", "kc"}) {
                std::vector<stats::SlotSample> samples;
                bool usable = true;
                for (int slot = 0; slot < slots.n_slots; ++slot) {
                    stats::SlotSample sample{slot, {}};
                    for (const auto& v : sca.values)
                        if (v.station == st && v.slot == slot)
                            sample.values.push_back(est == std::string("hm") ? v.hm : v.kc);
                    if (sample.values.size() < 2) {
                        usable = false;
                        break;
                    }
                    samples.push_back(std::move(sample));
                }
                if (!usable || samples.size() < 2) continue;
                sca.batteries.push_back(
                    {st, est,
                     stats::slot_battery(samples, options.ttest_mode, options.df_convention,
                                         options.alpha)});
            }
        }
        out.per_slot_config.push_back(std::move(sca));
    }
    return out;
}

std::string summary_json(const ExperimentAnalysis& analysis, const PipelineConfig& cfg) {
    json j;
    j["condition"] = analysis.condition;
    j["seed"] = cfg.experiment.seed;
    j["config"] = json::parse(config_to_json(cfg));

    j["runs"] = json::array();
    for (const auto& r : analysis.runs) {
        j["runs"].push_back({{"run_id", r.run_id},
                             {"alpha_deg", r.settings.alpha_deg},
                             {"beta_deg", r.settings.beta_deg},
                             {"clock", clock_to_json(r.clock)},
                             {"n_triggers_a", r.n_triggers_a},
                             {"n_triggers_b", r.n_triggers_b},
                             {"in_pulse_a", r.in_pulse_a},
                             {"in_pulse_b", r.in_pulse_b},
                             {"out_of_pulse_a", r.out_of_pulse_a},
                             {"out_of_pulse_b", r.out_of_pulse_b},
                             {"ambiguous_pulses_a", r.diag.ambiguous_pulses_a},
                             {"ambiguous_pulses_b", r.diag.ambiguous_pulses_b},
                             {"n_coincidences", r.n_coincidences}});
    }

    json slot_cfgs = json::object();
    for (const auto& sca : analysis.per_slot_config) {
        json js;
        if (sca.chsh) {
            json jc;
            jc["per_slot"] = json::array();
            for (const auto& s : sca.chsh->slots)
                jc["per_slot"].push_back({{"slot", s.slot},
                                          {"s", s.s},
                                          {"sigma", s.sigma},
                                          {"total", s.total},
                                          {"flagged", s.flagged}});
            jc["time_avg"] = sca.chsh->time_avg;
            jc["time_avg_sigma"] = sca.chsh->time_avg_sigma;
            jc["flagged_slots"] = sca.chsh->flagged_slots;
            if (sca.chsh_slope) {
                jc["slope"] = sca.chsh_slope->slope;
                jc["slope_stderr"] = sca.chsh_slope->stderr_slope;
            }
            js["chsh"] = jc;
        }
        js["randomness"] = json::array();
        for (const auto& a : sca.aggregates)
            js["randomness"].push_back({{"station", station_name(a.station)},
                                        {"slot", a.slot},
                                        {"n_series", a.n_series},
                                        {"mean_hm", a.mean_hm},
                                        {"std_hm", a.std_hm},
                                        {"mean_kc", a.mean_kc},
                                        {"std_kc", a.std_kc}});
        js["ttests"] = json::array();
        js["answers"] = json::array();
        for (const auto& b : sca.batteries) {
            for (const auto& cmp : b.battery.vs_first) {
                json jt{{"station", station_name(b.station)},
                        {"estimator", b.estimator},
                        {"comparison", "vs_slot1"},
                        {"slot", cmp.slot},
                        {"test", ttest_to_json(cmp.test)}};
                if (cmp.paper) jt["paper"] = ttest_to_json(*cmp.paper);
                js["ttests"].push_back(std::move(jt));
            }
            for (const auto& cmp : b.battery.vs_pooled) {
                json jt{{"station", station_name(b.station)},
                        {"estimator", b.estimator},
                        {"comparison", "vs_pooled"},
                        {"slot", cmp.slot},
                        {"test", ttest_to_json(cmp.test)}};
                if (cmp.paper) jt["paper"] = ttest_to_json(*cmp.paper);
                js["ttests"].push_back(std::move(jt));
            }
            js["answers"].push_back(
                {{"station", station_name(b.station)},
                 {"estimator", b.estimator},
                 {"slot1_slot3_overlap", b.battery.answers.slot1_slot3_overlap},
                 {"slot1_tail_avg_overlap", b.battery.answers.slot1_tail_avg_overlap},
                 {"slope_head_tail_overlap", b.battery.answers.slope_head_tail_overlap}});
        }
        slot_cfgs[sca.slots.label()] = std::move(js);
    }
    j["slot_configs"] = std::move(slot_cfgs);
    return j.dump(2) + "\n";
}

PipelineResult run_full_pipeline(const PipelineConfig& cfg,
                                 const std::filesystem::path& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);

    const auto sim = simulator::run_experiment(cfg.experiment, out_dir / "data");
    const auto data = ingest::load_experiment(sim.manifest_path, cfg.analysis.parse);

    PipelineResult result;
    result.analysis = analyze_experiment(data, cfg.analysis);

    const auto all = result.analysis.all_records();
    write_coincidences_csv(out_dir / "coincidences.csv", all,
                           cfg.analysis.slot_configs.front());
    for (const auto& sca : result.analysis.per_slot_config) {
        const std::string label = sca.slots.label();
        if (sca.chsh) write_chsh_csv(out_dir / ("chsh_" + label + ".csv"), *sca.chsh);
        write_series_json(out_dir / ("series_" + label + ".json"), sca,
                          result.analysis.condition);
        write_values_csv(out_dir / ("values_" + label + ".csv"), sca.values,
                         result.analysis.condition);
        write_randomness_csv(out_dir / ("randomness_" + label + ".csv"), sca.aggregates,
                             result.analysis.condition);
        if (!sca.batteries.empty())
            write_ttest_csv(out_dir / ("ttest_" + label + ".csv"), sca.batteries,
                            result.analysis.condition);
    }

    result.summary = summary_json(result.analysis, cfg);
    result.summary_path = out_dir / "summary.json";
    std::ofstream out(result.summary_path, std::ios::trunc | std::ios::binary);
    if (!out)
        throw DataError("cannot write summary.json");
    out << result.summary;
    return result;
}

void write_chsh_csv(const std::filesystem::path& path, const bell::SParameterSeries& series) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << "slot_index,S,sigma\n";
    for (const auto& s : series.slots) {
        if (s.flagged)
            out << s.slot << ",,\n";
        else
            out << s.slot << ',' << fmt_sig9(s.s) << ',' << fmt_sig9(s.sigma) << '\n';
    }
}

void write_coincidences_csv(const std::filesystem::path& path,
                            std::span<const CoincidenceRecord> records,
                            const SlotConfig& slots) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << "pulse_index,slot,outcome_a,outcome_b,offset_mean_ns\n";
    for (const auto& r : records) {
        const int slot = slot_of(r.offset_ns, slots);
        out << r.pulse_index << ',';
        if (slot == kOutOfPulse)
            out << "out";
        else
            out << slot;
        out << ',' << int(r.outcome_a) << ',' << int(r.outcome_b) << ','
            << fmt_sig9(r.offset_ns) << '\n';
    }
}

void write_series_json(const std::filesystem::path& path, const SlotConfigAnalysis& sca,
                       const std::string& condition) {
    json j;
    j["condition"] = condition;
    j["slot_config"] = sca.slots.label();
    j["series"] = json::array();
    for (const auto& s : sca.series) {
        std::string bits;
        bits.reserve(s.bits.size());
        for (auto b : s.bits) bits += b ? '1' : '0';
        j["series"].push_back({{"run_id", s.run_id},
                               {"station", station_name(s.station)},
                               {"slot", s.slot_index},
                               {"bits", bits}});
    }
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << j.dump() << '\n';
}

SeriesFile read_series_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open series file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("series file is not valid JSON: " + std::string(e.what()));
    }
    SeriesFile f;
    try {
        f.condition = j.value("condition", std::string{});
        f.slot_label = j.value("slot_config", std::string{});
        for (const auto& js : j.at("series")) {
            SlotSeries s;
            s.run_id = js.at("run_id").get<std::string>();
            s.station = station_from(js.at("station").get<std::string>());
            s.slot_index = js.at("slot").get<int>();
            for (char c : js.at("bits").get<std::string>()) {
                if (c != '0' && c != '1')
                    throw ParseError("series bits must be 0/1");
                s.bits.push_back(c == '1');
            }
            f.series.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw ParseError("series field error: " + std::string(e.what()));
    }
    return f;
}

void write_values_csv(const std::filesystem::path& path, std::span<const SeriesValue> values,
                      const std::string& condition) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << "station,condition,run_id,slot,n_bits,hm,kc\n";
    for (const auto& v : values)
        out << station_name(v.station) << ',' << condition << ',' << v.run_id << ',' << v.slot
            << ',' << v.n_bits << ',' << fmt_sig9(v.hm) << ',' << fmt_sig9(v.kc) << '\n';
}

std::vector<ValuesRow> read_values_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open values file: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "station,condition,run_id,slot,n_bits,hm,kc")
        throw ParseError("values file header mismatch in " + path.string());
    std::vector<ValuesRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 7)
            throw ParseError("values file: expected 7 fields at line " +
                             std::to_string(line_no));
        ValuesRow r;
        r.station = station_from(fields[0]);
        r.condition = fields[1];
        r.run_id = fields[2];
        r.slot = std::stoi(fields[3]);
        r.n_bits = static_cast<std::size_t>(std::stoull(fields[4]));
        r.hm = std::stod(fields[5]);
        r.kc = std::stod(fields[6]);
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_randomness_csv(const std::filesystem::path& path,
                          std::span<const SlotAggregate> aggregates,
                          const std::string& condition) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << "station,L_label,slot,mean_hm,std_hm,mean_kc,std_kc\n";
    for (const auto& a : aggregates)
        out << station_name(a.station) << ',' << condition << ',' << a.slot << ','
            << fmt_sig9(a.mean_hm) << ',' << fmt_sig9(a.std_hm) << ',' << fmt_sig9(a.mean_kc)
            << ',' << fmt_sig9(a.std_kc) << '\n';
}

void write_ttest_csv(const std::filesystem::path& path,
                     std::span<const EstimatorBattery> batteries,
                     const std::string& condition) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << "condition,station,estimator,comparison,slot,t_value,df,t_critical,significant,"
           "paper_t_value,paper_df,paper_t_critical,paper_significant\n";
    for (const auto& b : batteries) {
        auto emit = [&](const char* comparison, const stats::SlotComparison& cmp) {
            out << condition << ',' << station_name(b.station) << ',' << b.estimator << ','
                << comparison << ',' << cmp.slot << ',' << ttest_csv_fields(cmp.test);
            if (cmp.paper)
                out << ',' << ttest_csv_fields(*cmp.paper);
            else
                out << ",,,,";
            out << '\n';
        };
        for (const auto& cmp : b.battery.vs_first) emit("vs_slot1", cmp);
        for (const auto& cmp : b.battery.vs_pooled) emit("vs_pooled", cmp);
    }
}

namespace {

struct GroupedValues {
    // slot -> values, per estimator
    std::map<int, std::vector<double>> hm;
    std::map<int, std::vector<double>> kc;
};

std::map<std::pair<Station, std::string>, GroupedValues> group_rows(
    std::span<const ValuesRow> rows) {
    std::map<std::pair<Station, std::string>, GroupedValues> grouped;
    for (const auto& r : rows) {
        auto& g = grouped[{r.station, r.condition}];
        g.hm[r.slot].push_back(r.hm);
        g.kc[r.slot].push_back(r.kc);
    }
    return grouped;
}

std::vector<stats::SlotSample> to_samples(const std::map<int, std::vector<double>>& by_slot) {
    std::vector<stats::SlotSample> samples;
    for (const auto& [slot, values] : by_slot) samples.push_back({slot, values});
    return samples;
}

} // namespace

Report build_report(std::span<const ValuesRow> condition1, std::span<const ValuesRow> condition2,
                    const ReportOptions& options) {
    if (condition1.empty())
        throw DataError("build_report: first condition has no values");
    const bool two = !condition2.empty();

    const std::string cond1 = condition1.front().condition;
    const std::string cond2 = two ? condition2.front().condition : std::string{};
    auto g1 = group_rows(condition1);
    auto g2 = group_rows(condition2);

    std::ostringstream tables, ttests;
    tables << "station,estimator,slot,mean_" << (cond1.empty() ? "c1" : cond1) << ",std_"
           << (cond1.empty() ? "c1" : cond1);
    if (two)
        tables << ",mean_" << cond2 << ",std_" << cond2 << ",ratio";
    tables << '\n';

    ttests << "condition,station,estimator,comparison,slot,t_value,df,t_critical,significant,"
              "paper_t_value,paper_df,paper_t_critical,paper_significant\n";

    json answers;
    answers["per_condition"] = json::object();
    answers["cross_condition"] = json::array();

    for (Station st : {Station::Alice, Station::Bob}) {
        for (const char* est : {"hm", "kc"}) {
            const auto it1 = g1.find({st, cond1});
            if (it1 == g1.end()) continue;
            const auto& by_slot1 =
                est == std::string("hm") ? it1->second.hm : it1->second.kc;
            auto samples1 = to_samples(by_slot1);

            std::vector<stats::SlotSample> samples2;
            if (two) {
                const auto it2 = g2.find({st, cond2});
                if (it2 != g2.end())
                    samples2 = to_samples(est == std::string("hm") ? it2->second.hm
                                                                   : it2->second.kc);
            }

            // mean/dispersion table with cross-condition ratio
            for (const auto& s1 : samples1) {
                tables << station_name(st) << ',' << est << ',' << s1.slot_index << ','
                       << fmt_sig9(s1.mean()) << ',' << fmt_sig9(s1.stddev());
                if (two) {
                    const auto s2 = std::find_if(samples2.begin(), samples2.end(),
                                                 [&](const stats::SlotSample& s) {
                                                     return s.slot_index == s1.slot_index;
                                                 });
                    if (s2 != samples2.end()) {
                        tables << ',' << fmt_sig9(s2->mean()) << ',' << fmt_sig9(s2->stddev())
                               << ','
                               << (s2->mean() != 0.0 ? fmt_sig9(s1.mean() / s2->mean())
                                                     : std::string{});
                    } else {
                        tables << ",,,";
                    }
                }
                tables << '\n';
            }

            // per-condition batteries
            auto emit_battery = [&](const std::string& cond,
                                    std::span<const stats::SlotSample> samples) {
                if (samples.size() < 2) return;
                for (const auto& s : samples)
                    if (s.values.size() < 2) return;
                const auto battery = stats::slot_battery(samples, options.mode,
                                                         options.df_convention, options.alpha);
                auto emit = [&](const char* cmp_name, const stats::SlotComparison& cmp) {
                    ttests << cond << ',' << station_name(st) << ',' << est << ',' << cmp_name
                           << ',' << cmp.slot << ',' << ttest_csv_fields(cmp.test);
                    if (cmp.paper)
                        ttests << ',' << ttest_csv_fields(*cmp.paper);
                    else
                        ttests << ",,,,";
                    ttests << '\n';
                };
                for (const auto& cmp : battery.vs_first) emit("vs_slot1", cmp);
                for (const auto& cmp : battery.vs_pooled) emit("vs_pooled", cmp);
                answers["per_condition"][cond].push_back(
                    {{"station", station_name(st)},
                     {"estimator", est},
                     {"slot1_slot3_overlap", battery.answers.slot1_slot3_overlap},
                     {"slot1_tail_avg_overlap", battery.answers.slot1_tail_avg_overlap},
                     {"slope_head_tail_overlap", battery.answers.slope_head_tail_overlap}});
            };
            emit_battery(cond1, samples1);
            if (!samples2.empty()) emit_battery(cond2, samples2);

            if (two && !samples2.empty()) {
                // pooled comparison across both conditions (each slot against
                // the union of all slots of both)
                std::vector<stats::SlotSample> combined = samples1;
                combined.insert(combined.end(), samples2.begin(), samples2.end());
                bool usable = combined.size() >= 2;
                for (const auto& s : combined)
                    if (s.values.size() < 2) usable = false;
                if (usable) {
                    const auto pooled = stats::compare_each_to_pool(
                        combined, options.mode, options.df_convention, options.alpha);
                    for (std::size_t i = 0; i < pooled.size(); ++i) {
                        const std::string cond = i < samples1.size() ? cond1 : cond2;
                        ttests << cond << ',' << station_name(st) << ',' << est
                               << ",vs_pooled_both," << pooled[i].slot << ','
                               << ttest_csv_fields(pooled[i].test);
                        if (pooled[i].paper)
                            ttests << ',' << ttest_csv_fields(*pooled[i].paper);
                        else
                            ttests << ",,,,";
                        ttests << '\n';
                    }
                    answers["cross_condition"].push_back(
                        {{"station", station_name(st)},
                         {"estimator", est},
                         {"slopes_all_slots_overlap",
                          stats::slopes_overlap_across(samples1, samples2)}});
                }
            }
        }
    }

    Report report;
    report.tables_csv = tables.str();
    report.ttests_csv = ttests.str();
    report.answers_json = answers.dump(2) + "\n";
    return report;
}

} // namespace bellpulse::pipeline
