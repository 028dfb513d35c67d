#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bellpulse/pipeline.hpp"
#include "bellpulse/rng.hpp"

using namespace bellpulse;
using namespace bellpulse::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path temp_dir(const char* name) {
    const auto dir = fs::temp_directory_path() / "bellpulse_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string file_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

PipelineConfig small_config() {
    PipelineConfig cfg = default_config();
    cfg.experiment.n_pulses_per_run = 40000;
    cfg.experiment.pair_yield_per_pulse = 0.1;
    cfg.experiment.seed = 99;
    cfg.experiment.write_ground_truth = false;
    return cfg;
}

} // namespace

TEST_CASE("slot spec parser") {
    const auto sc = parse_slot_spec("5x100", 500.0);
    CHECK(sc.n_slots == 5);
    CHECK(sc.slot_width_ns == 100.0);
    CHECK_THROWS_AS(parse_slot_spec("5x90", 500.0), ConfigError);
    CHECK_THROWS_AS(parse_slot_spec("garbage", 500.0), ConfigError);
    CHECK_THROWS_AS(parse_slot_spec("x100", 500.0), ConfigError);
    CHECK(parse_slot_spec("10x50", 500.0).label() == "10x50");
}

TEST_CASE("config JSON round trip") {
    const auto cfg = default_config();
    const auto text = config_to_json(cfg);
    const auto back = parse_config_json(text);
    CHECK(config_to_json(back) == text);
    CHECK(back.analysis.slot_configs.size() == 2);
    CHECK(back.experiment.seed == cfg.experiment.seed);
}

TEST_CASE("mismatched slot config is rejected before any work") {
    const std::string bad = R"({
        "experiment": {"pulse_duration_ns": 500.0},
        "analysis": {"slot_configs": ["5x90"]}
    })";
    CHECK_THROWS_AS(parse_config_json(bad), ConfigError);

    const std::string bad_model = R"({"experiment": {"source_model": "telepathy"}})";
    CHECK_THROWS_AS(parse_config_json(bad_model), ConfigError);

    CHECK_THROWS_AS(parse_config_json("not json at all"), ConfigError);
}

TEST_CASE("full pipeline smoke run produces every artifact") {
    const auto cfg = small_config();
    const auto dir = temp_dir("pipe_smoke");
    const auto result = run_full_pipeline(cfg, dir);

    CHECK(fs::exists(dir / "summary.json"));
    CHECK(fs::exists(dir / "coincidences.csv"));
    CHECK(fs::exists(dir / "chsh_5x100.csv"));
    CHECK(fs::exists(dir / "chsh_10x50.csv"));
    CHECK(fs::exists(dir / "series_5x100.json"));
    CHECK(fs::exists(dir / "values_5x100.csv"));
    CHECK(fs::exists(dir / "randomness_5x100.csv"));
    CHECK(fs::exists(dir / "ttest_5x100.csv"));
    CHECK(fs::exists(dir / "data" / "manifest.json"));

    const auto summary = json::parse(result.summary);
    CHECK(summary.contains("runs"));
    CHECK(summary.contains("slot_configs"));
    REQUIRE(summary["slot_configs"].contains("5x100"));
    const auto& five = summary["slot_configs"]["5x100"];
    REQUIRE(five.contains("chsh"));
    CHECK(five["chsh"]["per_slot"].size() == 5);
    CHECK(five["randomness"].size() == 10); // 2 stations x 5 slots
    CHECK(!five["ttests"].empty());
    CHECK(!five["answers"].empty());

    // the four canonical legs at modest statistics still violate the local bound
    const double s_avg = five["chsh"]["time_avg"].get<double>();
    CHECK(s_avg > 2.4);
    CHECK(s_avg < 2.9);

    // analysis object mirrors the files
    REQUIRE(result.analysis.per_slot_config.size() == 2);
    CHECK(result.analysis.per_slot_config[0].chsh.has_value());
    CHECK(result.analysis.runs.size() == 4);
}

TEST_CASE("pipeline config errors abort before writing anything") {
    auto cfg = small_config();
    cfg.analysis.slot_configs = {SlotConfig{5, 90.0, 450.0}};
    const auto dir = fs::temp_directory_path() / "bellpulse_tests" / "pipe_bad";
    fs::remove_all(dir);
    CHECK_THROWS_AS(run_full_pipeline(cfg, dir), ConfigError);
    CHECK(!fs::exists(dir));
}

TEST_CASE("golden seed: repeated pipeline runs are byte-identical") {
    auto cfg = small_config();
    cfg.experiment.n_pulses_per_run = 20000;
    cfg.experiment.runs = {{0.0, 22.5}, {45.0, 22.5}};
    const auto d1 = temp_dir("pipe_gold1");
    const auto d2 = temp_dir("pipe_gold2");
    run_full_pipeline(cfg, d1);
    run_full_pipeline(cfg, d2);
    CHECK(file_text(d1 / "summary.json") == file_text(d2 / "summary.json"));
    for (const char* f : {"coincidences.csv", "values_5x100.csv", "randomness_10x50.csv"})
        CHECK(file_text(d1 / f) == file_text(d2 / f));
}

TEST_CASE("series and values files round trip") {
    const auto dir = temp_dir("files");

    SlotConfigAnalysis sca;
    sca.slots = SlotConfig{5, 100.0, 500.0};
    SlotSeries s1{Station::Alice, "r1", 0, {1, 0, 1, 1}};
    SlotSeries s2{Station::Bob, "r1", 4, {0, 0}};
    sca.series = {s1, s2};
    write_series_json(dir / "series.json", sca, "24m");
    const auto back = read_series_json(dir / "series.json");
    CHECK(back.condition == "24m");
    CHECK(back.slot_label == "5x100");
    REQUIRE(back.series.size() == 2);
    CHECK(back.series[0].bits == s1.bits);
    CHECK(back.series[1].station == Station::Bob);
    CHECK(back.series[1].slot_index == 4);

    std::vector<SeriesValue> values{{"r1", Station::Alice, 0, 4, 0.81, 0.92},
                                    {"r1", Station::Bob, 4, 2, 1.0, 0.5}};
    write_values_csv(dir / "values.csv", values, "24m");
    const auto rows = read_values_csv(dir / "values.csv");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].condition == "24m");
    CHECK(rows[0].hm == doctest::Approx(0.81));
    CHECK(rows[1].station == Station::Bob);
    CHECK(rows[1].n_bits == 2);
}

TEST_CASE("report over two conditions answers the overlap questions") {
    Rng rng(12321);
    auto make_rows = [&](const std::string& cond, double level) {
        std::vector<ValuesRow> rows;
        for (int run = 0; run < 10; ++run)
            for (int slot = 0; slot < 10; ++slot)
                for (Station st : {Station::Alice, Station::Bob})
                    rows.push_back({cond, "r" + std::to_string(run), st, slot, 3000,
                                    level + rng.gaussian(0.0, 0.01),
                                    0.9 + rng.gaussian(0.0, 0.01)});
        return rows;
    };
    const auto rows24 = make_rows("24m", 0.78);
    const auto rows15 = make_rows("1.5m", 0.84);

    const auto report = build_report(rows24, rows15, {});
    CHECK(report.tables_csv.find("mean_24m") != std::string::npos);
    CHECK(report.tables_csv.find("ratio") != std::string::npos);
    CHECK(report.ttests_csv.find("vs_pooled_both") != std::string::npos);

    const auto answers = json::parse(report.answers_json);
    REQUIRE(answers.contains("cross_condition"));
    CHECK(answers["cross_condition"].size() == 4); // 2 stations x 2 estimators
    for (const auto& a : answers["cross_condition"])
        CHECK(a["slopes_all_slots_overlap"].get<bool>());
    CHECK(answers["per_condition"].contains("24m"));
    CHECK(answers["per_condition"]["24m"].size() == 4);

    CHECK_THROWS_AS(build_report({}, rows15, {}), DataError);
}
