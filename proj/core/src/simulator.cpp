#include "bellpulse/simulator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bellpulse/errors.hpp"
#include "bellpulse/ingest.hpp"

namespace bellpulse::simulator {
namespace {

constexpr double kOriginMarginNs = 10000.0; // first pulse starts here
constexpr double kDegToRad = M_PI / 180.0;

std::uint64_t to_ps(double t_ns) {
    const long long v = std::llround(t_ns * 1e3);
    return v > 0 ? static_cast<std::uint64_t>(v) : 0;
}

double bob_clock_ns(const ClockConfig& clock, double t_true_ns) {
    return (1.0 + clock.rate_offset_ppm * 1e-6) * t_true_ns + clock.offset_ns;
}

double arm_efficiency(const DetectorConfig& det, std::uint8_t outcome) {
    const double f = outcome ? 1.0 + det.outcome_bias : 1.0 - det.outcome_bias;
    return std::clamp(det.efficiency * f, 0.0, 1.0);
}

} // namespace

bell::ChshSchedule ChshAngles::schedule() const {
    bell::ChshSchedule s;
    s.ab = {a, b};
    s.ab_prime = {a, b_prime};
    s.a_prime_b = {a_prime, b};
    s.a_prime_b_prime = {a_prime, b_prime};
    return s;
}

void ExperimentConfig::validate() const {
    if (!(pulse_duration_ns > 0.0))
        throw ConfigError("experiment: pulse_duration_ns must be positive");
    if (!(repetition_rate_hz > 0.0))
        throw ConfigError("experiment: repetition_rate_hz must be positive");
    if (n_pulses_per_run == 0 && !(duration_s > 0.0))
        throw ConfigError("experiment: need n_pulses_per_run or positive duration_s");
    if (pair_yield_per_pulse < 0.0 || pair_yield_per_pulse > 1.0)
        throw ConfigError("experiment: pair_yield_per_pulse must be in [0, 1]");
    if (visibility < 0.0 || visibility > 1.0)
        throw ConfigError("experiment: visibility must be in [0, 1]");
    for (const auto& [name, det] :
         {std::pair{"detector_a", &detector_a}, std::pair{"detector_b", &detector_b}}) {
        if (det->efficiency < 0.0 || det->efficiency > 1.0)
            throw ConfigError(std::string("experiment: ") + name + ".efficiency out of [0, 1]");
        if (std::fabs(det->outcome_bias) > 1.0)
            throw ConfigError(std::string("experiment: ") + name + ".outcome_bias out of [-1, 1]");
        if (det->efficiency * (1.0 + std::fabs(det->outcome_bias)) > 1.0 + 1e-12)
            throw ConfigError(std::string("experiment: ") + name +
                              ": efficiency*(1+|bias|) exceeds 1");
        if (det->jitter_sigma_ns < 0.0 || det->dark_rate_hz < 0.0)
            throw ConfigError(std::string("experiment: ") + name + ": negative noise parameter");
    }
    if (trigger_jitter_ns < 0.0)
        throw ConfigError("experiment: trigger_jitter_ns must be >= 0");
    if (trigger_delay_ns < 0.0)
        throw ConfigError("experiment: trigger_delay_ns must be >= 0");
    if (clock_b.offset_ns < -kOriginMarginNs / 2.0)
        throw ConfigError("experiment: clock_b.offset_ns too negative");

    double max_rate = repetition_rate_hz;
    for (const auto& b : modulation.blocks) {
        if (!(b.rate_hz > 0.0) || b.length_pulses < 1)
            throw ConfigError("experiment: invalid modulation block");
        max_rate = std::max(max_rate, b.rate_hz);
    }
    if (1e9 / max_rate <= pulse_duration_ns)
        throw ConfigError("experiment: pulse period must exceed pulse duration");
    if (source_model == SourceModel::non_ergodic) {
        if (forbidden_string.empty() || forbidden_string.size() > 12)
            throw ConfigError("experiment: non_ergodic needs a forbidden string of length 1..12");
    }
}

double ExperimentConfig::mean_period_ns() const {
    if (modulation.empty()) return 1e9 / repetition_rate_hz;
    double t = 0.0;
    std::uint64_t n = 0;
    for (const auto& b : modulation.blocks) {
        t += static_cast<double>(b.length_pulses) * (1e9 / b.rate_hz);
        n += b.length_pulses;
    }
    return t / static_cast<double>(n);
}

std::uint64_t ExperimentConfig::pulses_per_run() const {
    if (n_pulses_per_run > 0) return n_pulses_per_run;
    return static_cast<std::uint64_t>(std::llround(duration_s * 1e9 / mean_period_ns()));
}

std::vector<SettingPair> ExperimentConfig::run_settings() const {
    if (!runs.empty()) return runs;
    const auto legs = angles.schedule().legs();
    return {legs.begin(), legs.end()};
}

PulseTrain generate_pulse_train(const ExperimentConfig& cfg, std::uint64_t n_pulses, Rng& rng) {
    PulseTrain train;
    train.start_true_ns.reserve(n_pulses);
    train.alice_triggers.reserve(n_pulses);
    train.bob_triggers.reserve(n_pulses);

    // period of pulse i from the cyclic pattern
    std::vector<double> periods;
    std::vector<std::uint32_t> lengths;
    if (cfg.modulation.empty()) {
        periods = {1e9 / cfg.repetition_rate_hz};
        lengths = {1};
    } else {
        for (const auto& b : cfg.modulation.blocks) {
            periods.push_back(1e9 / b.rate_hz);
            lengths.push_back(b.length_pulses);
        }
    }

    double t = kOriginMarginNs;
    std::size_t block = 0;
    std::uint32_t in_block = 0;
    for (std::uint64_t i = 0; i < n_pulses; ++i) {
        train.start_true_ns.push_back(t);
        const double trig_true = t + cfg.trigger_delay_ns;
        const double ja = cfg.trigger_jitter_ns > 0.0 ? rng.gaussian(0.0, cfg.trigger_jitter_ns) : 0.0;
        const double jb = cfg.trigger_jitter_ns > 0.0 ? rng.gaussian(0.0, cfg.trigger_jitter_ns) : 0.0;
        train.alice_triggers.push_back({to_ps(trig_true + ja), Channel::Trigger});
        train.bob_triggers.push_back(
            {to_ps(bob_clock_ns(cfg.clock_b, trig_true + jb)), Channel::Trigger});

        t += periods[block];
        if (++in_block >= lengths[block]) {
            in_block = 0;
            block = (block + 1) % periods.size();
        }
    }
    return train;
}

std::pair<std::uint8_t, std::uint8_t> sample_joint_outcome(const SettingPair& settings,
                                                           SourceModel model,
                                                           double visibility, Rng& rng) {
    switch (model) {
    case SourceModel::qm: {
        const std::uint8_t a = rng.bernoulli(0.5) ? 1 : 0;
        const double c = std::cos(2.0 * (settings.alpha_deg - settings.beta_deg) * kDegToRad);
        const double p_same = 0.5 * (1.0 + visibility * c);
        const std::uint8_t b = rng.bernoulli(p_same) ? a : static_cast<std::uint8_t>(1 - a);
        return {a, b};
    }
    case SourceModel::local_deterministic: {
        const double lambda = rng.uniform(0.0, M_PI);
        const double sa = std::cos(2.0 * (settings.alpha_deg * kDegToRad - lambda));
        const double sb = std::cos(2.0 * (settings.beta_deg * kDegToRad - lambda));
        return {sa >= 0.0 ? std::uint8_t{1} : std::uint8_t{0},
                sb >= 0.0 ? std::uint8_t{1} : std::uint8_t{0}};
    }
    case SourceModel::non_ergodic:
        throw ConfigError("sample_joint_outcome: non_ergodic outcomes are series-level, "
                          "use NonErgodicSampler");
    }
    throw ConfigError("sample_joint_outcome: unknown source model");
}

NonErgodicSampler::NonErgodicSampler(std::span<const std::uint8_t> forbidden)
    : NonErgodicSampler(std::vector<std::vector<std::uint8_t>>{
          std::vector<std::uint8_t>(forbidden.begin(), forbidden.end())}) {}

NonErgodicSampler::NonErgodicSampler(std::vector<std::vector<std::uint8_t>> forbidden) {
    for (auto& f : forbidden) {
        if (f.empty())
            throw ConfigError("NonErgodicSampler: forbidden string must be non-empty");
        if (f.size() > 12)
            throw ConfigError("NonErgodicSampler: forbidden string longer than 12");
        for (auto& b : f) b = b ? 1 : 0;
    }

    // trie over the forbidden strings
    struct Node {
        std::array<int, 2> child{-1, -1};
        int fail = 0;
        bool terminal = false;
    };
    std::vector<Node> trie(1);
    for (const auto& f : forbidden) {
        int cur = 0;
        for (std::uint8_t bit : f) {
            if (trie[static_cast<std::size_t>(cur)].child[bit] < 0) {
                trie[static_cast<std::size_t>(cur)].child[bit] = static_cast<int>(trie.size());
                trie.emplace_back();
            }
            cur = trie[static_cast<std::size_t>(cur)].child[bit];
        }
        trie[static_cast<std::size_t>(cur)].terminal = true;
    }

    // breadth-first failure links (Aho-Corasick), goto-complete transitions
    std::vector<int> order;
    order.reserve(trie.size());
    for (int bit = 0; bit < 2; ++bit) {
        int& c = trie[0].child[static_cast<std::size_t>(bit)];
        if (c < 0)
            c = 0;
        else {
            trie[static_cast<std::size_t>(c)].fail = 0;
            order.push_back(c);
        }
    }
    for (std::size_t qi = 0; qi < order.size(); ++qi) {
        const int u = order[qi];
        if (trie[static_cast<std::size_t>(trie[static_cast<std::size_t>(u)].fail)].terminal)
            trie[static_cast<std::size_t>(u)].terminal = true;
        for (int bit = 0; bit < 2; ++bit) {
            int& c = trie[static_cast<std::size_t>(u)].child[static_cast<std::size_t>(bit)];
            const int via_fail =
                trie[static_cast<std::size_t>(trie[static_cast<std::size_t>(u)].fail)]
                    .child[static_cast<std::size_t>(bit)];
            if (c < 0)
                c = via_fail;
            else {
                trie[static_cast<std::size_t>(c)].fail = via_fail;
                order.push_back(c);
            }
        }
    }

    next_state_.resize(trie.size());
    dead_.assign(trie.size(), false);
    for (std::size_t i = 0; i < trie.size(); ++i) {
        next_state_[i] = trie[i].child;
        dead_[i] = trie[i].terminal;
    }
    // a state whose both continuations are dead is dead itself
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < next_state_.size(); ++i) {
            if (dead_[i]) continue;
            if (dead_[static_cast<std::size_t>(next_state_[i][0])] &&
                dead_[static_cast<std::size_t>(next_state_[i][1])]) {
                dead_[i] = true;
                changed = true;
            }
        }
    }
    if (dead_[0])
        throw DataError("NonErgodicSampler: forbidden set blocks every series");
}

std::uint8_t NonErgodicSampler::next(Rng& rng) {
    std::uint8_t bit = rng.bernoulli(0.5) ? 1 : 0;
    if (dead_[static_cast<std::size_t>(next_state_[static_cast<std::size_t>(state_)][bit])])
        bit = static_cast<std::uint8_t>(1 - bit);
    state_ = next_state_[static_cast<std::size_t>(state_)][bit];
    return bit;
}

std::vector<std::uint8_t> sample_nonergodic_series(std::size_t length,
                                                   std::span<const std::uint8_t> forbidden,
                                                   Rng& rng) {
    std::vector<std::uint8_t> out;
    out.reserve(length);
    if (forbidden.empty()) {
        for (std::size_t i = 0; i < length; ++i) out.push_back(rng.bernoulli(0.5) ? 1 : 0);
        return out;
    }
    NonErgodicSampler sampler(forbidden);
    for (std::size_t i = 0; i < length; ++i) out.push_back(sampler.next(rng));
    return out;
}

std::vector<std::uint8_t> simulate_detected_series(std::size_t n_bits, SourceModel model,
                                                   double visibility,
                                                   const SettingPair& settings,
                                                   double outcome_bias, Rng& rng) {
    DetectorConfig det;
    det.outcome_bias = outcome_bias;
    det.efficiency = 1.0 / (1.0 + std::fabs(outcome_bias)); // keep both arms <= 1
    std::vector<std::uint8_t> out;
    out.reserve(n_bits);
    while (out.size() < n_bits) {
        const auto [a, b] = sample_joint_outcome(settings, model, visibility, rng);
        (void)b;
        if (rng.bernoulli(arm_efficiency(det, a))) out.push_back(a);
    }
    return out;
}

SimulationOutput run_experiment(const ExperimentConfig& cfg,
                                const std::filesystem::path& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);

    const auto settings_list = cfg.run_settings();
    const std::uint64_t n_pulses = cfg.pulses_per_run();
    const Rng root(cfg.seed);

    SimulationOutput output;
    ingest::ExperimentManifest manifest;
    manifest.condition = cfg.condition;

    const bool nonergodic = cfg.source_model == SourceModel::non_ergodic;
    const SlotConfig truth_slots{5, cfg.pulse_duration_ns / 5.0, cfg.pulse_duration_ns};

    for (std::size_t run_idx = 0; run_idx < settings_list.size(); ++run_idx) {
        Rng rng_run = root.split(run_idx);
        Rng rng_train = rng_run.split(0);
        Rng rng_phys = rng_run.split(1);
        Rng rng_dark_a = rng_run.split(2);
        Rng rng_dark_b = rng_run.split(3);

        char run_name[32];
        std::snprintf(run_name, sizeof(run_name), "run%03zu", run_idx);

        RunTruth truth;
        truth.run_id = run_name;
        truth.settings = settings_list[run_idx];
        truth.n_pulses = n_pulses;

        PulseTrain train = generate_pulse_train(cfg, n_pulses, rng_train);
        TimeTagStream alice = std::move(train.alice_triggers);
        TimeTagStream bob = std::move(train.bob_triggers);

        // non-ergodic structure is injected per (station, slot) series
        std::vector<NonErgodicSampler> ne_a, ne_b;
        if (nonergodic) {
            for (int s = 0; s < truth_slots.n_slots; ++s) {
                ne_a.emplace_back(std::span<const std::uint8_t>(cfg.forbidden_string));
                ne_b.emplace_back(std::span<const std::uint8_t>(cfg.forbidden_string));
            }
        }

        for (std::uint64_t i = 0; i < n_pulses; ++i) {
            if (!rng_phys.bernoulli(cfg.pair_yield_per_pulse)) continue;
            ++truth.emitted_pairs;

            const double u = rng_phys.uniform(0.0, cfg.pulse_duration_ns);
            std::uint8_t oa, ob;
            if (nonergodic) {
                int slot = slot_of(u, truth_slots);
                if (slot == kOutOfPulse) slot = 0;
                oa = ne_a[static_cast<std::size_t>(slot)].next(rng_phys);
                ob = ne_b[static_cast<std::size_t>(slot)].next(rng_phys);
            } else {
                std::tie(oa, ob) = sample_joint_outcome(settings_list[run_idx],
                                                        cfg.source_model, cfg.visibility,
                                                        rng_phys);
            }

            const bool det_a = rng_phys.bernoulli(arm_efficiency(cfg.detector_a, oa));
            const bool det_b = rng_phys.bernoulli(arm_efficiency(cfg.detector_b, ob));
            const double t_emit = train.start_true_ns[i] + u;
            double off_a = 0.0, off_b = 0.0;
            if (det_a) {
                const double j = cfg.detector_a.jitter_sigma_ns > 0.0
                                     ? rng_phys.gaussian(0.0, cfg.detector_a.jitter_sigma_ns)
                                     : 0.0;
                const std::uint64_t ts = to_ps(t_emit + j);
                // the offset the analysis will reconstruct from this record
                off_a = static_cast<double>(ts) * 1e-3 -
                        (static_cast<double>(alice[i].time_ps) * 1e-3 - cfg.trigger_delay_ns);
                alice.push_back({ts, oa ? Channel::Out1 : Channel::Out0});
            }
            if (det_b) {
                const double j = cfg.detector_b.jitter_sigma_ns > 0.0
                                     ? rng_phys.gaussian(0.0, cfg.detector_b.jitter_sigma_ns)
                                     : 0.0;
                const std::uint64_t ts = to_ps(bob_clock_ns(cfg.clock_b, t_emit + j));
                off_b = static_cast<double>(ts) * 1e-3 -
                        (static_cast<double>(bob[i].time_ps) * 1e-3 - cfg.trigger_delay_ns);
                bob.push_back({ts, ob ? Channel::Out1 : Channel::Out0});
            }
            if (det_a && det_b) {
                const bool matchable = off_a >= 0.0 && off_a < cfg.pulse_duration_ns &&
                                       off_b >= 0.0 && off_b < cfg.pulse_duration_ns;
                truth.detected_pairs.push_back(
                    {static_cast<std::int64_t>(i), oa, ob, off_a, off_b, matchable});
            }
        }

        // uniform dark counts on both outcome channels across the whole span
        const double span_ns = train.start_true_ns.back() + cfg.mean_period_ns();
        for (auto [stream, rng_dark, is_bob] :
             {std::tuple{&alice, &rng_dark_a, false}, std::tuple{&bob, &rng_dark_b, true}}) {
            const DetectorConfig& det = is_bob ? cfg.detector_b : cfg.detector_a;
            for (Channel ch : {Channel::Out1, Channel::Out0}) {
                const std::uint64_t n_dark = rng_dark->poisson(det.dark_rate_hz * span_ns * 1e-9);
                for (std::uint64_t k = 0; k < n_dark; ++k) {
                    const double t_true = rng_dark->uniform(0.0, span_ns);
                    const double t_loc = is_bob ? bob_clock_ns(cfg.clock_b, t_true) : t_true;
                    stream->push_back({to_ps(t_loc), ch});
                }
            }
        }

        auto by_time = [](const TimeTagRecord& x, const TimeTagRecord& y) {
            if (x.time_ps != y.time_ps) return x.time_ps < y.time_ps;
            return static_cast<std::uint8_t>(x.channel) < static_cast<std::uint8_t>(y.channel);
        };
        std::sort(alice.begin(), alice.end(), by_time);
        std::sort(bob.begin(), bob.end(), by_time);

        ingest::RunManifest rm;
        rm.run_id = run_name;
        rm.duration_s = static_cast<double>(n_pulses) * cfg.mean_period_ns() * 1e-9;
        rm.settings = settings_list[run_idx];
        rm.alice_file = std::string(run_name) + "_alice.btt";
        rm.bob_file = std::string(run_name) + "_bob.btt";
        ingest::write_timetag_file(out_dir / rm.alice_file, alice);
        ingest::write_timetag_file(out_dir / rm.bob_file, bob);
        manifest.runs.push_back(rm);
        output.truth.runs.push_back(std::move(truth));
    }

    output.manifest_path = out_dir / "manifest.json";
    ingest::write_manifest(output.manifest_path, manifest);

    if (cfg.write_ground_truth) {
        nlohmann::json j;
        j["seed"] = cfg.seed;
        j["runs"] = nlohmann::json::array();
        for (const auto& rt : output.truth.runs) {
            nlohmann::json jr;
            jr["run_id"] = rt.run_id;
            jr["alpha_deg"] = rt.settings.alpha_deg;
            jr["beta_deg"] = rt.settings.beta_deg;
            jr["n_pulses"] = rt.n_pulses;
            jr["emitted_pairs"] = rt.emitted_pairs;
            jr["detected_pairs"] = nlohmann::json::array();
            for (const auto& p : rt.detected_pairs)
                jr["detected_pairs"].push_back({{"pulse", p.pulse_index},
                                                {"a", p.outcome_a},
                                                {"b", p.outcome_b},
                                                {"offset_a_ns", p.offset_a_ns},
                                                {"offset_b_ns", p.offset_b_ns},
                                                {"matchable", p.matchable}});
            j["runs"].push_back(std::move(jr));
        }
        output.ground_truth_path = out_dir / "ground_truth.json";
        std::ofstream out(output.ground_truth_path, std::ios::trunc);
        if (!out)
            throw DataError("cannot write ground truth sidecar");
        out << j.dump() << '\n';
    }
    return output;
}

} // namespace bellpulse::simulator
