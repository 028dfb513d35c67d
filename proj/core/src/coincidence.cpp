#include "bellpulse/coincidence.hpp"

#include <algorithm>
#include <cmath>

#include "bellpulse/errors.hpp"

namespace bellpulse::coincidence {
namespace {

struct PulseGroup {
    std::size_t begin = 0;
    std::size_t end = 0; // half-open
};

// Advance over one pulse's worth of in-pulse events starting at `pos`.
PulseGroup next_group(std::span<const DetectionEvent> events, std::size_t pos,
                      std::int64_t pulse) {
    PulseGroup g{pos, pos};
    while (g.end < events.size() && events[g.end].pulse_index == pulse) ++g.end;
    return g;
}

bool group_is_ambiguous(std::span<const DetectionEvent> events, const PulseGroup& g) {
    bool saw0 = false, saw1 = false;
    for (std::size_t i = g.begin; i < g.end; ++i) {
        if (!events[i].in_pulse) continue;
        (events[i].outcome ? saw1 : saw0) = true;
    }
    return saw0 && saw1;
}

} // namespace

std::vector<CoincidenceRecord> find_coincidences(std::span<const DetectionEvent> events_a,
                                                 std::span<const DetectionEvent> events_b,
                                                 double window_ns, const SettingPair& settings,
                                                 MatchDiagnostics* diag) {
    if (!(window_ns > 0.0))
        throw ConfigError("find_coincidences: window_ns must be positive");

    MatchDiagnostics local;
    std::vector<CoincidenceRecord> out;

    std::size_t ia = 0, ib = 0;
    while (ia < events_a.size() && ib < events_b.size()) {
        const std::int64_t pa = events_a[ia].pulse_index;
        const std::int64_t pb = events_b[ib].pulse_index;
        if (pa < pb) {
            if (events_a[ia].in_pulse) ++local.unmatched_a;
            ++ia;
            continue;
        }
        if (pb < pa) {
            if (events_b[ib].in_pulse) ++local.unmatched_b;
            ++ib;
            continue;
        }

        const PulseGroup ga = next_group(events_a, ia, pa);
        const PulseGroup gb = next_group(events_b, ib, pb);
        ia = ga.end;
        ib = gb.end;

        const bool amb_a = group_is_ambiguous(events_a, ga);
        const bool amb_b = group_is_ambiguous(events_b, gb);
        if (amb_a) ++local.ambiguous_pulses_a;
        if (amb_b) ++local.ambiguous_pulses_b;
        if (amb_a || amb_b) {
            for (std::size_t i = ga.begin; i < ga.end; ++i)
                if (events_a[i].in_pulse) ++local.unmatched_a;
            for (std::size_t i = gb.begin; i < gb.end; ++i)
                if (events_b[i].in_pulse) ++local.unmatched_b;
            continue;
        }

        // candidate pairs within the window, greedy by |offset difference|
        struct Candidate {
            double delta;
            std::size_t i, j;
        };
        std::vector<Candidate> cands;
        for (std::size_t i = ga.begin; i < ga.end; ++i) {
            if (!events_a[i].in_pulse) continue;
            for (std::size_t j = gb.begin; j < gb.end; ++j) {
                if (!events_b[j].in_pulse) continue;
                const double d = std::fabs(events_a[i].offset_ns - events_b[j].offset_ns);
                if (d <= window_ns) cands.push_back({d, i, j});
            }
        }
        std::sort(cands.begin(), cands.end(), [&](const Candidate& x, const Candidate& y) {
            if (x.delta != y.delta) return x.delta < y.delta;
            if (events_a[x.i].offset_ns != events_a[y.i].offset_ns)
                return events_a[x.i].offset_ns < events_a[y.i].offset_ns;
            return events_b[x.j].offset_ns < events_b[y.j].offset_ns;
        });

        std::vector<std::size_t> used_a, used_b;
        for (const auto& c : cands) {
            if (std::find(used_a.begin(), used_a.end(), c.i) != used_a.end()) continue;
            if (std::find(used_b.begin(), used_b.end(), c.j) != used_b.end()) continue;
            used_a.push_back(c.i);
            used_b.push_back(c.j);
            CoincidenceRecord rec;
            rec.pulse_index = pa;
            rec.offset_ns = 0.5 * (events_a[c.i].offset_ns + events_b[c.j].offset_ns);
            rec.outcome_a = events_a[c.i].outcome;
            rec.outcome_b = events_b[c.j].outcome;
            rec.settings = settings;
            out.push_back(rec);
        }
        for (std::size_t i = ga.begin; i < ga.end; ++i)
            if (events_a[i].in_pulse &&
                std::find(used_a.begin(), used_a.end(), i) == used_a.end())
                ++local.unmatched_a;
        for (std::size_t j = gb.begin; j < gb.end; ++j)
            if (events_b[j].in_pulse &&
                std::find(used_b.begin(), used_b.end(), j) == used_b.end())
                ++local.unmatched_b;
    }
    for (; ia < events_a.size(); ++ia)
        if (events_a[ia].in_pulse) ++local.unmatched_a;
    for (; ib < events_b.size(); ++ib)
        if (events_b[ib].in_pulse) ++local.unmatched_b;

    std::sort(out.begin(), out.end(), [](const CoincidenceRecord& x, const CoincidenceRecord& y) {
        if (x.pulse_index != y.pulse_index) return x.pulse_index < y.pulse_index;
        return x.offset_ns < y.offset_ns;
    });
    if (diag) *diag = local;
    return out;
}

SettingKey SettingKey::from(const SettingPair& s) {
    auto fold = [](double deg) {
        return static_cast<std::int64_t>(std::llround(normalize_angle_deg(deg) * 1e6)) %
               180000000;
    };
    return SettingKey{fold(s.alpha_deg), fold(s.beta_deg)};
}

SettingPair SettingKey::as_pair() const {
    return SettingPair{static_cast<double>(alpha_micro_deg) * 1e-6,
                       static_cast<double>(beta_micro_deg) * 1e-6};
}

std::map<SettingKey, std::vector<CoincidenceCounts>> classify_counts(
    std::span<const CoincidenceRecord> records, const SlotConfig& cfg) {
    cfg.validate();
    std::map<SettingKey, std::vector<CoincidenceCounts>> out;
    for (const auto& rec : records) {
        const int slot = slot_of(rec.offset_ns, cfg);
        if (slot == kOutOfPulse) continue;
        auto& per_slot = out[SettingKey::from(rec.settings)];
        if (per_slot.empty()) per_slot.resize(static_cast<std::size_t>(cfg.n_slots));
        auto& c = per_slot[static_cast<std::size_t>(slot)];
        if (rec.outcome_a && rec.outcome_b)
            ++c.c_pp;
        else if (!rec.outcome_a && !rec.outcome_b)
            ++c.c_mm;
        else if (rec.outcome_a && !rec.outcome_b)
            ++c.c_pm;
        else
            ++c.c_mp;
    }
    return out;
}

double expected_accidentals(double rate_a_hz, double rate_b_hz, double window_ns,
                            double duration_s) {
    if (rate_a_hz < 0.0 || rate_b_hz < 0.0 || window_ns < 0.0 || duration_s < 0.0)
        throw ConfigError("expected_accidentals: inputs must be non-negative");
    return rate_a_hz * rate_b_hz * (window_ns * 1e-9) * duration_s;
}

std::vector<SlotSeries> build_slot_series(std::span<const CoincidenceRecord> records,
                                          const SlotConfig& cfg, const std::string& run_id) {
    cfg.validate();
    std::vector<SlotSeries> series;
    series.reserve(2 * static_cast<std::size_t>(cfg.n_slots));
    for (Station st : {Station::Alice, Station::Bob})
        for (int s = 0; s < cfg.n_slots; ++s)
            series.push_back(SlotSeries{st, run_id, s, {}});

    for (const auto& rec : records) {
        const int slot = slot_of(rec.offset_ns, cfg);
        if (slot == kOutOfPulse) continue;
        series[static_cast<std::size_t>(slot)].bits.push_back(rec.outcome_a);
        series[static_cast<std::size_t>(cfg.n_slots + slot)].bits.push_back(rec.outcome_b);
    }
    return series;
}

} // namespace bellpulse::coincidence
