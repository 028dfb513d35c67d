#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bellpulse/types.hpp"

namespace bellpulse::coincidence {

/// Joint-outcome counts at one setting pair: ++, --, +-, -+ where "+" is
/// outcome 1 (transmitted) and "-" outcome 0 (reflected).
struct CoincidenceCounts {
    std::uint64_t c_pp = 0;
    std::uint64_t c_mm = 0;
    std::uint64_t c_pm = 0;
    std::uint64_t c_mp = 0;

    std::uint64_t total() const { return c_pp + c_mm + c_pm + c_mp; }

    CoincidenceCounts& operator+=(const CoincidenceCounts& o) {
        c_pp += o.c_pp;
        c_mm += o.c_mm;
        c_pm += o.c_pm;
        c_mp += o.c_mp;
        return *this;
    }

    friend bool operator==(const CoincidenceCounts&, const CoincidenceCounts&) = default;
};

struct MatchDiagnostics {
    std::uint64_t ambiguous_pulses_a = 0; // both outcome channels fired at Alice
    std::uint64_t ambiguous_pulses_b = 0;
    std::uint64_t unmatched_a = 0; // in-pulse detections left unpaired
    std::uint64_t unmatched_b = 0;
};

/// Matches the two stations' detection events into coincidences: a pair needs
/// an identical pulse_index and |offset_a - offset_b| <= window_ns. Within a
/// pulse, matching is greedy by smallest offset difference and no detection is
/// used twice. A station-pulse where both outcome channels fired is discarded
/// as ambiguous (tallied in the diagnostics). Out-of-pulse events never match.
/// Both inputs must be sorted by pulse_index.
std::vector<CoincidenceRecord> find_coincidences(std::span<const DetectionEvent> events_a,
                                                 std::span<const DetectionEvent> events_b,
                                                 double window_ns, const SettingPair& settings,
                                                 MatchDiagnostics* diag = nullptr);

/// Key for grouping records by analyzer settings (angles folded mod 180 and
/// rounded to 1e-6 deg).
struct SettingKey {
    std::int64_t alpha_micro_deg = 0;
    std::int64_t beta_micro_deg = 0;

    static SettingKey from(const SettingPair& s);
    SettingPair as_pair() const;

    auto operator<=>(const SettingKey&) const = default;
};

/// Per (setting pair, slot) joint-outcome counts. Each value vector has
/// cfg.n_slots entries; records whose slot time falls outside the pulse are
/// dropped (they cannot be slotted).
std::map<SettingKey, std::vector<CoincidenceCounts>> classify_counts(
    std::span<const CoincidenceRecord> records, const SlotConfig& cfg);

/// Expected chance coincidences between two uncorrelated streams:
/// rate_a * rate_b * window * duration, window_ns being the full width of the
/// acceptance window.
double expected_accidentals(double rate_a_hz, double rate_b_hz, double window_ns,
                            double duration_s);

/// Splits one run's records into the per-station, per-slot binary outcome
/// series (ordered by pulse index). Result is indexed [station][slot].
std::vector<SlotSeries> build_slot_series(std::span<const CoincidenceRecord> records,
                                          const SlotConfig& cfg, const std::string& run_id);

} // namespace bellpulse::coincidence
