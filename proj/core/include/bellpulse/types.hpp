#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "bellpulse/errors.hpp"

namespace bellpulse {

/// Input channel of a time-to-digital converter. Out1 carries outcome "1",
/// Out0 carries outcome "0", Trigger carries the pulse start signal.
enum class Channel : std::uint8_t { Out1 = 1, Out0 = 2, Trigger = 3 };

enum class Station : std::uint8_t { Alice = 0, Bob = 1 };

inline const char* station_name(Station s) { return s == Station::Alice ? "alice" : "bob"; }

/// One raw event from a station's converter: integer picoseconds since the
/// stream origin plus the channel that fired.
struct TimeTagRecord {
    std::uint64_t time_ps = 0;
    Channel channel = Channel::Trigger;

    friend bool operator==(const TimeTagRecord&, const TimeTagRecord&) = default;
};

using TimeTagStream = std::vector<TimeTagRecord>;

/// A detection assigned to a numbered pulse. `offset_ns` is measured from the
/// pulse start; events with an offset outside [0, pulse_duration) are kept but
/// flagged out-of-pulse (dark counts, pre-first-pulse detections).
struct DetectionEvent {
    std::int64_t pulse_index = 0;
    double offset_ns = 0.0;
    std::uint8_t outcome = 0; // 1 <-> Channel::Out1, 0 <-> Channel::Out0
    Station station = Station::Alice;
    bool in_pulse = true;

    friend bool operator==(const DetectionEvent&, const DetectionEvent&) = default;
};

/// Analyzer settings of the two stations, degrees. Polarizers are symmetric
/// under 180 degree rotation, so angles compare modulo 180.
struct SettingPair {
    double alpha_deg = 0.0;
    double beta_deg = 0.0;

    friend bool operator==(const SettingPair&, const SettingPair&) = default;
};

/// Angle folded into [0, 180).
inline double normalize_angle_deg(double deg) {
    double a = std::fmod(deg, 180.0);
    if (a < 0.0) a += 180.0;
    return a;
}

inline bool same_setting(const SettingPair& x, const SettingPair& y, double tol_deg = 1e-6) {
    auto close = [tol_deg](double a, double b) {
        double d = std::fabs(normalize_angle_deg(a) - normalize_angle_deg(b));
        return d <= tol_deg || d >= 180.0 - tol_deg;
    };
    return close(x.alpha_deg, y.alpha_deg) && close(x.beta_deg, y.beta_deg);
}

/// A matched Alice/Bob detection pair. `offset_ns` is the slot-assignment
/// time: the mean of the two stations' offsets.
struct CoincidenceRecord {
    std::int64_t pulse_index = 0;
    double offset_ns = 0.0;
    std::uint8_t outcome_a = 0;
    std::uint8_t outcome_b = 0;
    SettingPair settings;

    friend bool operator==(const CoincidenceRecord&, const CoincidenceRecord&) = default;
};

/// Partition of the pulse duration into equal slots.
/// Invariant: n_slots * slot_width_ns == pulse_duration_ns.
struct SlotConfig {
    int n_slots = 5;
    double slot_width_ns = 100.0;
    double pulse_duration_ns = 500.0;

    void validate() const;
    std::string label() const; // e.g. "5x100"
};

inline constexpr int kOutOfPulse = -1;

/// Slot index of an intra-pulse offset; slots are the half-open intervals
/// [k*w, (k+1)*w). Offsets outside [0, pulse_duration) map to kOutOfPulse.
int slot_of(double offset_ns, const SlotConfig& cfg);

/// One binary outcome series: everything one station saw in one slot of one
/// run, ordered by pulse index.
struct SlotSeries {
    Station station = Station::Alice;
    std::string run_id;
    int slot_index = 0;
    std::vector<std::uint8_t> bits;
};

} // namespace bellpulse
