#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bellpulse/types.hpp"

namespace bellpulse::sync {

struct RateBlock {
    double rate_hz = 0.0;
    std::uint32_t length_pulses = 0;
};

/// Cyclic repetition-rate program of the pulse source. Switching the rate
/// stamps a recognizable block structure onto both stations' trigger streams,
/// which is what makes a shared pulse numbering recoverable.
struct ModulationPattern {
    std::vector<RateBlock> blocks;

    /// Usable for numbering recovery: >= 2 entries with >= 2 distinct rates,
    /// all lengths >= 1. Throws ConfigError otherwise.
    void validate_for_sync() const;

    bool empty() const { return blocks.empty(); }
};

/// Affine model mapping Alice trigger time to Bob trigger time:
/// t_b ~ ratio * t_a + offset_ps.
struct ClockModel {
    double ratio = 1.0;
    double offset_ps = 0.0;
    double residual_rms_ns = 0.0;
    double residual_max_ns = 0.0;
    std::size_t matched_boundaries = 0;
};

/// Shared pulse numbering: index_a[i] labels triggers_a[i], index_b[i] labels
/// triggers_b[i], and equal indices mean the same physical pulse.
struct PulseIndexMap {
    std::vector<std::uint64_t> trigger_ps_a;
    std::vector<std::uint64_t> trigger_ps_b;
    std::vector<std::int64_t> index_a;
    std::vector<std::int64_t> index_b;
    ClockModel clock;
};

/// Recovers the common pulse numbering of two trigger streams from the
/// modulation block structure: rate-change boundaries are detected in each
/// stream independently, matched across streams, and indices are assigned so
/// matched boundaries coincide. Throws SyncError when no rate change is
/// visible (constant rate) or the block structures cannot be reconciled.
PulseIndexMap recover_pulse_numbering(std::span<const std::uint64_t> triggers_a,
                                      std::span<const std::uint64_t> triggers_b,
                                      const ModulationPattern& pattern);

/// Relative inter-trigger interval change that flags a block edge.
inline constexpr double kBoundaryThreshold = 0.05;

/// Positions every non-trigger record of a stream relative to its pulse:
/// pulse start = trigger time - trigger_delay, offset = detection - start.
/// Every record yields exactly one event; offsets outside [0, pulse_duration)
/// (dark counts, pre-first-pulse detections) are flagged out-of-pulse, never
/// an error. Triggers must be the stream's own (same clock).
std::vector<DetectionEvent> assign_detections(const TimeTagStream& stream,
                                              std::span<const std::uint64_t> trigger_ps,
                                              std::span<const std::int64_t> trigger_indices,
                                              Station station, double trigger_delay_ns,
                                              double pulse_duration_ns);

struct Histogram {
    double lo_ns = 0.0;
    double bin_ns = 1.0;
    std::vector<std::uint64_t> counts;

    std::uint64_t total() const;
    double bin_center(std::size_t i) const { return lo_ns + (static_cast<double>(i) + 0.5) * bin_ns; }
};

/// Stroboscopic offset histogram over [lo_ns, hi_ns); events outside the
/// range are not counted.
Histogram build_time_histogram(std::span<const DetectionEvent> events, double bin_ns,
                               double lo_ns, double hi_ns);

/// Optional estimator of the constant trigger delay from the wrapped
/// detection-minus-trigger histogram (rising-edge alignment). The default
/// pipeline uses the configured constant instead.
double estimate_trigger_delay(const TimeTagStream& stream,
                              std::span<const std::uint64_t> trigger_ps,
                              double nominal_period_ns, double bin_ns = 1.0);

} // namespace bellpulse::sync
