#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bellpulse/coincidence.hpp"
#include "bellpulse/types.hpp"

namespace bellpulse::bell {

/// The four canonical setting pairs of a CHSH run, degrees.
/// Leg order: (a,b), (a,b'), (a',b), (a',b').
struct ChshSchedule {
    SettingPair ab;
    SettingPair ab_prime;
    SettingPair a_prime_b;
    SettingPair a_prime_b_prime;

    /// a=0, a'=45, b=22.5, b'=67.5.
    static ChshSchedule canonical();

    std::array<SettingPair, 4> legs() const { return {ab, ab_prime, a_prime_b, a_prime_b_prime}; }

    /// Leg index (0..3) of a measured setting pair, angles compared mod 180.
    std::optional<int> leg_of(const SettingPair& s, double tol_deg = 1e-6) const;
};

struct Correlation {
    double e = 0.0;
    double sigma = 0.0; // binomial standard error
    std::uint64_t total = 0;
};

/// Correlation parameter E = (c_pp + c_mm - c_pm - c_mp) / total.
/// Throws DataError when total == 0.
Correlation correlation_e(const coincidence::CoincidenceCounts& counts);

/// CHSH combination S = |E(a,b) - E(a,b')| + |E(a',b) + E(a',b')|.
/// This sign convention is fixed; with the canonical schedule and
/// E = V cos 2(alpha-beta) it yields S = 2*sqrt(2)*V.
double s_chsh(double e_ab, double e_ab_prime, double e_apb, double e_apbp);

struct ChshEstimate {
    double s = 0.0;
    double sigma = 0.0;
};

ChshEstimate s_chsh(const Correlation& ab, const Correlation& ab_prime,
                    const Correlation& a_prime_b, const Correlation& a_prime_b_prime);

struct SlotS {
    int slot = 0;
    double s = 0.0;
    double sigma = 0.0;
    std::uint64_t total = 0; // coincidences across the four legs
    bool flagged = false;    // some leg had zero counts in this slot
};

struct SParameterSeries {
    std::vector<SlotS> slots;
    double time_avg = 0.0;       // count-weighted average over unflagged slots
    double time_avg_sigma = 0.0;
    std::vector<int> flagged_slots;
};

/// Per-slot S from the four legs' per-slot counts (each vector sized
/// cfg.n_slots, leg order as in ChshSchedule::legs).
SParameterSeries s_time_resolved(
    const std::array<std::vector<coincidence::CoincidenceCounts>, 4>& per_leg_slot_counts,
    const SlotConfig& cfg);

inline constexpr double kChshLocalBound = 2.0;
inline const double kChshQuantumMax = 2.0 * 1.41421356237309504880168872420969808;

/// Min-entropy certificate from a CHSH value:
/// bound = 1 - log2(1 + sqrt(2 - s^2/4)), increasing from 0 at s=2 to 1 at
/// s=2*sqrt(2). Inputs below 2 clamp to 0; inputs above 2*sqrt(2) by more than
/// a numerical tolerance raise DataError.
double pironio_bound(double s);

} // namespace bellpulse::bell
