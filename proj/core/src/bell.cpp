#include "bellpulse/bell.hpp"

#include <cmath>

#include "bellpulse/errors.hpp"

namespace bellpulse::bell {

ChshSchedule ChshSchedule::canonical() {
    ChshSchedule s;
    s.ab = {0.0, 22.5};
    s.ab_prime = {0.0, 67.5};
    s.a_prime_b = {45.0, 22.5};
    s.a_prime_b_prime = {45.0, 67.5};
    return s;
}

std::optional<int> ChshSchedule::leg_of(const SettingPair& s, double tol_deg) const {
    const auto all = legs();
    for (int i = 0; i < 4; ++i)
        if (same_setting(all[static_cast<std::size_t>(i)], s, tol_deg)) return i;
    return std::nullopt;
}

Correlation correlation_e(const coincidence::CoincidenceCounts& counts) {
    const std::uint64_t n = counts.total();
    if (n == 0)
        throw DataError("correlation_e: zero total count");
    const double same = static_cast<double>(counts.c_pp + counts.c_mm);
    const double diff = static_cast<double>(counts.c_pm + counts.c_mp);
    Correlation c;
    c.total = n;
    c.e = (same - diff) / static_cast<double>(n);
    // E = 2p - 1 with p binomial => sigma_E = sqrt((1 - E^2) / n)
    c.sigma = std::sqrt(std::max(0.0, 1.0 - c.e * c.e) / static_cast<double>(n));
    return c;
}

double s_chsh(double e_ab, double e_ab_prime, double e_apb, double e_apbp) {
    return std::fabs(e_ab - e_ab_prime) + std::fabs(e_apb + e_apbp);
}

ChshEstimate s_chsh(const Correlation& ab, const Correlation& ab_prime,
                    const Correlation& a_prime_b, const Correlation& a_prime_b_prime) {
    ChshEstimate est;
    est.s = s_chsh(ab.e, ab_prime.e, a_prime_b.e, a_prime_b_prime.e);
    est.sigma = std::sqrt(ab.sigma * ab.sigma + ab_prime.sigma * ab_prime.sigma +
                          a_prime_b.sigma * a_prime_b.sigma +
                          a_prime_b_prime.sigma * a_prime_b_prime.sigma);
    return est;
}

SParameterSeries s_time_resolved(
    const std::array<std::vector<coincidence::CoincidenceCounts>, 4>& per_leg_slot_counts,
    const SlotConfig& cfg) {
    cfg.validate();
    const std::size_t n_slots = static_cast<std::size_t>(cfg.n_slots);
    for (const auto& leg : per_leg_slot_counts)
        if (leg.size() != n_slots)
            throw DataError("s_time_resolved: leg slot count mismatch");

    SParameterSeries series;
    double wsum = 0.0, wavg = 0.0, wvar = 0.0;
    for (std::size_t slot = 0; slot < n_slots; ++slot) {
        SlotS entry;
        entry.slot = static_cast<int>(slot);
        bool zero_leg = false;
        std::uint64_t total = 0;
        for (const auto& leg : per_leg_slot_counts) {
            total += leg[slot].total();
            if (leg[slot].total() == 0) zero_leg = true;
        }
        entry.total = total;
        if (zero_leg) {
            entry.flagged = true;
            series.flagged_slots.push_back(entry.slot);
        } else {
            const auto est = s_chsh(correlation_e(per_leg_slot_counts[0][slot]),
                                    correlation_e(per_leg_slot_counts[1][slot]),
                                    correlation_e(per_leg_slot_counts[2][slot]),
                                    correlation_e(per_leg_slot_counts[3][slot]));
            entry.s = est.s;
            entry.sigma = est.sigma;
            const double w = static_cast<double>(total);
            wsum += w;
            wavg += w * est.s;
            wvar += w * w * est.sigma * est.sigma;
        }
        series.slots.push_back(entry);
    }
    if (wsum > 0.0) {
        series.time_avg = wavg / wsum;
        series.time_avg_sigma = std::sqrt(wvar) / wsum;
    }
    return series;
}

double pironio_bound(double s) {
    constexpr double tol = 1e-9;
    if (s > kChshQuantumMax + tol)
        throw DataError("pironio_bound: S exceeds 2*sqrt(2)");
    double v = s;
    if (v > kChshQuantumMax) v = kChshQuantumMax;
    if (v < 2.0) v = 2.0; // below the local bound the certificate is vacuous
    const double inner = std::max(0.0, 2.0 - v * v / 4.0);
    return 1.0 - std::log2(1.0 + std::sqrt(inner));
}

} // namespace bellpulse::bell
