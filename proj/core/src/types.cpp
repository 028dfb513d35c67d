#include "bellpulse/types.hpp"

#include <cmath>
#include <cstdio>

namespace bellpulse {

void SlotConfig::validate() const {
    if (n_slots <= 0)
        throw ConfigError("slot config: n_slots must be positive");
    if (!(slot_width_ns > 0.0))
        throw ConfigError("slot config: slot_width_ns must be positive");
    if (!(pulse_duration_ns > 0.0))
        throw ConfigError("slot config: pulse_duration_ns must be positive");
    const double prod = static_cast<double>(n_slots) * slot_width_ns;
    if (std::fabs(prod - pulse_duration_ns) > 1e-9 * pulse_duration_ns)
        throw ConfigError("slot config: n_slots * slot_width_ns != pulse_duration_ns");
}

std::string SlotConfig::label() const {
    char buf[64];
    if (slot_width_ns == std::floor(slot_width_ns))
        std::snprintf(buf, sizeof(buf), "%dx%.0f", n_slots, slot_width_ns);
    else
        std::snprintf(buf, sizeof(buf), "%dx%g", n_slots, slot_width_ns);
    return buf;
}

int slot_of(double offset_ns, const SlotConfig& cfg) {
    cfg.validate();
    if (offset_ns < 0.0 || offset_ns >= cfg.pulse_duration_ns)
        return kOutOfPulse;
    int k = static_cast<int>(offset_ns / cfg.slot_width_ns);
    // guard against offset just below pulse_duration rounding up
    if (k >= cfg.n_slots) k = cfg.n_slots - 1;
    return k;
}

} // namespace bellpulse
