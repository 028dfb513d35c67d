#include "bellpulse/sync.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "bellpulse/errors.hpp"

namespace bellpulse::sync {
namespace {

struct Block {
    std::size_t first_trigger = 0; // index into the trigger array
    std::size_t n_triggers = 0;
    int rate_class = -1; // index into pattern.blocks
};

// Classify each inter-trigger interval against the pattern periods and group
// consecutive equal classes into blocks. Interval i belongs to the pulse at
// trigger i, so a class change between intervals i-1 and i puts a block
// boundary at trigger i.
std::vector<Block> detect_blocks(std::span<const std::uint64_t> triggers,
                                 const ModulationPattern& pattern) {
    if (triggers.size() < 2)
        throw SyncError("trigger stream too short for block detection");

    std::vector<double> periods_ns;
    periods_ns.reserve(pattern.blocks.size());
    for (const auto& b : pattern.blocks) periods_ns.push_back(1e9 / b.rate_hz);

    auto classify = [&](double interval_ns) {
        int best = 0;
        double best_err = std::fabs(interval_ns - periods_ns[0]);
        for (std::size_t k = 1; k < periods_ns.size(); ++k) {
            const double err = std::fabs(interval_ns - periods_ns[k]);
            if (err < best_err) {
                best_err = err;
                best = static_cast<int>(k);
            }
        }
        return best;
    };

    std::vector<Block> blocks;
    Block current{0, 1, classify(static_cast<double>(triggers[1] - triggers[0]) * 1e-3)};
    double prev_interval = static_cast<double>(triggers[1] - triggers[0]) * 1e-3;
    for (std::size_t i = 1; i + 1 < triggers.size(); ++i) {
        const double interval = static_cast<double>(triggers[i + 1] - triggers[i]) * 1e-3;
        const int cls = classify(interval);
        const bool jump = std::fabs(interval - prev_interval) >
                          kBoundaryThreshold * periods_ns[static_cast<std::size_t>(current.rate_class)];
        if (cls != current.rate_class && jump) {
            blocks.push_back(current);
            current = Block{i, 1, cls};
        } else {
            ++current.n_triggers;
        }
        prev_interval = interval;
    }
    ++current.n_triggers; // the last trigger has no interval; attach it to the last block
    blocks.push_back(current);
    return blocks;
}

struct Alignment {
    std::ptrdiff_t shift = 0; // block index in B = block index in A + shift
    std::size_t score = 0;
};

// Best alignment of the two block sequences; interior blocks must agree in
// class and pulse count (stream edges may truncate the first/last block).
Alignment align_blocks(const std::vector<Block>& a, const std::vector<Block>& b) {
    std::vector<Alignment> candidates;
    const auto na = static_cast<std::ptrdiff_t>(a.size());
    const auto nb = static_cast<std::ptrdiff_t>(b.size());
    for (std::ptrdiff_t shift = -(na - 1); shift < nb; ++shift) {
        std::size_t score = 0;
        bool ok = true;
        for (std::ptrdiff_t ia = 0; ia < na; ++ia) {
            const std::ptrdiff_t ib = ia + shift;
            if (ib < 0 || ib >= nb) continue;
            const Block& ba = a[static_cast<std::size_t>(ia)];
            const Block& bb = b[static_cast<std::size_t>(ib)];
            if (ba.rate_class != bb.rate_class) {
                ok = false;
                break;
            }
            const bool interior_a = ia > 0 && ia < na - 1;
            const bool interior_b = ib > 0 && ib < nb - 1;
            if (interior_a && interior_b) {
                if (ba.n_triggers != bb.n_triggers) {
                    ok = false;
                    break;
                }
                ++score;
            }
        }
        if (ok && score > 0) candidates.push_back({shift, score});
    }
    if (candidates.empty())
        throw SyncError("inconsistent block structure: no alignment of rate blocks found");
    std::sort(candidates.begin(), candidates.end(),
              [](const Alignment& x, const Alignment& y) { return x.score > y.score; });
    if (candidates.size() > 1 && candidates[0].score == candidates[1].score)
        throw SyncError("ambiguous block alignment: shifts " +
                        std::to_string(candidates[0].shift) + " and " +
                        std::to_string(candidates[1].shift) + " score equally");
    return candidates[0];
}

} // namespace

void ModulationPattern::validate_for_sync() const {
    if (blocks.size() < 2)
        throw ConfigError("modulation pattern needs at least two blocks");
    std::set<double> rates;
    for (const auto& b : blocks) {
        if (!(b.rate_hz > 0.0))
            throw ConfigError("modulation pattern: rates must be positive");
        if (b.length_pulses < 1)
            throw ConfigError("modulation pattern: block lengths must be >= 1");
        rates.insert(b.rate_hz);
    }
    if (rates.size() < 2)
        throw ConfigError("modulation pattern needs at least two distinct rates");
}

PulseIndexMap recover_pulse_numbering(std::span<const std::uint64_t> triggers_a,
                                      std::span<const std::uint64_t> triggers_b,
                                      const ModulationPattern& pattern) {
    pattern.validate_for_sync();
    if (triggers_a.empty() || triggers_b.empty())
        throw SyncError("empty trigger stream");

    const auto blocks_a = detect_blocks(triggers_a, pattern);
    const auto blocks_b = detect_blocks(triggers_b, pattern);
    if (blocks_a.size() < 2 || blocks_b.size() < 2)
        throw SyncError("no rate change detected; cannot anchor pulse numbering");

    const Alignment alignment = align_blocks(blocks_a, blocks_b);

    // Pulse indices in A are stream positions; matched boundaries force B's.
    PulseIndexMap map;
    map.trigger_ps_a.assign(triggers_a.begin(), triggers_a.end());
    map.trigger_ps_b.assign(triggers_b.begin(), triggers_b.end());
    map.index_a.resize(triggers_a.size());
    for (std::size_t i = 0; i < triggers_a.size(); ++i)
        map.index_a[i] = static_cast<std::int64_t>(i);

    // first matched pair of detected boundaries (block start with index > 0 on
    // both sides)
    std::vector<std::pair<std::size_t, std::size_t>> matched; // trigger idx (a, b)
    for (std::size_t ia = 1; ia < blocks_a.size(); ++ia) {
        const std::ptrdiff_t ib = static_cast<std::ptrdiff_t>(ia) + alignment.shift;
        if (ib < 1 || ib >= static_cast<std::ptrdiff_t>(blocks_b.size())) continue;
        matched.emplace_back(blocks_a[ia].first_trigger,
                             blocks_b[static_cast<std::size_t>(ib)].first_trigger);
    }
    if (matched.empty())
        throw SyncError("no matched block boundaries between the streams");

    const std::int64_t base_index = static_cast<std::int64_t>(matched[0].first);
    const std::int64_t base_pos_b = static_cast<std::int64_t>(matched[0].second);
    map.index_b.resize(triggers_b.size());
    for (std::size_t i = 0; i < triggers_b.size(); ++i)
        map.index_b[i] = static_cast<std::int64_t>(i) - base_pos_b + base_index;

    // every other matched boundary must agree with the sequential numbering
    for (const auto& [ta, tb] : matched) {
        const std::int64_t want = map.index_a[ta];
        const std::int64_t got = map.index_b[tb];
        if (want != got)
            throw SyncError("inconsistent block structure: boundary at trigger " +
                            std::to_string(ta) + " maps to pulse " + std::to_string(got) +
                            ", expected " + std::to_string(want));
    }

    // affine clock model fit over matched boundary times
    ClockModel clock;
    clock.matched_boundaries = matched.size();
    if (matched.size() >= 2) {
        double ma = 0.0, mb = 0.0;
        for (const auto& [ta, tb] : matched) {
            ma += static_cast<double>(triggers_a[ta]);
            mb += static_cast<double>(triggers_b[tb]);
        }
        ma /= static_cast<double>(matched.size());
        mb /= static_cast<double>(matched.size());
        double sxx = 0.0, sxy = 0.0;
        for (const auto& [ta, tb] : matched) {
            const double xa = static_cast<double>(triggers_a[ta]) - ma;
            const double xb = static_cast<double>(triggers_b[tb]) - mb;
            sxx += xa * xa;
            sxy += xa * xb;
        }
        clock.ratio = sxx > 0.0 ? sxy / sxx : 1.0;
        clock.offset_ps = mb - clock.ratio * ma;
    } else {
        clock.ratio = 1.0;
        clock.offset_ps = static_cast<double>(triggers_b[matched[0].second]) -
                          static_cast<double>(triggers_a[matched[0].first]);
    }

    // residuals over every common pulse index
    const std::int64_t lo = std::max(map.index_a.front(), map.index_b.front());
    const std::int64_t hi = std::min(map.index_a.back(), map.index_b.back());
    double ss = 0.0, worst = 0.0;
    std::size_t n_common = 0;
    for (std::int64_t idx = lo; idx <= hi; ++idx) {
        const auto ia = static_cast<std::size_t>(idx - map.index_a.front());
        const auto ib = static_cast<std::size_t>(idx - map.index_b.front());
        const double pred =
            clock.ratio * static_cast<double>(triggers_a[ia]) + clock.offset_ps;
        const double r_ns = (static_cast<double>(triggers_b[ib]) - pred) * 1e-3;
        ss += r_ns * r_ns;
        worst = std::max(worst, std::fabs(r_ns));
        ++n_common;
    }
    if (n_common > 0) {
        clock.residual_rms_ns = std::sqrt(ss / static_cast<double>(n_common));
        clock.residual_max_ns = worst;
    }
    map.clock = clock;
    return map;
}

std::vector<DetectionEvent> assign_detections(const TimeTagStream& stream,
                                              std::span<const std::uint64_t> trigger_ps,
                                              std::span<const std::int64_t> trigger_indices,
                                              Station station, double trigger_delay_ns,
                                              double pulse_duration_ns) {
    if (trigger_ps.empty())
        throw DataError("assign_detections: no triggers");
    if (trigger_ps.size() != trigger_indices.size())
        throw DataError("assign_detections: trigger/index size mismatch");

    const std::int64_t delay_ps = std::llround(trigger_delay_ns * 1e3);
    std::vector<DetectionEvent> events;
    events.reserve(stream.size());
    for (const auto& rec : stream) {
        if (rec.channel == Channel::Trigger) continue;

        const auto t = static_cast<std::int64_t>(rec.time_ps);
        // pulse k spans [trigger_k - delay, trigger_{k+1} - delay)
        auto it = std::upper_bound(trigger_ps.begin(), trigger_ps.end(),
                                   static_cast<std::uint64_t>(std::max<std::int64_t>(0, t + delay_ps)));
        DetectionEvent ev;
        ev.station = station;
        ev.outcome = rec.channel == Channel::Out1 ? 1 : 0;
        if (it == trigger_ps.begin()) {
            // before the first pulse
            ev.pulse_index = trigger_indices.front();
            ev.offset_ns =
                (static_cast<double>(t) - (static_cast<double>(trigger_ps.front()) -
                                           static_cast<double>(delay_ps))) *
                1e-3;
            ev.in_pulse = false;
        } else {
            const std::size_t k = static_cast<std::size_t>(std::distance(trigger_ps.begin(), it)) - 1;
            ev.pulse_index = trigger_indices[k];
            ev.offset_ns = (static_cast<double>(t) -
                            (static_cast<double>(trigger_ps[k]) - static_cast<double>(delay_ps))) *
                           1e-3;
            ev.in_pulse = ev.offset_ns >= 0.0 && ev.offset_ns < pulse_duration_ns;
        }
        events.push_back(ev);
    }
    return events;
}

std::uint64_t Histogram::total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
}

Histogram build_time_histogram(std::span<const DetectionEvent> events, double bin_ns,
                               double lo_ns, double hi_ns) {
    if (!(bin_ns > 0.0))
        throw ConfigError("build_time_histogram: bin_ns must be positive");
    if (!(hi_ns > lo_ns))
        throw ConfigError("build_time_histogram: empty range");
    Histogram h;
    h.lo_ns = lo_ns;
    h.bin_ns = bin_ns;
    h.counts.assign(static_cast<std::size_t>(std::ceil((hi_ns - lo_ns) / bin_ns)), 0);
    for (const auto& ev : events) {
        if (ev.offset_ns < lo_ns || ev.offset_ns >= hi_ns) continue;
        auto bin = static_cast<std::size_t>((ev.offset_ns - lo_ns) / bin_ns);
        if (bin >= h.counts.size()) bin = h.counts.size() - 1;
        ++h.counts[bin];
    }
    return h;
}

double estimate_trigger_delay(const TimeTagStream& stream,
                              std::span<const std::uint64_t> trigger_ps,
                              double nominal_period_ns, double bin_ns) {
    if (trigger_ps.size() < 2)
        throw DataError("estimate_trigger_delay: need triggers");

    // wrapped histogram of (detection - previous trigger) over one nominal
    // period; the photon block occupies [-delay, -delay + duration) mod P
    const auto n_bins = static_cast<std::size_t>(std::ceil(nominal_period_ns / bin_ns));
    std::vector<std::uint64_t> hist(n_bins, 0);
    std::uint64_t n_used = 0;
    for (const auto& rec : stream) {
        if (rec.channel == Channel::Trigger) continue;
        auto it = std::upper_bound(trigger_ps.begin(), trigger_ps.end(), rec.time_ps);
        if (it == trigger_ps.begin()) continue;
        const std::uint64_t prev = *(it - 1);
        const double delta_ns = static_cast<double>(rec.time_ps - prev) * 1e-3;
        if (delta_ns >= nominal_period_ns) continue;
        ++hist[static_cast<std::size_t>(delta_ns / bin_ns)];
        ++n_used;
    }
    if (n_used == 0)
        throw DataError("estimate_trigger_delay: no detections near triggers");

    const std::uint64_t peak = *std::max_element(hist.begin(), hist.end());
    const std::uint64_t threshold = std::max<std::uint64_t>(1, peak / 10);

    // The photon block occupies one circular arc; sparse bins inside it can
    // dip below threshold, so the robust edge is the end of the LONGEST
    // below-threshold run (the inter-pulse gap), not the first local rise.
    std::size_t best_len = 0, best_end = 0, run_len = 0;
    for (std::size_t i = 0; i < 2 * n_bins; ++i) {
        if (hist[i % n_bins] < threshold) {
            ++run_len;
            if (run_len > best_len && run_len <= n_bins) {
                best_len = run_len;
                best_end = i % n_bins; // last empty bin of the gap
            }
        } else {
            run_len = 0;
        }
    }
    if (best_len == 0 || best_len >= n_bins)
        throw DataError("estimate_trigger_delay: no rising edge found");
    const std::size_t edge_bin = (best_end + 1) % n_bins;
    const double edge_ns = static_cast<double>(edge_bin) * bin_ns;
    double delay = nominal_period_ns - edge_ns;
    if (delay >= nominal_period_ns) delay -= nominal_period_ns;
    if (delay < 0.0) delay += nominal_period_ns;
    return delay;
}

} // namespace bellpulse::sync
