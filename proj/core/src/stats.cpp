#include "bellpulse/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bellpulse/errors.hpp"

namespace bellpulse::stats {
namespace {

double log_beta(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// Continued fraction for the regularized incomplete beta (modified Lentz).
double incbeta_cf(double x, double a, double b) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-15;
    double c = 1.0;
    double d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const double m2 = 2.0 * m;
        double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + num * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + num * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double mult = d * c;
        h *= mult;
        if (std::fabs(mult - 1.0) < eps) break;
    }
    return h;
}

double regularized_incbeta(double x, double a, double b) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double front = std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta(a, b));
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * incbeta_cf(x, a, b) / a;
    return 1.0 - std::exp(b * std::log1p(-x) + a * std::log(x) - log_beta(a, b)) *
                     incbeta_cf(1.0 - x, b, a) / b;
}

struct Moments {
    double mean = 0.0;
    double var = 0.0; // sample variance
    std::size_t n = 0;
};

Moments moments(std::span<const double> v) {
    Moments m;
    m.n = v.size();
    for (double x : v) m.mean += x;
    m.mean /= static_cast<double>(m.n);
    for (double x : v) m.var += (x - m.mean) * (x - m.mean);
    m.var = m.n > 1 ? m.var / static_cast<double>(m.n - 1) : 0.0;
    return m;
}

} // namespace

double student_t_cdf(double t, double df) {
    if (!(df > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    const double x = df / (t * t + df);
    const double half_tail = 0.5 * regularized_incbeta(x, df / 2.0, 0.5);
    return t >= 0.0 ? 1.0 - half_tail : half_tail;
}

double t_critical(int df, double two_sided_alpha) {
    if (df < 1)
        throw DataError("t_critical: df must be >= 1");
    if (!(two_sided_alpha > 0.0 && two_sided_alpha < 1.0))
        throw DataError("t_critical: alpha must be in (0, 1)");
    const double target = 0.5 + two_sided_alpha / 2.0;

    // bisection on the CDF; the bracket grows until it contains the quantile
    double lo = 0.0, hi = 2.0;
    while (student_t_cdf(hi, df) < target) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (student_t_cdf(mid, df) < target)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-12 * std::max(1.0, hi)) break;
    }
    return 0.5 * (lo + hi);
}

TTestResult t_test_two_sample(std::span<const double> a, std::span<const double> b,
                              TTestMode mode, double alpha) {
    if (a.size() < 2 || b.size() < 2)
        throw DataError("t_test_two_sample: need at least 2 values per sample");

    const Moments ma = moments(a);
    const Moments mb = moments(b);
    const double na = static_cast<double>(ma.n), nb = static_cast<double>(mb.n);

    TTestResult r;
    if (ma.var == 0.0 && mb.var == 0.0) {
        if (ma.mean == mb.mean) {
            r.t_value = 0.0;
            r.df = static_cast<int>(na + nb - 2.0);
        } else {
            r.t_value = ma.mean > mb.mean ? std::numeric_limits<double>::infinity()
                                          : -std::numeric_limits<double>::infinity();
            r.infinite_t = true;
            r.df = static_cast<int>(na + nb - 2.0);
        }
        r.t_critical = t_critical(std::max(1, r.df), alpha);
        r.significant = r.infinite_t;
        return r;
    }

    double se = 0.0, df = 0.0;
    if (mode == TTestMode::welch) {
        const double va = ma.var / na, vb = mb.var / nb;
        se = std::sqrt(va + vb);
        df = (va + vb) * (va + vb) /
             (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    } else {
        const double sp2 = ((na - 1.0) * ma.var + (nb - 1.0) * mb.var) / (na + nb - 2.0);
        se = std::sqrt(sp2 * (1.0 / na + 1.0 / nb));
        df = na + nb - 2.0;
    }
    r.t_value = (ma.mean - mb.mean) / se;
    r.df = std::max(1, static_cast<int>(std::floor(df)));
    r.t_critical = t_critical(r.df, alpha);
    r.significant = std::fabs(r.t_value) > r.t_critical;
    return r;
}

SlopeFit slope_fit(std::span<const double> x, std::span<const double> y,
                   std::span<const double> sigma) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n)
        throw DataError("slope_fit: need at least 2 (x, y) points");
    if (!sigma.empty() && sigma.size() != n)
        throw DataError("slope_fit: sigma size mismatch");

    const bool weighted =
        !sigma.empty() && std::all_of(sigma.begin(), sigma.end(), [](double s) { return s > 0.0; });

    SlopeFit fit;
    if (weighted) {
        double sw = 0.0, swx = 0.0, swy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = 1.0 / (sigma[i] * sigma[i]);
            sw += w;
            swx += w * x[i];
            swy += w * y[i];
        }
        const double xbar = swx / sw, ybar = swy / sw;
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = 1.0 / (sigma[i] * sigma[i]);
            sxx += w * (x[i] - xbar) * (x[i] - xbar);
            sxy += w * (x[i] - xbar) * (y[i] - ybar);
        }
        if (sxx == 0.0)
            throw DataError("slope_fit: degenerate x values");
        fit.slope = sxy / sxx;
        fit.stderr_slope = std::sqrt(1.0 / sxx);
        fit.intercept = ybar - fit.slope * xbar;
    } else {
        double sx = 0.0, sy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sx += x[i];
            sy += y[i];
        }
        const double xbar = sx / static_cast<double>(n), ybar = sy / static_cast<double>(n);
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sxx += (x[i] - xbar) * (x[i] - xbar);
            sxy += (x[i] - xbar) * (y[i] - ybar);
        }
        if (sxx == 0.0)
            throw DataError("slope_fit: degenerate x values");
        fit.slope = sxy / sxx;
        fit.intercept = ybar - fit.slope * xbar;
        double ss_res = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = y[i] - (fit.intercept + fit.slope * x[i]);
            ss_res += r * r;
        }
        fit.stderr_slope =
            n > 2 ? std::sqrt(ss_res / (static_cast<double>(n) - 2.0) / sxx) : 0.0;
    }
    return fit;
}

bool slopes_overlap(const SlopeFit& a, const SlopeFit& b) {
    return std::fabs(a.slope - b.slope) <= a.stderr_slope + b.stderr_slope;
}

double SlotSample::mean() const {
    double s = 0.0;
    for (double v : values) s += v;
    return values.empty() ? 0.0 : s / static_cast<double>(values.size());
}

double SlotSample::stddev() const {
    if (values.size() < 2) return 0.0;
    const double m = mean();
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

bool means_overlap(double mean1, double disp1, double mean2, double disp2) {
    return std::fabs(mean1 - mean2) <= disp1 + disp2;
}

namespace {

// Same statistic, critical value at the paper's df = groups - 1.
TTestResult with_paper_df(const TTestResult& base, int groups, double alpha) {
    TTestResult p = base;
    p.df = std::max(1, groups - 1);
    p.t_critical = t_critical(p.df, alpha);
    p.significant = p.infinite_t || std::fabs(p.t_value) > p.t_critical;
    return p;
}

std::vector<double> pool_values(std::span<const SlotSample> groups) {
    std::vector<double> pool;
    for (const auto& g : groups) pool.insert(pool.end(), g.values.begin(), g.values.end());
    return pool;
}

} // namespace

std::vector<SlotComparison> compare_each_to_pool(std::span<const SlotSample> groups,
                                                 TTestMode mode, DfConvention convention,
                                                 double alpha) {
    if (groups.size() < 2)
        throw DataError("compare_each_to_pool: need at least 2 groups");
    const auto pool = pool_values(groups);
    std::vector<SlotComparison> out;
    out.reserve(groups.size());
    for (const auto& g : groups) {
        SlotComparison cmp;
        cmp.slot = g.slot_index;
        cmp.test = t_test_two_sample(g.values, pool, mode, alpha);
        if (convention == DfConvention::paper)
            cmp.paper = with_paper_df(cmp.test, static_cast<int>(groups.size()), alpha);
        out.push_back(std::move(cmp));
    }
    return out;
}

SlotBattery slot_battery(std::span<const SlotSample> samples, TTestMode mode,
                         DfConvention convention, double alpha) {
    if (samples.size() < 2)
        throw DataError("slot_battery: need at least 2 slots");

    SlotBattery battery;
    const auto& first = samples.front();
    for (std::size_t i = 1; i < samples.size(); ++i) {
        SlotComparison cmp;
        cmp.slot = samples[i].slot_index;
        cmp.test = t_test_two_sample(samples[i].values, first.values, mode, alpha);
        if (convention == DfConvention::paper)
            cmp.paper = with_paper_df(cmp.test, static_cast<int>(samples.size()), alpha);
        battery.vs_first.push_back(std::move(cmp));
    }
    battery.vs_pooled = compare_each_to_pool(samples, mode, convention, alpha);

    // summary-table questions
    if (samples.size() >= 3) {
        battery.answers.slot1_slot3_overlap =
            means_overlap(samples[0].mean(), samples[0].stddev(),
                          samples[2].mean(), samples[2].stddev());
        SlotSample tail;
        for (std::size_t i = 2; i < samples.size(); ++i)
            tail.values.insert(tail.values.end(), samples[i].values.begin(),
                               samples[i].values.end());
        battery.answers.slot1_tail_avg_overlap =
            means_overlap(samples[0].mean(), samples[0].stddev(), tail.mean(), tail.stddev());

        std::vector<double> xs_head, ys_head, ss_head, xs_tail, ys_tail, ss_tail;
        for (std::size_t i = 0; i < 3; ++i) {
            xs_head.push_back(static_cast<double>(samples[i].slot_index));
            ys_head.push_back(samples[i].mean());
            ss_head.push_back(samples[i].stddev());
        }
        for (std::size_t i = 2; i < samples.size(); ++i) {
            xs_tail.push_back(static_cast<double>(samples[i].slot_index));
            ys_tail.push_back(samples[i].mean());
            ss_tail.push_back(samples[i].stddev());
        }
        battery.answers.slope_head_tail_overlap =
            slopes_overlap(slope_fit(xs_head, ys_head, ss_head),
                           slope_fit(xs_tail, ys_tail, ss_tail));
    }
    return battery;
}

bool slopes_overlap_across(std::span<const SlotSample> cond1,
                           std::span<const SlotSample> cond2) {
    auto fit_all = [](std::span<const SlotSample> cond) {
        std::vector<double> xs, ys, ss;
        for (const auto& s : cond) {
            xs.push_back(static_cast<double>(s.slot_index));
            ys.push_back(s.mean());
            ss.push_back(s.stddev());
        }
        return slope_fit(xs, ys, ss);
    };
    return slopes_overlap(fit_all(cond1), fit_all(cond2));
}

} // namespace bellpulse::stats
