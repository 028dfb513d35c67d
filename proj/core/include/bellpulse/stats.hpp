#pragma once

#include <optional>
#include <span>
#include <vector>

namespace bellpulse::stats {

enum class TTestMode { welch, pooled };

/// How the degrees of freedom feeding t_critical are chosen.
///  sample - from the sample sizes (Welch-Satterthwaite or pooled n_a+n_b-2).
///  paper  - additionally report df = number of compared groups - 1, the
///           convention the reference tables quote. Neither replaces the other;
///           both columns are emitted when `paper` is selected.
enum class DfConvention { sample, paper };

struct TTestResult {
    double t_value = 0.0;
    int df = 0;
    double t_critical = 0.0;
    bool significant = false;
    /// Zero variance in both samples but distinct means: |t| is unbounded.
    bool infinite_t = false;
};

/// Two-sample Student t-test. alpha is the two-sided confidence level
/// (0.95 -> the 0.975 quantile). Requires at least two values per sample.
TTestResult t_test_two_sample(std::span<const double> a, std::span<const double> b,
                              TTestMode mode = TTestMode::welch, double alpha = 0.95);

/// Two-sided Student critical value: the (1+alpha)/2 quantile of the
/// t distribution with df degrees of freedom.
double t_critical(int df, double two_sided_alpha = 0.95);

/// CDF of the Student t distribution (regularized incomplete beta).
double student_t_cdf(double t, double df);

struct SlopeFit {
    double slope = 0.0;
    double stderr_slope = 0.0;
    double intercept = 0.0;
};

/// Straight-line fit of y against x. When every sigma is positive the fit is
/// weighted by 1/sigma^2 and the slope error comes from the weights; otherwise
/// an ordinary fit with residual-based error is used. Requires >= 2 points.
SlopeFit slope_fit(std::span<const double> x, std::span<const double> y,
                   std::span<const double> sigma = {});

/// Two fits agree within errors: |slope1 - slope2| <= stderr1 + stderr2.
bool slopes_overlap(const SlopeFit& a, const SlopeFit& b);

/// Per-slot collection of one estimator's values (one value per run).
struct SlotSample {
    int slot_index = 0;
    std::vector<double> values;

    double mean() const;
    double stddev() const; // sample standard deviation
};

/// Means overlap within quoted dispersions: |m1 - m2| <= d1 + d2.
bool means_overlap(double mean1, double disp1, double mean2, double disp2);

struct SlotComparison {
    int slot = 0;
    TTestResult test;                  // df from the sample sizes
    std::optional<TTestResult> paper;  // same t, df = groups - 1 (paper convention)
};

/// Yes/no answers over one condition's slots (the summary-table questions).
struct BatteryAnswers {
    bool slot1_slot3_overlap = false;
    bool slot1_tail_avg_overlap = false;   // slot 1 vs pooled slots 3..N
    bool slope_head_tail_overlap = false;  // slope over slots 1-3 vs slots 3-N
};

struct SlotBattery {
    std::vector<SlotComparison> vs_first;  // each slot >= 2 against slot 1
    std::vector<SlotComparison> vs_pooled; // each slot against the union of all
    BatteryAnswers answers;
};

/// The slot-comparison battery for one condition. Requires >= 2 slots.
SlotBattery slot_battery(std::span<const SlotSample> samples,
                         TTestMode mode = TTestMode::welch,
                         DfConvention convention = DfConvention::sample,
                         double alpha = 0.95);

/// Each group tested against the pooled union of all groups. The paper-mode
/// df is (number of groups - 1); pass both conditions' slots to reproduce the
/// cross-condition table.
std::vector<SlotComparison> compare_each_to_pool(std::span<const SlotSample> groups,
                                                 TTestMode mode = TTestMode::welch,
                                                 DfConvention convention = DfConvention::sample,
                                                 double alpha = 0.95);

/// Do the all-slots slopes of two conditions overlap within errors?
bool slopes_overlap_across(std::span<const SlotSample> cond1,
                           std::span<const SlotSample> cond2);

} // namespace bellpulse::stats
