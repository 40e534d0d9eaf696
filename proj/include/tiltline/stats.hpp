#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tiltline/bridge_core.hpp"

namespace tiltline {

class GibbsSampler;
struct SamplerConfig;

/// Point estimate with an autocorrelation-aware confidence interval.
struct EstimateCI {
  double estimate = 0.0;
  double standard_error = 0.0;
  double ess = 0.0;
  double level = 0.99;
  std::size_t count = 0;  // raw sample count
  double lower = 0.0;
  double upper = 0.0;
};

/// Two-sided normal quantile for a confidence level (0.99 -> 2.5758...).
double z_for_level(double level);

/// tau = sum_{k>=1} rho_k, truncated by Geyer's initial positive sequence.
double autocorrelation_time(std::span<const double> series);

/// N / (2 tau + 1), clamped to [1, N]; N for a constant series.
double effective_sample_size(std::span<const double> series);

EstimateCI estimate_mean(std::span<const double> series, double level = 0.99);

/// Wilson score interval with the indicator series' ESS as sample size.
EstimateCI estimate_proportion(std::span<const double> indicators, double level = 0.99);

/// Joint half-width for comparing two independent estimates.
double joint_half_width(const EstimateCI& a, const EstimateCI& b);

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov machinery

/// Kolmogorov survival function Q(l) = 2 sum (-1)^(k-1) exp(-2 k^2 l^2).
double kolmogorov_survival(double lambda);
double ks_statistic(std::span<const double> a, std::span<const double> b);
double ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf);
/// Asymptotic p-value with effective size n_eff (Stephens' correction).
double ks_p_value(double statistic, double n_eff);

enum class Direction { hi_dominates_lo, lo_dominates_hi };

struct DominanceResult {
  double statistic = 0.0;  // sup_x (F_dominator(x) - F_other(x)) >= 0
  double p_value = 1.0;
  bool accepted = true;    // dominance not rejected at `alpha`
};

/// One-sided test of stochastic dominance with a pooled bootstrap p-value.
DominanceResult dominance_test(std::span<const double> lo, std::span<const double> hi,
                               Direction direction, std::size_t bootstrap = 999,
                               std::uint64_t seed = 7, double alpha = 0.05);

// ---------------------------------------------------------------------------
// Estimators over stored ensembles

/// Mean of the curved maximum of the top line; InsufficientDataError when
/// the ESS is below `min_ess`.
EstimateCI estimate_curved_max(std::span<const Ensemble> samples, double alpha, Window window,
                               double level = 0.99, double min_ess = 100.0);

struct TailCell {
  std::size_t k = 1;
  double M = 0.0;
  double threshold = 0.0;
  EstimateCI probability;
  bool sparse = false;  // fewer than 10 exceedances: wide interval, flagged
};

struct MaxTailTable {
  std::vector<TailCell> cells;
  /// Smallest C with every upper bound <= C / M.
  double fitted_C = 0.0;
  /// C fixed by the smallest M across all k.
  double reference_C = 0.0;
  /// No cell's lower bound exceeds reference_C / M.
  bool single_constant_fits = false;
};

MaxTailTable max_tail_scan(std::span<const Ensemble> samples,
                           const std::vector<std::size_t>& k_list,
                           const std::vector<double>& M_list, Window window, double lambda,
                           double level = 0.99);
/// Same table from stored window maxima, maxima[c] belonging to k_list[c].
MaxTailTable max_tail_scan(const std::vector<std::vector<double>>& maxima,
                           const std::vector<std::size_t>& k_list,
                           const std::vector<double>& M_list, double lambda,
                           double level = 0.99);

struct GapCell {
  double delta = 0.0;
  EstimateCI probability;
};

struct GapTable {
  std::vector<GapCell> cells;  // in the order of delta_list
  bool monotone = false;       // estimates non-increasing as delta decreases
  double reference_C = 0.0;    // upper bound at the largest delta over delta
  bool linear_bound = false;   // every lower bound / delta <= reference_C
};

GapTable gap_tail(std::span<const Ensemble> samples, std::size_t k, Window window,
                  const std::vector<double>& delta_list, double level = 0.99);
GapTable gap_tail(std::span<const double> gaps, const std::vector<double>& delta_list,
                  double level = 0.99);

/// P(modulus of the top k lines over the window with span delta >= eta).
EstimateCI modulus_tail(std::span<const Ensemble> samples, std::size_t k, Window window,
                        double eta, double delta, double level = 0.99);

// ---------------------------------------------------------------------------
// Scans that drive the sampler

/// Conjunction of threshold conditions X_line(time) > threshold (or < when
/// `above` is false, which makes the event non-increasing).
struct ThresholdEvent {
  struct Condition {
    std::size_t line = 1;
    double time = 0.0;
    double threshold = 0.0;
    bool above = true;
  };
  std::vector<Condition> conditions;

  bool increasing() const;
  bool holds(const Ensemble& ensemble) const;
  ThresholdEvent shifted(double shift) const;
  std::string name() const;
};

struct ScanSetting {
  std::size_t n = 0;
  double left = 0.0;
  double right = 0.0;
  EstimateCI estimate;
};

struct ScanResult {
  std::string observable;
  std::vector<ScanSetting> settings;
  bool non_decreasing = false;
  bool saturated = false;
};

/// Estimates P(event) under each zero-boundary config (each run with its own
/// config seed); configs must grow in (n, -left, right).
ScanResult monotone_scan(const std::vector<SamplerConfig>& configs, const ThresholdEvent& event,
                         std::size_t n_samples, double level = 0.99);

struct GibbsConsistencyResult {
  std::size_t pairs = 0;
  bool outside_identical = true;
  std::vector<double> p_values;  // per line, at the interval midpoint
  bool passed = true;
  std::vector<std::vector<double>> midpoint_before;  // [line][pair]
  std::vector<std::vector<double>> midpoint_after;
};

/// Resamples every line once on the node interval spanned by [t0, t1] in a
/// copy of each stored ensemble and compares against the originals.
GibbsConsistencyResult gibbs_consistency(const GibbsSampler& sampler,
                                         std::span<const Ensemble> states, double t0,
                                         double t1, std::uint64_t seed = 11,
                                         double threshold = 0.01);

}  // namespace tiltline
