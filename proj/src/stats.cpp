#include "tiltline/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tiltline/errors.hpp"
#include "tiltline/numerics.hpp"
#include "tiltline/random.hpp"

namespace tiltline {

double z_for_level(double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("confidence level must be in (0, 1)");
  return normal_quantile(0.5 + 0.5 * level);
}

double autocorrelation_time(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 4) return 0.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - mean) * (x[i + lag] - mean);
    return s / static_cast<double>(n);
  };
  const double c0 = autocov(0);
  if (!(c0 > 0.0)) return 0.0;
  // Initial positive sequence: sum pairs Gamma_m = c_{2m} + c_{2m+1} while positive.
  double tau_int = -1.0;
  for (std::size_t m = 0; 2 * m + 1 < n / 2; ++m) {
    const double pair = (m == 0 ? c0 : autocov(2 * m)) + autocov(2 * m + 1);
    if (!(pair > 0.0)) break;
    tau_int += 2.0 * pair / c0;
  }
  tau_int = std::max(tau_int, 1.0 / static_cast<double>(n));
  return 0.5 * (tau_int - 1.0);
}

double effective_sample_size(std::span<const double> series) {
  const double n = static_cast<double>(series.size());
  if (series.size() < 4) return n;
  const double tau = autocorrelation_time(series);
  return std::clamp(n / (2.0 * tau + 1.0), std::min(1.0, n), n);
}

EstimateCI estimate_mean(std::span<const double> series, double level) {
  EstimateCI e;
  e.level = level;
  e.count = series.size();
  if (series.empty()) throw InsufficientDataError("no samples");
  const double n = static_cast<double>(series.size());
  e.estimate = std::accumulate(series.begin(), series.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : series) ss += (v - e.estimate) * (v - e.estimate);
  const double var = series.size() > 1 ? ss / (n - 1.0) : 0.0;
  e.ess = effective_sample_size(series);
  e.standard_error = std::sqrt(var / e.ess);
  const double z = z_for_level(level);
  e.lower = e.estimate - z * e.standard_error;
  e.upper = e.estimate + z * e.standard_error;
  return e;
}

EstimateCI estimate_proportion(std::span<const double> indicators, double level) {
  EstimateCI e;
  e.level = level;
  e.count = indicators.size();
  if (indicators.empty()) throw InsufficientDataError("no samples");
  const double n = static_cast<double>(indicators.size());
  const double p = std::accumulate(indicators.begin(), indicators.end(), 0.0) / n;
  e.estimate = p;
  e.ess = effective_sample_size(indicators);
  e.standard_error = std::sqrt(p * (1.0 - p) / e.ess);
  const double z = z_for_level(level);
  const double z2n = z * z / e.ess;
  const double centre = (p + 0.5 * z2n) / (1.0 + z2n);
  const double half =
      z * std::sqrt(p * (1.0 - p) / e.ess + 0.25 * z2n / e.ess) / (1.0 + z2n);
  e.lower = std::max(0.0, centre - half);
  e.upper = std::min(1.0, centre + half);
  return e;
}

double joint_half_width(const EstimateCI& a, const EstimateCI& b) {
  return z_for_level(a.level) * std::hypot(a.standard_error, b.standard_error);
}

double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InsufficientDataError("KS test needs samples");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double na = static_cast<double>(x.size()), nb = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(double(i) / na - double(j) / nb));
  }
  return d;
}

double ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw InsufficientDataError("KS test needs samples");
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, double(i + 1) / n - f, f - double(i) / n});
  }
  return d;
}

double ks_p_value(double statistic, double n_eff) {
  const double s = std::sqrt(n_eff);
  return kolmogorov_survival((s + 0.12 + 0.11 / s) * statistic);
}

namespace {

// sup_x (F_a(x) - F_b(x)) over the pooled sample, floored at 0.
double signed_sup(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, double(i) / na - double(j) / nb);
  }
  return d;
}

void check_sample(std::span<const double> s) {
  if (s.empty()) throw DomainError("dominance test needs non-empty samples");
  for (double v : s) {
    if (!std::isfinite(v)) throw DomainError("dominance test needs finite samples");
  }
}

}  // namespace

DominanceResult dominance_test(std::span<const double> lo, std::span<const double> hi,
                               Direction direction, std::size_t bootstrap, std::uint64_t seed,
                               double alpha) {
  check_sample(lo);
  check_sample(hi);
  // The claimed dominator has the smaller CDF; evidence against the claim is
  // a positive excess of its CDF over the other's.
  std::span<const double> dom = direction == Direction::hi_dominates_lo ? hi : lo;
  std::span<const double> other = direction == Direction::hi_dominates_lo ? lo : hi;
  DominanceResult out;
  out.statistic = signed_sup({dom.begin(), dom.end()}, {other.begin(), other.end()});
  std::vector<double> pool(dom.begin(), dom.end());
  pool.insert(pool.end(), other.begin(), other.end());
  std::sort(pool.begin(), pool.end());
  RandomStream rng(seed);
  std::size_t exceed = 0;
  std::vector<double> a(dom.size()), b(other.size());
  for (std::size_t r = 0; r < bootstrap; ++r) {
    for (auto& v : a) v = pool[rng.next_u64() % pool.size()];
    for (auto& v : b) v = pool[rng.next_u64() % pool.size()];
    if (signed_sup(a, b) >= out.statistic) ++exceed;
  }
  out.p_value = double(exceed + 1) / double(bootstrap + 1);
  out.accepted = out.p_value > alpha;
  return out;
}

EstimateCI estimate_curved_max(std::span<const Ensemble> samples, double alpha, Window window,
                               double level, double min_ess) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw DomainError("alpha must lie in (0, 1/2)");
  std::vector<double> values;
  values.reserve(samples.size());
  for (const auto& e : samples) values.push_back(curved_max(e.lines.at(0), e.grid, alpha, window));
  if (values.empty()) throw InsufficientDataError("no samples");
  EstimateCI est = estimate_mean(values, level);
  if (est.ess < min_ess) {
    throw InsufficientDataError("effective sample size " + std::to_string(est.ess) +
                                " is below the required " + std::to_string(min_ess));
  }
  return est;
}

MaxTailTable max_tail_scan(const std::vector<std::vector<double>>& maxima,
                           const std::vector<std::size_t>& k_list,
                           const std::vector<double>& M_list, double lambda, double level) {
  if (k_list.empty() || M_list.empty()) throw DomainError("empty scan lists");
  if (maxima.size() != k_list.size()) throw ShapeError("one maxima series per k required");
  MaxTailTable table;
  const double m_min = *std::min_element(M_list.begin(), M_list.end());
  for (std::size_t c = 0; c < k_list.size(); ++c) {
    const std::size_t k = k_list[c];
    if (k == 0) throw DomainError("line index k must be >= 1");
    if (maxima[c].empty()) throw InsufficientDataError("no samples");
    for (double M : M_list) {
      if (!(M > 0.0)) throw DomainError("M must be positive");
      TailCell cell;
      cell.k = k;
      cell.M = M;
      cell.threshold = event_threshold(k, M, lambda);
      std::vector<double> ind(maxima[c].size());
      double hits = 0.0;
      for (std::size_t r = 0; r < ind.size(); ++r) {
        ind[r] = maxima[c][r] > cell.threshold ? 1.0 : 0.0;
        hits += ind[r];
      }
      cell.probability = estimate_proportion(ind, level);
      cell.sparse = hits < 10.0;
      table.fitted_C = std::max(table.fitted_C, M * cell.probability.upper);
      if (M == m_min) table.reference_C = std::max(table.reference_C, M * cell.probability.upper);
      table.cells.push_back(cell);
    }
  }
  table.single_constant_fits = true;
  for (const auto& cell : table.cells) {
    if (cell.probability.lower > table.reference_C / cell.M) table.single_constant_fits = false;
  }
  return table;
}

MaxTailTable max_tail_scan(std::span<const Ensemble> samples,
                           const std::vector<std::size_t>& k_list,
                           const std::vector<double>& M_list, Window window, double lambda,
                           double level) {
  if (samples.empty()) throw InsufficientDataError("no samples");
  std::vector<std::vector<double>> maxima;
  for (std::size_t k : k_list) {
    if (k == 0) throw DomainError("line index k must be >= 1");
    std::vector<double> col;
    col.reserve(samples.size());
    for (const auto& e : samples) {
      if (e.line_count() < k) throw DomainError("ensemble has too few lines");
      col.push_back(window_max(e.lines[k - 1], e.grid, window));
    }
    maxima.push_back(std::move(col));
  }
  return max_tail_scan(maxima, k_list, M_list, lambda, level);
}

GapTable gap_tail(std::span<const double> gaps, const std::vector<double>& delta_list,
                  double level) {
  if (gaps.empty()) throw InsufficientDataError("no samples");
  if (delta_list.empty()) throw DomainError("empty threshold list");
  GapTable table;
  double largest = -1.0;
  for (double delta : delta_list) {
    if (!(delta >= 0.0)) throw DomainError("gap thresholds must be >= 0");
    std::vector<double> ind(gaps.size());
    for (std::size_t r = 0; r < gaps.size(); ++r) ind[r] = gaps[r] <= delta ? 1.0 : 0.0;
    table.cells.push_back({delta, estimate_proportion(ind, level)});
    if (delta > largest) {
      largest = delta;
      table.reference_C = delta > 0.0 ? table.cells.back().probability.upper / delta : 0.0;
    }
  }
  std::vector<GapCell> sorted = table.cells;
  std::sort(sorted.begin(), sorted.end(),
            [](const GapCell& a, const GapCell& b) { return a.delta < b.delta; });
  table.monotone = true;
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].probability.estimate < sorted[i - 1].probability.estimate) {
      table.monotone = false;
    }
  }
  table.linear_bound = true;
  for (const auto& cell : table.cells) {
    if (cell.delta > 0.0 && cell.probability.lower / cell.delta > table.reference_C) {
      table.linear_bound = false;
    }
  }
  return table;
}

GapTable gap_tail(std::span<const Ensemble> samples, std::size_t k, Window window,
                  const std::vector<double>& delta_list, double level) {
  if (k < 2) throw DomainError("gap tail needs k >= 2");
  if (samples.empty()) throw InsufficientDataError("no samples");
  std::vector<double> gaps;
  gaps.reserve(samples.size());
  for (const auto& e : samples) gaps.push_back(min_gap(e, window, k));
  return gap_tail(gaps, delta_list, level);
}

EstimateCI modulus_tail(std::span<const Ensemble> samples, std::size_t k, Window window,
                        double eta, double delta, double level) {
  if (!(eta >= 0.0) || !(delta > 0.0)) throw DomainError("modulus tail needs eta >= 0, delta > 0");
  if (samples.empty()) throw InsufficientDataError("no samples");
  std::vector<double> ind;
  ind.reserve(samples.size());
  for (const auto& e : samples) ind.push_back(modulus(e, window, delta, k) >= eta ? 1.0 : 0.0);
  return estimate_proportion(ind, level);
}

}  // namespace tiltline
