#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "tiltline/errors.hpp"
#include "tiltline/sampler.hpp"
#include "tiltline/stats.hpp"

using namespace tiltline;

namespace {

std::vector<double> ar1(double phi, std::size_t n, std::uint64_t seed) {
  RandomStream rng(seed);
  std::vector<double> x(n);
  double v = rng.normal() / std::sqrt(1.0 - phi * phi);
  for (auto& e : x) {
    v = phi * v + rng.normal();
    e = v;
  }
  return x;
}

std::vector<double> normals(std::size_t n, std::uint64_t seed, double shift = 0.0) {
  RandomStream rng(seed);
  std::vector<double> x(n);
  for (auto& e : x) e = rng.normal() + shift;
  return x;
}

SamplerConfig zero_config(std::size_t n, double half_width) {
  SamplerConfig c;
  c.n = n;
  c.grid = TimeGrid::with_spacing(-half_width, half_width, 0.1);
  c.block_len = 11;
  c.max_rejections = 1000;
  c.burnin = 20;
  return c;
}

}  // namespace

TEST_CASE("normal quantile") {
  CHECK(z_for_level(0.99) == doctest::Approx(2.5758293035489004).epsilon(1e-12));
  CHECK(z_for_level(0.95) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK_THROWS_AS(z_for_level(1.0), DomainError);
}

TEST_CASE("effective sample size") {
  const auto iid = normals(100000, 1);
  CHECK(effective_sample_size(iid) > 90000.0);
  const auto x = ar1(0.5, 200000, 2);
  CHECK(autocorrelation_time(x) == doctest::Approx(1.0).epsilon(0.1));
  CHECK(effective_sample_size(x) == doctest::Approx(200000.0 / 3.0).epsilon(0.1));
  const auto y = ar1(0.9, 200000, 3);
  CHECK(effective_sample_size(y) == doctest::Approx(200000.0 / 19.0).epsilon(0.15));
  const std::vector<double> constant(50, 2.0);
  CHECK(effective_sample_size(constant) == 50.0);
  const auto m = estimate_mean(constant);
  CHECK(m.estimate == 2.0);
  CHECK(m.lower == 2.0);
  CHECK(m.upper == 2.0);
  CHECK_THROWS_AS(estimate_mean(std::vector<double>{}), InsufficientDataError);
}

TEST_CASE("mean intervals cover at the nominal rate") {
  int covered = 0;
  const int reps = 400;
  for (int r = 0; r < reps; ++r) {
    const auto x = ar1(0.6, 4000, 100 + r);
    const auto ci = estimate_mean(x);
    if (ci.lower <= 0.0 && 0.0 <= ci.upper) ++covered;
  }
  CHECK(covered >= 388);
}

TEST_CASE("Wilson interval") {
  std::vector<double> ind(200, 0.0);
  std::fill(ind.begin(), ind.begin() + 60, 1.0);
  RandomStream rng(1);
  for (std::size_t i = ind.size() - 1; i > 0; --i) std::swap(ind[i], ind[rng.next_u64() % (i + 1)]);
  const auto ci = estimate_proportion(ind);
  CHECK(ci.estimate == doctest::Approx(0.3));
  REQUIRE(ci.ess == 200.0);
  CHECK(ci.lower == doctest::Approx(0.22405567341678304).epsilon(1e-12));
  CHECK(ci.upper == doctest::Approx(0.38878803635375414).epsilon(1e-12));
  const auto none = estimate_proportion(std::vector<double>(100, 0.0));
  CHECK(none.lower == 0.0);
  CHECK(none.upper > 0.0);
  EstimateCI a, b;
  a.standard_error = 3.0;
  b.standard_error = 4.0;
  CHECK(joint_half_width(a, b) == doctest::Approx(5.0 * 2.5758293035489004));
}

TEST_CASE("Kolmogorov distribution") {
  CHECK(kolmogorov_survival(1.0) == doctest::Approx(0.269999671677354521).epsilon(1e-12));
  CHECK(kolmogorov_survival(0.5) == doctest::Approx(0.963945243664875094).epsilon(1e-12));
  CHECK(kolmogorov_survival(1.5) == doctest::Approx(0.0222179626165251287).epsilon(1e-12));
  CHECK(kolmogorov_survival(0.0) == 1.0);
  const double n = 400.0;
  const double d = 1.0 / (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n));
  CHECK(ks_p_value(d, n) == doctest::Approx(0.269999671677354521).epsilon(1e-9));
}

TEST_CASE("KS statistics") {
  const auto a = normals(20000, 5);
  CHECK(ks_statistic(a, a) == 0.0);
  const auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
  const double d = ks_statistic(a, cdf);
  CHECK(d < 0.015);
  CHECK(ks_p_value(d, 20000.0) > 0.001);
  const auto shifted = normals(20000, 6, 0.2);
  CHECK(ks_statistic(shifted, cdf) > 0.05);
  CHECK(ks_statistic(a, shifted) > 0.05);
  const std::vector<double> one = {0.0};
  CHECK(ks_statistic(one, cdf) == doctest::Approx(0.5));
}

TEST_CASE("dominance test") {
  const auto lo = normals(3000, 7);
  const auto hi = normals(3000, 8, 0.3);
  const auto right = dominance_test(lo, hi, Direction::hi_dominates_lo, 499);
  CHECK(right.accepted);
  const auto wrong = dominance_test(lo, hi, Direction::lo_dominates_hi, 499);
  CHECK_FALSE(wrong.accepted);
  CHECK(wrong.p_value < 0.01);
  CHECK(dominance_test(hi, lo, Direction::lo_dominates_hi, 499).statistic ==
        doctest::Approx(right.statistic));
  CHECK(dominance_test(hi, lo, Direction::hi_dominates_lo, 499).statistic ==
        doctest::Approx(wrong.statistic));
  const auto same = dominance_test(lo, lo, Direction::hi_dominates_lo, 199);
  CHECK(same.statistic == 0.0);
  CHECK(same.p_value == 1.0);
  CHECK_THROWS_AS(dominance_test(std::vector<double>{}, hi, Direction::hi_dominates_lo),
                  DomainError);
}

TEST_CASE("max tail table") {
  // Pareto maxima: P(X > u) = 1 / u for u >= 1.
  RandomStream rng(9);
  std::vector<double> x(20000);
  for (auto& v : x) v = 1.0 / (1.0 - rng.uniform());
  const std::vector<std::vector<double>> maxima = {x, x};
  const auto t = max_tail_scan(maxima, {1, 2}, {2.0, 4.0, 8.0}, 2.0);
  REQUIRE(t.cells.size() == 6);
  CHECK(t.cells[0].threshold == 2.0);
  CHECK(t.cells[3].threshold == doctest::Approx(2.0 * std::pow(2.0, -1.0 / 3.0)));
  CHECK(t.cells[0].probability.estimate > t.cells[1].probability.estimate);
  CHECK(t.cells[1].probability.estimate > t.cells[2].probability.estimate);
  CHECK(t.fitted_C >= t.reference_C);
  CHECK(t.reference_C == doctest::Approx(2.0 * t.cells[3].probability.upper));
  CHECK(t.single_constant_fits);
  // Tails heavier than 1/M break the single constant.
  std::vector<double> heavy(20000);
  for (std::size_t i = 0; i < heavy.size(); ++i) heavy[i] = i % 2 ? 10.0 : 0.0;
  const auto h = max_tail_scan({heavy}, {1}, {0.5, 4.0}, 2.0);
  CHECK_FALSE(h.single_constant_fits);
  const auto sparse = max_tail_scan({x}, {1}, {4000.0}, 2.0);
  CHECK(sparse.cells[0].sparse);
  CHECK_THROWS_AS(max_tail_scan({x}, {1, 2}, {1.0}, 2.0), ShapeError);
  CHECK_THROWS_AS(max_tail_scan({x}, {0}, {1.0}, 2.0), DomainError);
}

TEST_CASE("gap tail table") {
  RandomStream rng(10);
  std::vector<double> gaps(20000);
  for (auto& g : gaps) g = rng.uniform();
  const auto t = gap_tail(gaps, {0.4, 0.2, 0.1, 0.05});
  CHECK(t.monotone);
  CHECK(t.linear_bound);
  CHECK(t.cells[0].probability.estimate == doctest::Approx(0.4).epsilon(0.05));
  CHECK(t.reference_C == doctest::Approx(t.cells[0].probability.upper / 0.4));
  // Mass piled at zero is not linear in delta.
  std::vector<double> stuck(20000);
  for (std::size_t i = 0; i < stuck.size(); ++i) stuck[i] = i % 4 == 0 ? 0.001 : 1.0;
  CHECK_FALSE(gap_tail(stuck, {0.4, 0.01}).linear_bound);
  CHECK_THROWS_AS(gap_tail(gaps, {-0.1}), DomainError);
  CHECK_THROWS_AS(gap_tail(std::vector<double>{}, {0.1}), InsufficientDataError);
}

TEST_CASE("threshold events") {
  ThresholdEvent e;
  e.conditions = {{1, 0.0, 0.5, true}, {2, 0.5, 0.1, true}};
  CHECK(e.increasing());
  const TimeGrid g(-1.0, 1.0, 4);
  Ensemble high{g, {{0.0, 2.0, 2.0, 2.0, 0.0}, {0.0, 1.0, 1.0, 1.0, 0.0}}};
  CHECK(e.holds(high));
  high.lines[1][3] = 0.05;
  CHECK_FALSE(e.holds(high));
  const auto s = e.shifted(1.0);
  CHECK(s.conditions[0].time == 1.0);
  CHECK(s.conditions[1].time == 1.5);
  ThresholdEvent down;
  down.conditions = {{1, 0.0, 0.5, false}};
  CHECK_FALSE(down.increasing());
}

TEST_CASE("monotone scan refusals") {
  ThresholdEvent e;
  e.conditions = {{1, 0.0, 0.5, true}};
  const std::vector<SamplerConfig> ok = {zero_config(1, 1.0), zero_config(2, 1.5)};
  ThresholdEvent down;
  down.conditions = {{1, 0.0, 0.5, false}};
  CHECK_THROWS_AS(monotone_scan(ok, down, 10), DomainError);
  CHECK_THROWS_AS(monotone_scan({zero_config(2, 1.5), zero_config(1, 1.0)}, e, 10), DomainError);
  CHECK_THROWS_AS(monotone_scan({zero_config(1, 1.0), zero_config(1, 1.0)}, e, 10), DomainError);
  auto fixed = zero_config(1, 1.0);
  fixed.boundary = FixedBoundary{{1.0}, {1.0}};
  CHECK_THROWS_AS(monotone_scan({fixed}, e, 10), DomainError);
  ThresholdEvent off;
  off.conditions = {{1, 0.05, 0.5, true}};
  CHECK_THROWS_AS(monotone_scan(ok, off, 10), DomainError);
  ThresholdEvent deep;
  deep.conditions = {{2, 0.0, 0.5, true}};
  CHECK_THROWS_AS(monotone_scan(ok, deep, 10), DomainError);
}

TEST_CASE("monotone scan on a small family") {
  ThresholdEvent e;
  e.conditions = {{1, 0.0, 0.5, true}};
  const auto r = monotone_scan({zero_config(1, 0.5), zero_config(2, 1.0), zero_config(3, 1.5)},
                               e, 4000);
  REQUIRE(r.settings.size() == 3);
  CHECK(r.settings[0].estimate.estimate < r.settings[2].estimate.estimate);
  CHECK(r.non_decreasing);
}

TEST_CASE("Gibbs consistency") {
  const GibbsSampler s(zero_config(2, 1.0));
  auto state = s.initial_state();
  std::vector<Ensemble> stored;
  for (int k = 0; k < 100; ++k) s.sweep(state);
  for (int k = 0; k < 3000; ++k) {
    s.sweep(state);
    stored.push_back(state.ensemble);
  }
  const auto trivial = gibbs_consistency(s, stored, 0.0, 0.1);
  CHECK(trivial.outside_identical);
  CHECK(trivial.passed);
  CHECK(trivial.pairs == stored.size());
  CHECK_THROWS_AS(gibbs_consistency(s, stored, 0.05, 0.5), DomainError);
  CHECK_THROWS_AS(gibbs_consistency(s, stored, 0.5, 0.0), DomainError);
  const auto r = gibbs_consistency(s, stored, -0.5, 0.5);
  CHECK(r.outside_identical);
  REQUIRE(r.p_values.size() == 2);
  CHECK(r.midpoint_before[0].size() == stored.size());
  CHECK(r.passed);
}

TEST_CASE("estimators over stored ensembles") {
  const TimeGrid g(-1.0, 1.0, 4);
  std::vector<Ensemble> few(5, Ensemble{g, {{0.0, 2.0, 2.0, 2.0, 0.0}, {0.0, 1.0, 0.5, 1.0, 0.0}}});
  CHECK_THROWS_AS(estimate_curved_max(few, 0.25, {-1.0, 1.0}), InsufficientDataError);
  const auto c = estimate_curved_max(few, 0.25, {-1.0, 1.0}, 0.99, 1.0);
  CHECK(c.estimate == doctest::Approx(2.0));
  const auto m = modulus_tail(few, 1, {-1.0, 1.0}, 1.5, 0.6);
  CHECK(m.estimate == 1.0);
  const auto gt = gap_tail(few, 2, {-0.5, 0.5}, {1.0, 2.0});
  CHECK(gt.cells[0].probability.estimate == 1.0);
  CHECK_THROWS_AS(gap_tail(few, 1, {-0.5, 0.5}, {1.0}), DomainError);
}
