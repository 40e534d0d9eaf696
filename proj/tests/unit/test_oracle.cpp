#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "tiltline/errors.hpp"
#include "tiltline/oracle.hpp"

using namespace tiltline;

namespace {

SamplerConfig fixed_config(std::vector<double> x, std::vector<double> y, TimeGrid grid,
                           TiltSchedule tilts) {
  SamplerConfig c;
  c.n = x.size();
  c.grid = grid;
  c.tilts = std::move(tilts);
  c.boundary = FixedBoundary{std::move(x), std::move(y)};
  return c;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST_CASE("Gregory weights integrate low-order polynomials exactly") {
  const std::size_t count = 41;
  const double h = 0.05;
  const auto w = gregory_weights(count, h);
  for (int p = 0; p <= 3; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < count; ++i) s += w[i] * std::pow(double(i) * h, p);
    CHECK(s == doctest::Approx(std::pow(2.0, p + 1) / (p + 1)).epsilon(1e-12));
  }
  const auto t = gregory_weights(5, 1.0);
  CHECK(t == std::vector<double>{0.5, 1.0, 1.0, 1.0, 0.5});
}

TEST_CASE("single line partition functions") {
  const TimeGrid g(0.0, 1.0, 5);
  auto c = fixed_config({1.0}, {1.0}, g, TiltSchedule::none());
  CHECK(rel(brute_partition(c), 0.38187416432719856) < 1e-6);
  c.tilts = TiltSchedule::constants({1.0});
  CHECK(rel(brute_partition(c), 0.1417903740164484) < 1e-6);
  auto d = fixed_config({1.5}, {0.5}, TimeGrid(-1.0, 1.0, 6), TiltSchedule::constants({1.0}));
  CHECK(rel(brute_partition(d), 0.02214356588261397) < 1e-6);
  CHECK(log_brute_partition(d) == doctest::Approx(std::log(brute_partition(d))));
}

TEST_CASE("two line partition functions") {
  const TimeGrid g(0.0, 1.0, 4);
  auto c = fixed_config({2.0, 1.0}, {2.0, 1.0}, g, TiltSchedule::none());
  CHECK(rel(brute_partition(c), 0.13117851528545538) < 1e-5);
  auto d = fixed_config({1.5, 0.5}, {1.0, 0.7}, g, TiltSchedule::none());
  OracleOptions fine;
  fine.spacing = 0.5 / 12.0;
  CHECK(rel(brute_partition(d, fine), 0.06646055871456398) < 1e-6);
}

TEST_CASE("discrete positive bridge from the wall survives with probability 1/m") {
  SamplerConfig c;
  c.n = 1;
  c.grid = TimeGrid(0.0, 1.0, 20);
  c.tilts = TiltSchedule::none();
  c.boundary = ZeroBoundary{};
  CHECK(brute_partition(c) / kernel_q(1.0, 0.0, 0.0) == doctest::Approx(0.05).epsilon(1e-5));
}

TEST_CASE("shifted-barrier correction approaches the discrete partition function") {
  const double beta = 0.5825971579390106;
  const std::size_t m = 400;
  const auto c = fixed_config({1.0}, {1.0}, TimeGrid(0.0, 1.0, m), TiltSchedule::none());
  const double shift = beta * std::sqrt(1.0 / double(m));
  const double corrected =
      kernel_q(1.0, 1.0, 1.0) * reflection_positive_prob(1.0 + shift, 1.0 + shift, 1.0);
  const double plain = kernel_q(1.0, 1.0, 1.0) * reflection_positive_prob(1.0, 1.0, 1.0);
  const double z = brute_partition(c);
  CHECK(rel(z, corrected) < 1e-5);
  CHECK(rel(z, plain) > 1e-2);
}

TEST_CASE("partition function decreases in the tilt") {
  const TimeGrid g(-1.0, 1.0, 10);
  double last = std::numeric_limits<double>::infinity();
  for (double rho : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    const double z = brute_partition(fixed_config({1.0}, {0.5}, g, TiltSchedule::constants({rho})));
    CHECK(z < last);
    last = z;
  }
}

TEST_CASE("default resolution is converged") {
  auto c = fixed_config({1.0}, {1.0}, TimeGrid(-1.0, 1.0, 40), TiltSchedule::constants({1.0}));
  const auto coarse = default_space_grid(c);
  OracleOptions fine;
  fine.spacing = coarse.spacing() / 2.0;
  CHECK(rel(brute_partition(c, fine), brute_partition(c)) < 1e-6);
  auto two = fixed_config({2.0, 1.0}, {2.0, 1.0}, TimeGrid(0.0, 1.0, 20), TiltSchedule::none());
  OracleOptions base;
  base.x_max = 8.0;
  OracleOptions fine2 = base;
  fine2.spacing = default_space_grid(two, base).spacing() / 2.0;
  CHECK(rel(brute_partition(two, fine2), brute_partition(two, base)) < 1e-6);
}

TEST_CASE("marginals are normalized and time symmetric") {
  const TimeGrid g(-1.0, 1.0, 20);
  const auto c = fixed_config({1.0}, {1.0}, g, TiltSchedule::constants({1.0}));
  const auto table = transfer_marginals(c);
  CHECK(table.lines == 1);
  CHECK(table.boundary_mass < 1e-10);
  CHECK(table.pinned[0][0] == std::optional<double>(1.0));
  const auto w = table.space.weights();
  for (std::size_t j = 1; j < g.steps(); ++j) {
    const auto& d = table.density[j][0];
    CHECK(std::inner_product(d.begin(), d.end(), w.begin(), 0.0) == doctest::Approx(1.0));
    CHECK(table.mean(j, 0) == doctest::Approx(table.mean(g.steps() - j, 0)).epsilon(1e-9));
  }
  CHECK(table.mean(0, 0) == 1.0);
  CHECK(table.cdf(10, 0, 0.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(table.cdf(10, 0, table.space.x_max) == doctest::Approx(1.0));
  CHECK(table.cdf(10, 0, 0.5) <= table.cdf(10, 0, 1.0));
  std::ostringstream csv;
  table.write_csv(csv);
  CHECK(csv.str().rfind("node_time,line,x,density", 0) == 0);
}

TEST_CASE("a stronger tilt lowers the mean") {
  const TimeGrid g(-1.0, 1.0, 20);
  const auto weak = transfer_marginals(fixed_config({1.0}, {1.0}, g, TiltSchedule::constants({1.0})));
  const auto strong =
      transfer_marginals(fixed_config({1.0}, {1.0}, g, TiltSchedule::constants({2.0})));
  for (std::size_t j = 1; j < g.steps(); ++j) CHECK(strong.mean(j, 0) < weak.mean(j, 0));
}

TEST_CASE("oracle refusals") {
  const TimeGrid g(0.0, 1.0, 10);
  auto c = fixed_config({3.0, 2.0, 1.0}, {3.0, 2.0, 1.0}, g, TiltSchedule::none());
  CHECK_THROWS_AS(brute_partition(c), CostGuardError);
  auto d = fixed_config({1.0}, {1.0}, g, TiltSchedule::none());
  OracleOptions tiny;
  tiny.cost_limit = 10.0;
  CHECK_THROWS_AS(brute_partition(d, tiny), CostGuardError);
  OracleOptions narrow;
  narrow.x_max = 1.5;
  CHECK_THROWS_AS(transfer_marginals(d, narrow), DomainError);
  auto f = d;
  f.floor = Path(g.size(), 0.0);
  CHECK_THROWS_AS(brute_partition(f), DomainError);
  auto e = d;
  e.ceiling = Path(g.size(), 5.0);
  CHECK_THROWS_AS(brute_partition(e), DomainError);
}

TEST_CASE("Karlin-McGregor frozen values") {
  const std::vector<double> x = {3.0, 1.5, 0.2};
  const auto a = km_prob(x, std::vector<double>{2.5, 1.0, -0.4}, 1.2, false);
  CHECK(a.probability == doctest::Approx(0.63852587703880786).epsilon(1e-12));
  CHECK_FALSE(a.ill_conditioned);
  const auto b = km_prob(x, std::vector<double>{2.5, 1.0, 0.4}, 1.2, true);
  CHECK(b.probability == doctest::Approx(0.0135654251887576967).epsilon(1e-12));
  const auto c = km_prob(std::vector<double>{2.0, 1.0}, std::vector<double>{2.0, 1.0}, 1.0, true);
  CHECK(c.probability == doctest::Approx(0.509847697087889214).epsilon(1e-12));
}

TEST_CASE("Karlin-McGregor two lines closed form") {
  RandomStream rng(4);
  for (int r = 0; r < 50; ++r) {
    const double x2 = 3.0 * rng.uniform(), y2 = 3.0 * rng.uniform();
    const double x1 = x2 + 0.1 + 2.0 * rng.uniform(), y1 = y2 + 0.1 + 2.0 * rng.uniform();
    const double t = 0.2 + 2.0 * rng.uniform();
    const auto k = km_prob(std::vector<double>{x1, x2}, std::vector<double>{y1, y2}, t, false);
    CHECK(k.probability ==
          doctest::Approx(-std::expm1(-(x1 - x2) * (y1 - y2) / t)).epsilon(1e-11));
  }
  CHECK(km_prob(std::vector<double>{2.0, 1.0}, std::vector<double>{3.0, 0.5}, 1.5, false)
            .probability == doctest::Approx(0.811124397162438).epsilon(1e-13));
}

TEST_CASE("one line against the wall is the reflection formula") {
  RandomStream rng(9);
  for (int r = 0; r < 100; ++r) {
    const double x = 0.05 + 3.0 * rng.uniform();
    const double y = 0.05 + 3.0 * rng.uniform();
    const double t = 0.05 + 3.0 * rng.uniform();
    const auto k = km_prob(std::vector<double>{x}, std::vector<double>{y}, t, true);
    CHECK(std::abs(k.probability - reflection_positive_prob(x, y, t)) < 1e-12);
  }
}

TEST_CASE("Karlin-McGregor limits and refusals") {
  const std::vector<double> x = {3.0, 2.0, 1.0};
  CHECK(km_prob(x, x, 1e-3, true).probability == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(km_prob(x, x, 1e-3, false).probability == doctest::Approx(1.0).epsilon(1e-12));
  const auto far = km_prob(x, x, 400.0, true);
  CHECK(far.probability >= 0.0);
  CHECK(far.probability < 1e-6);
  CHECK_THROWS_AS(km_prob(std::vector<double>{1.0, 2.0}, std::vector<double>{2.0, 1.0}, 1.0, false),
                  DomainError);
  CHECK_THROWS_AS(km_prob(std::vector<double>{1.0, -1.0}, std::vector<double>{2.0, 1.0}, 1.0, true),
                  DomainError);
  CHECK_THROWS_AS(km_prob(x, std::vector<double>{2.0, 1.0}, 1.0, false), ShapeError);
  CHECK_THROWS_AS(km_prob(x, x, 0.0, false), DomainError);
}

TEST_CASE("killed density against the wall kernel") {
  const double x = 1.3, z = 0.4, t = 0.7;
  CHECK(killed_density(std::vector<double>{x}, std::vector<double>{z}, t) ==
        doctest::Approx(kernel_q(t, x, z) - kernel_q(t, x, -z)));
  const std::vector<double> a = {2.0, 1.0}, b = {2.5, 0.5};
  CHECK(killed_density(a, b, 1.0) ==
        doctest::Approx(km_prob(a, b, 1.0, true).probability * kernel_q(1.0, 2.0, 2.5) *
                        kernel_q(1.0, 1.0, 0.5)));
}

TEST_CASE("Harnack ratio for the killed chamber") {
  for (std::size_t k : {1, 2, 3}) {
    const auto r = harnack_ratio_check(k, 1.0, 2.0, 400, 3);
    CHECK(r.samples == 400);
    CHECK(std::isfinite(r.spread()));
    CHECK(r.min_ratio > 0.0);
    // Doubling the time range of the box barely changes the spread.
    const auto wider = harnack_ratio_check(k, 1.0, 4.0, 400, 3);
    CHECK(std::isfinite(wider.spread()));
  }
  // A function that misses the chamber's vanishing order is not comparable.
  const auto bad = harnack_ratio_check(
      2, 1.0, 2.0, 400, 3, [](std::span<const double> v) { return v[0] + v[1]; });
  CHECK(bad.spread() > 100.0 * harnack_ratio_check(2, 1.0, 2.0, 400, 3).spread());
  CHECK_THROWS_AS(harnack_ratio_check(2, 0.1, 2.0, 10, 3), DomainError);
  CHECK_THROWS_AS(harnack_ratio_check(0, 1.0, 2.0, 10, 3), DomainError);
}

TEST_CASE("exact line sampler matches the transfer oracle") {
  const TimeGrid g(0.0, 1.0, 10);
  ExactLineSampler s(g, 1.0, 1.0, 1.0);
  RandomStream rng(21);
  const std::size_t reps = 40000;
  double sum = 0.0, sq = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    const Path p = s.sample(rng);
    REQUIRE(p.front() == 1.0);
    REQUIRE(p.back() == 1.0);
    REQUIRE(*std::min_element(p.begin(), p.end()) >= 0.0);
    sum += p[5];
    sq += p[5] * p[5];
  }
  const double mean = sum / reps;
  const double sd = std::sqrt(sq / reps - mean * mean);
  const auto table = transfer_marginals(fixed_config({1.0}, {1.0}, g, TiltSchedule::constants({1.0})));
  CHECK(std::abs(mean - table.mean(5, 0)) < 5.0 * sd / std::sqrt(double(reps)));
  CHECK(s.attempts() >= reps);
  CHECK_THROWS_AS(ExactLineSampler(g, -1.0, 1.0, 1.0), DomainError);
}
