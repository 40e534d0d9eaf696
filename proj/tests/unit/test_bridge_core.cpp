#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "tiltline/bridge_core.hpp"
#include "tiltline/errors.hpp"

using namespace tiltline;

TEST_CASE("time grid nodes") {
  const TimeGrid g(-1.0, 1.0, 40);
  CHECK(g.dt() == doctest::Approx(0.05));
  CHECK(g.time(0) == -1.0);
  CHECK(g.time(40) == 1.0);
  CHECK(g.node_at(0.0) == std::optional<std::size_t>(20));
  CHECK_FALSE(g.node_at(0.01).has_value());
  const auto [f, l] = g.nodes_in(-0.5, 0.5);
  CHECK(f == 10);
  CHECK(l == 30);
  CHECK_THROWS_AS(g.nodes_in(0.01, 0.02), DomainError);
  CHECK(TimeGrid(-1.0, 1.0, 80).contains_nodes_of(g));
  CHECK_FALSE(g.contains_nodes_of(TimeGrid(-1.0, 1.0, 80)));
  CHECK(g.shifted(1.0).time(20) == doctest::Approx(1.0));
  CHECK_THROWS_AS(TimeGrid(1.0, 1.0, 4), DomainError);
  CHECK_THROWS_AS(TimeGrid(0.0, 1.0, 0), DomainError);
  CHECK_THROWS_AS(TimeGrid::with_spacing(0.0, 1.0, 0.3), DomainError);
  CHECK(TimeGrid::with_spacing(-2.0, 2.0, 0.05).steps() == 80);
}

TEST_CASE("tilt schedules") {
  const TimeGrid g(0.0, 1.0, 4);
  const auto geo = TiltSchedule::geometric(1.0, 2.0);
  CHECK(geo.constant_rho(0) == 1.0);
  CHECK(geo.constant_rho(3) == 8.0);
  CHECK_THROWS_AS(TiltSchedule::geometric(0.0, 2.0), DomainError);
  CHECK_THROWS_AS(TiltSchedule::geometric(1.0, 1.0), DomainError);
  CHECK_THROWS_AS(TiltSchedule::constants({1.0, -0.1}), DomainError);
  CHECK(TiltSchedule::none().weights_for(5, g) == Path(5, 0.0));
  CHECK(TiltSchedule::geometric(2.0, 2.0).dominates(geo, 3, g));
  CHECK_FALSE(geo.dominates(TiltSchedule::geometric(2.0, 2.0), 3, g));
  CHECK_THROWS_AS(TiltSchedule::weights({Path(3, 1.0)}).weights_for(0, g), ShapeError);
}

TEST_CASE("Brownian kernel") {
  CHECK(kernel_q(1.0, 0.0, 1.0) == doctest::Approx(0.241970724519143349).epsilon(1e-14));
  CHECK(kernel_q(1.0, 0.0, 0.0) == doctest::Approx(0.398942280401432678).epsilon(1e-14));
  CHECK(kernel_q(2.0, 0.0, 0.0) == doctest::Approx(0.282094791773878143).epsilon(1e-14));
  CHECK(kernel_q(0.5, 1.0, -0.3) == doctest::Approx(0.104103993398034822).epsilon(1e-14));
  CHECK(kernel_q(0.7, 1.2, -0.4) == kernel_q(0.7, -0.4, 1.2));
  CHECK_THROWS_AS(kernel_q(0.0, 0.0, 0.0), DomainError);
  CHECK_THROWS_AS(kernel_q(-1.0, 0.0, 0.0), DomainError);
}

TEST_CASE("exact bridge moments") {
  const TimeGrid g(0.0, 2.0, 8);
  RandomStream rng(3);
  const std::size_t reps = 40000;
  const std::size_t j = 3;
  double s = 0.0, ss = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    const Path p = sample_bridge(g, 1.0, -1.0, rng);
    REQUIRE(p.front() == 1.0);
    REQUIRE(p.back() == -1.0);
    s += p[j];
    ss += p[j] * p[j];
  }
  const double mean = s / reps;
  const double var = ss / reps - mean * mean;
  const double want_mean = 1.0 - 2.0 * 3.0 / 8.0;
  const double want_var = g.dt() * 3.0 * 5.0 / 8.0;
  CHECK(std::abs(mean - want_mean) < 5.0 * std::sqrt(want_var / reps));
  CHECK(std::abs(var - want_var) < 5.0 * want_var * std::sqrt(2.0 / reps));
}

TEST_CASE("trapezoid area") {
  const TimeGrid g(0.0, 2.0, 10);
  Path line(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) line[j] = 3.0 * g.time(j) + 1.0;
  CHECK(area(line, g) == doctest::Approx(8.0));
  const Path w = trapezoid_weights(g);
  CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(2.0));
  const Path twice(g.size(), 2.0);
  CHECK(area(line, g, twice) == doctest::Approx(16.0));
  CHECK(area(Path(g.size(), 0.0), g) == 0.0);
  CHECK_THROWS_AS(area(Path(3, 0.0), g), ShapeError);
}

TEST_CASE("tilt shift is the parabola for constant tilt") {
  const TimeGrid unit(0.0, 1.0, 20);
  CHECK(tilt_shift(unit, 1.0)[10] == doctest::Approx(-0.125).epsilon(1e-12));
  const TimeGrid sym(-1.0, 1.0, 40);
  const Path m = tilt_shift(sym, 1.0);
  CHECK(m[20] == doctest::Approx(-0.5).epsilon(1e-12));
  for (std::size_t j = 0; j < sym.size(); ++j) {
    const double t = sym.time(j);
    CHECK(m[j] == doctest::Approx(-0.5 * (t + 1.0) * (1.0 - t)).epsilon(1e-10));
  }
  CHECK(m.front() == 0.0);
  CHECK(m.back() == 0.0);
  const Path w(sym.size(), 1.0);
  const Path mw = tilt_shift(sym, w);
  for (std::size_t j = 0; j < sym.size(); ++j) CHECK(mw[j] == doctest::Approx(m[j]));
  CHECK(tilt_shift(sym, 0.0) == Path(sym.size(), 0.0));
  CHECK_THROWS_AS(tilt_shift(sym, -1.0), DomainError);
}

TEST_CASE("tridiagonal bridge precision solve") {
  const double dt = 0.1;
  const std::vector<double> rhs = {0.3, -1.0, 2.0, 0.5, 0.0, -0.7};
  std::vector<double> m(rhs.size());
  solve_bridge_precision(dt, rhs, m);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double left = i ? m[i - 1] : 0.0;
    const double right = i + 1 < m.size() ? m[i + 1] : 0.0;
    CHECK((2.0 * m[i] - left - right) / dt == doctest::Approx(rhs[i]).epsilon(1e-12));
  }
}

TEST_CASE("curved maximum") {
  const TimeGrid g(-1.0, 1.0, 4);
  CHECK(curved_max(Path(5, 0.0), g, 0.25) == 0.0);
  const Path x = {0.0, 1.0, 0.4, 2.0, 0.0};
  // |t|^0.25 at t = -0.5, 0, 0.5: 0.8409, 0, 0.8409
  CHECK(curved_max(x, g, 0.25) == doctest::Approx(2.0 - std::pow(0.5, 0.25)));
  CHECK(curved_max(x, g, 0.25, {-0.5, 0.0}) == doctest::Approx(0.4));
  CHECK_THROWS_AS(curved_max(x, g, 0.5), DomainError);
  CHECK_THROWS_AS(curved_max(x, g, 0.0), DomainError);
  CHECK_THROWS_AS(curved_max(x, TimeGrid(-1.0, 1.0, 3), 0.25), ShapeError);
}

TEST_CASE("gaps, modulus and window maxima") {
  const TimeGrid g(-1.0, 1.0, 4);
  Ensemble e{g, {{0.0, 3.0, 2.0, 3.0, 0.0}, {0.0, 1.0, 1.5, 1.0, 0.0}, {0.0, 0.5, 0.2, 0.1, 0.0}}};
  CHECK(min_gap(e, {-0.5, 0.5}) == doctest::Approx(0.5));
  CHECK(min_gap(e, {-0.5, 0.5}, 2) == doctest::Approx(0.5));
  CHECK(min_gap(e, {0.5, 0.5}, 3) == doctest::Approx(0.9));
  CHECK_THROWS_AS(min_gap(e, {-0.5, 0.5}, 1), DomainError);
  // delta = 0.6 reaches one node over dt = 0.5
  CHECK(modulus(e, {-0.5, 0.5}, 0.6, 1) == doctest::Approx(1.0));
  CHECK(modulus(e, {-0.5, 0.5}, 0.6) == doctest::Approx(1.0));
  CHECK(modulus(e, {-0.5, 0.5}, 0.4) == 0.0);
  CHECK(modulus(e, {-1.0, 1.0}, 1.1, 1) == doctest::Approx(3.0));
  CHECK_THROWS_AS(modulus(e, {-0.5, 0.5}, 0.0), DomainError);
  CHECK(window_max(e.lines[1], g, {-1.0, 0.0}) == 1.5);
}

TEST_CASE("harmonic function and thresholds") {
  CHECK(harmonic_U(std::vector<double>{2.0, 1.0}) == doctest::Approx(6.0));
  CHECK(harmonic_U(std::vector<double>{0.7}) == doctest::Approx(0.7));
  CHECK(harmonic_U(std::vector<double>{3.0, 2.0, 1.0}) == doctest::Approx(6.0 * 5.0 * 8.0 * 3.0));
  CHECK_THROWS_AS(harmonic_U(std::vector<double>{1.0, 2.0}), DomainError);
  CHECK_THROWS_AS(harmonic_U(std::vector<double>{1.0, 0.0}), DomainError);
  CHECK(event_threshold(1, 4.0, 2.0) == 4.0);
  CHECK(event_threshold(4, 8.0, 2.0) == doctest::Approx(4.0));
  CHECK_THROWS_AS(event_threshold(0, 1.0, 2.0), DomainError);
  CHECK_THROWS_AS(event_threshold(1, 1.0, 1.0), DomainError);
}

TEST_CASE("admissibility") {
  const TimeGrid g(0.0, 1.0, 2);
  Ensemble e{g, {{0.0, 2.0, 0.0}, {0.0, 1.0, 0.0}}};
  CHECK(check_admissible(e));
  CHECK_FALSE(check_admissible(e, true));
  e.lines[1][1] = 2.0;
  CHECK_FALSE(check_admissible(e));
  e.lines[1][1] = -0.1;
  CHECK_FALSE(check_admissible(e));
  e.lines[1][1] = 1.0;
  e.ceiling = Path{5.0, 1.5, 5.0};
  CHECK_FALSE(check_admissible(e));
  e.ceiling = Path{5.0, 2.5, 5.0};
  e.floor = Path{0.0, 0.5, 0.0};
  CHECK(check_admissible(e));
}
