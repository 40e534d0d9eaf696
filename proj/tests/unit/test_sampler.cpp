#include <doctest.h>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "tiltline/errors.hpp"
#include "tiltline/oracle.hpp"
#include "tiltline/sampler.hpp"

using namespace tiltline;

namespace {

SamplerConfig small_config(std::size_t n, BoundaryCondition bc = ZeroBoundary{}) {
  SamplerConfig c;
  c.n = n;
  c.grid = TimeGrid(-1.0, 1.0, 20);
  c.tilts = TiltSchedule::geometric(1.0, 2.0);
  c.boundary = std::move(bc);
  c.block_len = 11;
  c.max_rejections = 1000;
  c.burnin = 20;
  c.seed = 7;
  return c;
}

FreeBoundary linear_free(std::size_t n, double nu, double eta) {
  FreeBoundary f;
  for (std::size_t i = 0; i < n; ++i) {
    f.nu.push_back([nu](double x) { return nu * x; });
    f.eta.push_back([eta](double x) { return eta * x; });
  }
  return f;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(small_config(3).validate());
  auto c = small_config(0);
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = small_config(2);
  c.block_len = 1;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = small_config(2);
  c.max_rejections = 0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = small_config(2, FixedBoundary{{1.0}, {1.0, 0.5}});
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = small_config(2, FixedBoundary{{0.5, 1.0}, {1.0, 0.5}});
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = small_config(1);
  c.floor = Path(c.grid.size(), 0.5);
  CHECK_THROWS_AS(c.validate(), ConsistencyError);
  c = small_config(1, FixedBoundary{{1.0}, {1.0}});
  c.floor = Path(c.grid.size(), -0.1);
  CHECK_THROWS_AS(c.validate(), DomainError);
  c.floor = Path(3, 0.0);
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = small_config(1, FixedBoundary{{1.0}, {1.0}});
  c.ceiling = Path(c.grid.size(), 0.8);
  CHECK_THROWS_AS(c.validate(), ConsistencyError);
}

TEST_CASE("config hash ignores the seed only") {
  auto a = small_config(2);
  auto b = a;
  b.seed = 99;
  CHECK(a.hash() == b.hash());
  b.block_len = 9;
  CHECK(a.hash() != b.hash());
  b = a;
  b.tilts = TiltSchedule::geometric(1.5, 2.0);
  CHECK(a.hash() != b.hash());
}

TEST_CASE("sweeps keep the ensemble admissible") {
  std::vector<SamplerConfig> configs = {
      small_config(3),
      small_config(2, FixedBoundary{{2.0, 1.0}, {1.5, 0.3}}),
      small_config(3, linear_free(3, 1.0, 1.0)),
  };
  auto floored = small_config(2, FixedBoundary{{2.0, 1.0}, {2.0, 1.0}});
  floored.floor = Path(floored.grid.size(), 0.5);
  floored.ceiling = Path(floored.grid.size(), 4.0);
  configs.push_back(floored);
  auto random = small_config(2);
  random.schedule = SweepSchedule::random_block;
  configs.push_back(random);
  for (const auto& c : configs) {
    const GibbsSampler s(c);
    auto state = s.initial_state();
    REQUIRE(check_admissible(state.ensemble));
    for (int k = 0; k < 200; ++k) {
      s.sweep(state);
      REQUIRE(check_admissible(state.ensemble));
      for (std::size_t i = 1; i + 1 < c.grid.size(); ++i) {
        for (std::size_t l = 0; l + 1 < c.n; ++l) {
          REQUIRE(state.ensemble.lines[l][i] > state.ensemble.lines[l + 1][i]);
        }
      }
    }
    CHECK(state.sweeps_done == 200);
  }
}

TEST_CASE("blocks cover the interior with half overlap") {
  const GibbsSampler s(small_config(1));
  const auto& b = s.blocks();
  REQUIRE_FALSE(b.empty());
  CHECK(b.front().first == 0);
  CHECK(b.back().second == 20);
  for (std::size_t k = 0; k + 1 < b.size(); ++k) CHECK(b[k + 1].first < b[k].second);
}

TEST_CASE("single-node heat bath matches the half-normal") {
  // One interior node; the bridge midpoint has variance dt / 2 = 0.25.
  SamplerConfig c;
  c.n = 1;
  c.grid = TimeGrid(0.0, 1.0, 2);
  c.tilts = TiltSchedule::none();
  c.block_len = 3;
  c.burnin = 0;
  const GibbsSampler s(c);
  auto state = s.initial_state();
  const std::size_t reps = 100000;
  double sum = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    s.sweep(state);
    sum += state.ensemble.lines[0][1];
  }
  const double want = 0.5 * std::sqrt(2.0 / std::numbers::pi);
  const double sd = 0.5 * std::sqrt(1.0 - 2.0 / std::numbers::pi);
  CHECK(std::abs(sum / reps - want) < 5.0 * sd / std::sqrt(double(reps)));
}

TEST_CASE("single line agrees with the transfer oracle") {
  SamplerConfig c;
  c.n = 1;
  c.grid = TimeGrid(0.0, 1.0, 10);
  c.tilts = TiltSchedule::constants({1.0});
  c.boundary = FixedBoundary{{1.0}, {1.0}};
  c.block_len = 11;
  c.max_rejections = 100000;
  c.burnin = 50;
  c.seed = 5;
  const GibbsSampler s(c);
  const auto run = run_chain(s, 40000, {Observable::one_point(1, 0.5)});
  const auto& col = run.table.column(run.table.columns[0]);
  double mean = 0.0, sq = 0.0;
  for (double v : col) mean += v;
  mean /= double(col.size());
  for (double v : col) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / double(col.size()));
  const auto table = transfer_marginals(c);
  const double want = table.mean(5, 0);
  CHECK(run.diagnostics.ess[0] > 10000.0);
  CHECK(std::abs(mean - want) < 5.0 * sd / std::sqrt(run.diagnostics.ess[0]));
}

TEST_CASE("strongly tilted line mixes at block split points") {
  SamplerConfig c;
  c.n = 1;
  c.grid = TimeGrid(-2.0, 2.0, 80);
  c.tilts = TiltSchedule::constants({64.0});
  c.block_len = 21;
  c.max_rejections = 64;
  c.burnin = 200;
  c.seed = 11;
  const GibbsSampler s(c);
  const auto run = run_chain(s, 20000, {Observable::one_point(1, 0.0)});
  const auto& col = run.table.column(run.table.columns[0]);
  double mean = 0.0, sq = 0.0;
  for (double v : col) mean += v;
  mean /= double(col.size());
  for (double v : col) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / double(col.size()));
  const auto table = transfer_marginals(c);
  const double want = table.mean(40, 0);
  CHECK(sd > 0.0);
  CHECK(run.diagnostics.ess[0] > 500.0);
  CHECK(std::abs(mean - want) < 5.0 * sd / std::sqrt(run.diagnostics.ess[0]));
}

TEST_CASE("block resampling leaves the outside untouched") {
  const GibbsSampler s(small_config(2));
  auto state = s.initial_state();
  for (int k = 0; k < 10; ++k) s.sweep(state);
  const auto before = state.ensemble.lines;
  s.resample_block(state, 1, 4, 12);
  for (std::size_t j = 0; j < before[1].size(); ++j) {
    if (j <= 4 || j >= 12) CHECK(state.ensemble.lines[1][j] == before[1][j]);
  }
  CHECK(state.ensemble.lines[0] == before[0]);
  CHECK_THROWS_AS(s.resample_block(state, 2, 4, 12), DomainError);
  CHECK_THROWS_AS(s.resample_block(state, 0, 5, 5), DomainError);
  CHECK_THROWS_AS(s.update_endpoints(state), UsageError);
}

TEST_CASE("free endpoints move and adapt") {
  const GibbsSampler s(small_config(2, linear_free(2, 1.0, 1.0)));
  auto state = s.initial_state();
  const double left = state.ensemble.lines[0][0];
  for (int k = 0; k < 50; ++k) s.sweep(state);
  CHECK(state.ensemble.lines[0][0] != left);
  CHECK(state.stats[0].endpoint_proposals > 0);
  CHECK(state.stats[0].endpoint_acceptances > 0);
  CHECK(check_admissible(state.ensemble));
}

TEST_CASE("checkpoint round trip and failure modes") {
  const auto c = small_config(3, linear_free(3, 1.0, 0.5));
  const GibbsSampler s(c);
  auto state = s.initial_state();
  for (int k = 0; k < 30; ++k) s.sweep(state);
  const std::string blob = checkpoint(state, c.hash());
  const ChainState back = restore(blob, c.hash());
  CHECK(back == state);
  CHECK_THROWS_AS(restore(blob, c.hash() + 1), DecodeError);
  CHECK_THROWS_AS(restore(blob.substr(0, blob.size() / 2), c.hash()), DecodeError);
  CHECK_THROWS_AS(restore(blob.substr(0, 5), c.hash()), DecodeError);
  std::string flipped = blob;
  flipped[blob.size() / 2] ^= 0x10;
  CHECK_THROWS_AS(restore(flipped, c.hash()), DecodeError);
  std::string bad_magic = blob;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(restore(bad_magic, c.hash()), DecodeError);
  CHECK_THROWS_AS(restore(blob + "x", c.hash()), DecodeError);
}

TEST_CASE("interrupted run equals the uninterrupted run") {
  for (const auto& c : {small_config(3), small_config(2, linear_free(2, 1.0, 1.0))}) {
    const GibbsSampler s(c);
    auto whole = s.initial_state();
    for (int k = 0; k < 100; ++k) s.sweep(whole);
    auto part = s.initial_state();
    for (int k = 0; k < 50; ++k) s.sweep(part);
    auto resumed = restore(checkpoint(part, c.hash()), c.hash());
    for (int k = 0; k < 50; ++k) s.sweep(resumed);
    CHECK(resumed == whole);
  }
}

TEST_CASE("chain runs are reproducible") {
  const GibbsSampler s(small_config(2));
  const std::vector<Observable> obs = {Observable::one_point(1, 0.0), Observable::line_area(2)};
  const auto a = run_chains(s, 2, 200, obs, 1);
  const auto b = run_chains(s, 2, 200, obs, 2);
  CHECK(a.table.values == b.table.values);
  CHECK(a.table.rows() == 400);
  CHECK(a.table.chain.front() == 0);
  CHECK(a.table.chain.back() == 1);
  auto other = small_config(2);
  other.seed = 8;
  const auto c = run_chains(GibbsSampler(other), 2, 200, obs, 1);
  CHECK(c.table.values != a.table.values);
}

TEST_CASE("coupled sweeps preserve the order") {
  auto lo_cfg = small_config(3);
  lo_cfg.tilts = TiltSchedule::geometric(2.0, 2.0);
  auto hi_cfg = small_config(3);
  const GibbsSampler lo_s(lo_cfg), hi_s(hi_cfg);
  auto lo = lo_s.initial_state(3);
  auto hi = hi_s.initial_state(3);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < lo.ensemble.grid.size(); ++j) {
      lo.ensemble.lines[i][j] = std::min(lo.ensemble.lines[i][j], hi.ensemble.lines[i][j]);
    }
  }
  REQUIRE(nodewise_ordered(lo.ensemble, hi.ensemble));
  for (int k = 0; k < 300; ++k) {
    coupled_sweep(lo_s, lo, hi_s, hi);
    REQUIRE(nodewise_ordered(lo.ensemble, hi.ensemble));
    REQUIRE(check_admissible(lo.ensemble));
    REQUIRE(check_admissible(hi.ensemble));
  }
  CHECK(lo.rng == hi.rng);
}

TEST_CASE("coupling refuses unsupported pairs") {
  const GibbsSampler free_s(small_config(2, linear_free(2, 1.0, 1.0)));
  auto a = free_s.initial_state();
  auto b = free_s.initial_state();
  CHECK_THROWS_AS(coupled_sweep(free_s, a, free_s, b), DomainError);
  auto lo_cfg = small_config(2);
  auto hi_cfg = small_config(2);
  hi_cfg.tilts = TiltSchedule::geometric(2.0, 2.0);
  const GibbsSampler lo_s(lo_cfg), hi_s(hi_cfg);
  auto lo = lo_s.initial_state();
  auto hi = hi_s.initial_state();
  CHECK_THROWS_AS(coupled_sweep(lo_s, lo, hi_s, hi), DomainError);
  const GibbsSampler three(small_config(3));
  auto t = three.initial_state();
  CHECK_THROWS_AS(coupled_sweep(lo_s, lo, three, t), DomainError);
}

TEST_CASE("observable names round trip") {
  const std::vector<Observable> all = {
      Observable::one_point(2, -0.5),       Observable::curved(1, 0.25, {-1.0, 1.0}),
      Observable::gap(3, {-0.5, 0.5}),      Observable::oscillation(2, {-0.25, 0.75}, 0.1),
      Observable::line_area(4),             Observable::maximum(1, {0.0, 0.5}),
  };
  for (const auto& o : all) CHECK(Observable::parse(o.name()).name() == o.name());
  CHECK_THROWS_AS(Observable::parse("one_point:0:0"), DomainError);
  CHECK_THROWS_AS(Observable::parse("one_point:1"), DomainError);
  CHECK_THROWS_AS(Observable::parse("bogus:1:2"), DomainError);
  CHECK_THROWS_AS(Observable::parse("area:1x"), DomainError);
}

TEST_CASE("untilted acceptance matches the reflection formula") {
  // One line above the wall: 1 - exp(-2 x y / t).
  RandomStream rng(17);
  const auto est = unconstrained_acceptance({1.0}, {1.0}, 1.0, true, 32, 20, 40000, rng);
  const double want = -std::expm1(-2.0);
  CHECK(std::abs(est.frequency() - want) < 4.0 * est.standard_error() + 1e-3);
  CHECK(est.node_frequency() >= est.frequency());
}
