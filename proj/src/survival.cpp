#include <cmath>

#include "tiltline/errors.hpp"
#include "tiltline/sampler.hpp"

namespace tiltline {

namespace {

// A cell is safe when every constrained coordinate stays at least this many
// standard deviations away from its barrier at both cell ends; the crossing
// probability is then below exp(-2 * 36).
constexpr double kSafeSigmas = 6.0;

struct Refiner {
  bool wall;
  std::size_t max_level;
  RandomStream& rng;

  bool satisfied(const std::vector<double>& v) const {
    for (std::size_t i = 0; i + 1 < v.size(); ++i) {
      if (!(v[i] > v[i + 1])) return false;
    }
    return !wall || v.back() > 0.0;
  }

  bool safe(const std::vector<double>& a, const std::vector<double>& b, double dt) const {
    const double gap_margin = kSafeSigmas * std::sqrt(2.0 * dt);
    for (std::size_t i = 0; i + 1 < a.size(); ++i) {
      if (std::min(a[i] - a[i + 1], b[i] - b[i + 1]) < gap_margin) return false;
    }
    return !wall || std::min(a.back(), b.back()) >= kSafeSigmas * std::sqrt(dt);
  }

  bool cell_ok(const std::vector<double>& a, const std::vector<double>& b, double dt,
               std::size_t level) {
    if (level >= max_level || safe(a, b, dt)) return true;
    std::vector<double> mid(a.size());
    const double sd = std::sqrt(0.25 * dt);
    for (std::size_t i = 0; i < a.size(); ++i) mid[i] = 0.5 * (a[i] + b[i]) + sd * rng.normal();
    if (!satisfied(mid)) return false;
    return cell_ok(a, mid, 0.5 * dt, level + 1) && cell_ok(mid, b, 0.5 * dt, level + 1);
  }
};

}  // namespace

double SurvivalEstimate::standard_error() const {
  if (trials == 0) return 0.0;
  const double p = frequency();
  return std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
}

SurvivalEstimate unconstrained_acceptance(const std::vector<double>& x,
                                          const std::vector<double>& y, double duration,
                                          bool wall, std::size_t coarse_steps,
                                          std::size_t refine_levels, std::uint64_t trials,
                                          RandomStream& rng) {
  if (x.empty() || x.size() != y.size()) throw ShapeError("endpoint vectors must match");
  if (!(duration > 0.0)) throw DomainError("duration must be positive");
  const TimeGrid grid(0.0, duration, coarse_steps);
  const std::size_t k = x.size();
  const std::size_t m = grid.steps();
  Refiner refiner{wall, refine_levels, rng};
  SurvivalEstimate out;
  std::vector<Path> paths(k);
  std::vector<double> a(k), b(k), node(k);
  for (std::uint64_t trial = 0; trial < trials; ++trial) {
    ++out.trials;
    for (std::size_t i = 0; i < k; ++i) paths[i] = sample_bridge(grid, x[i], y[i], rng);
    bool alive = true;
    for (std::size_t j = 1; j < m && alive; ++j) {
      for (std::size_t i = 0; i < k; ++i) node[i] = paths[i][j];
      alive = refiner.satisfied(node);
    }
    if (!alive) continue;
    ++out.survived_at_nodes;
    for (std::size_t j = 0; j < m && alive; ++j) {
      for (std::size_t i = 0; i < k; ++i) {
        a[i] = paths[i][j];
        b[i] = paths[i][j + 1];
      }
      alive = refiner.cell_ok(a, b, grid.dt(), 0);
    }
    if (alive) ++out.survived;
  }
  return out;
}

}  // namespace tiltline
