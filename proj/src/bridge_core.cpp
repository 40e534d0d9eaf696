#include "tiltline/bridge_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "tiltline/errors.hpp"

namespace tiltline {

TimeGrid::TimeGrid(double left, double right, std::size_t steps)
    : left_(left), right_(right), steps_(steps), dt_(0.0) {
  if (!(std::isfinite(left) && std::isfinite(right)) || !(right > left)) {
    throw DomainError("time grid needs finite left < right");
  }
  if (steps == 0) throw DomainError("time grid needs at least one step");
  dt_ = (right - left) / static_cast<double>(steps);
}

TimeGrid TimeGrid::with_spacing(double left, double right, double dt) {
  if (!(dt > 0.0)) throw DomainError("grid spacing must be positive");
  const double cells = (right - left) / dt;
  const double rounded = std::round(cells);
  if (rounded < 1.0 || std::abs(cells - rounded) > 1e-9 * std::max(1.0, cells)) {
    throw DomainError("interval length is not a multiple of the spacing");
  }
  return TimeGrid(left, right, static_cast<std::size_t>(rounded));
}

double TimeGrid::time(std::size_t j) const {
  if (j >= steps_) return right_;
  return left_ + static_cast<double>(j) * dt_;
}

std::optional<std::size_t> TimeGrid::node_at(double t, double tol) const {
  const double pos = (t - left_) / dt_;
  const double rounded = std::round(pos);
  if (std::abs(pos - rounded) > tol || rounded < 0.0 ||
      rounded > static_cast<double>(steps_)) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(rounded);
}

std::pair<std::size_t, std::size_t> TimeGrid::nodes_in(double lo, double hi) const {
  const double first = std::ceil((lo - left_) / dt_ - 1e-9);
  const double last = std::floor((hi - left_) / dt_ + 1e-9);
  const double top = static_cast<double>(steps_);
  const double f = std::max(first, 0.0);
  const double l = std::min(last, top);
  if (!(hi >= lo) || f > l) throw DomainError("window contains no grid node");
  return {static_cast<std::size_t>(f), static_cast<std::size_t>(l)};
}

bool TimeGrid::contains_nodes_of(const TimeGrid& coarse) const {
  if (!node_at(coarse.left()) || !node_at(coarse.right())) return false;
  const double ratio = coarse.dt() / dt_;
  return std::abs(ratio - std::round(ratio)) < 1e-9 * std::max(1.0, ratio);
}

TimeGrid TimeGrid::shifted(double shift) const {
  return TimeGrid(left_ + shift, right_ + shift, steps_);
}

double Ensemble::ceiling_at(std::size_t j) const {
  return ceiling ? (*ceiling)[j] : std::numeric_limits<double>::infinity();
}

TiltSchedule TiltSchedule::geometric(double a, double lambda) {
  if (!(a > 0.0) || !(lambda > 1.0) || !std::isfinite(a) || !std::isfinite(lambda)) {
    throw DomainError("geometric tilts need a > 0 and lambda > 1");
  }
  TiltSchedule s;
  s.kind_ = Kind::geometric;
  s.a_ = a;
  s.lambda_ = lambda;
  return s;
}

TiltSchedule TiltSchedule::constants(std::vector<double> rhos) {
  for (double r : rhos) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw DomainError("tilts must be non-negative");
  }
  TiltSchedule s;
  s.kind_ = Kind::constants;
  s.rhos_ = std::move(rhos);
  return s;
}

TiltSchedule TiltSchedule::weights(std::vector<Path> rho_paths) {
  for (const auto& p : rho_paths) {
    for (double r : p) {
      if (!(r >= 0.0) || !std::isfinite(r)) {
        throw DomainError("tilt weights must be non-negative");
      }
    }
  }
  TiltSchedule s;
  s.kind_ = Kind::weights;
  s.rho_paths_ = std::move(rho_paths);
  return s;
}

std::optional<double> TiltSchedule::constant_rho(std::size_t line) const {
  switch (kind_) {
    case Kind::geometric:
      return a_ * std::pow(lambda_, static_cast<double>(line));
    case Kind::constants:
      if (rhos_.empty()) return 0.0;
      if (line >= rhos_.size()) throw ShapeError("no tilt given for line " + std::to_string(line));
      return rhos_[line];
    case Kind::weights:
      return std::nullopt;
  }
  return std::nullopt;
}

Path TiltSchedule::weights_for(std::size_t line, const TimeGrid& grid) const {
  if (kind_ == Kind::weights) {
    if (line >= rho_paths_.size()) {
      throw ShapeError("no tilt weights given for line " + std::to_string(line));
    }
    if (rho_paths_[line].size() != grid.size()) {
      throw ShapeError("tilt weight length does not match the grid");
    }
    return rho_paths_[line];
  }
  return Path(grid.size(), *constant_rho(line));
}

bool TiltSchedule::dominates(const TiltSchedule& other, std::size_t n,
                             const TimeGrid& grid) const {
  for (std::size_t i = 0; i < n; ++i) {
    const Path mine = weights_for(i, grid);
    const Path theirs = other.weights_for(i, grid);
    for (std::size_t j = 0; j < mine.size(); ++j) {
      if (mine[j] < theirs[j]) return false;
    }
  }
  return true;
}

double kernel_q(double t, double x, double y) {
  if (!(t > 0.0)) throw DomainError("kernel_q needs a positive duration");
  const double d = y - x;
  return std::exp(-d * d / (2.0 * t)) / std::sqrt(2.0 * std::numbers::pi * t);
}

Path sample_bridge(const TimeGrid& grid, double x, double y, RandomStream& rng) {
  const std::size_t m = grid.steps();
  const double dt = grid.dt();
  Path out(m + 1);
  out[0] = x;
  for (std::size_t j = 0; j + 1 < m; ++j) {
    const double remaining = static_cast<double>(m - j);
    const double mean = out[j] + (y - out[j]) / remaining;
    const double sd = std::sqrt(dt * (remaining - 1.0) / remaining);
    out[j + 1] = mean + sd * rng.normal();
  }
  out[m] = y;
  return out;
}

Path trapezoid_weights(const TimeGrid& grid) {
  Path w(grid.size(), grid.dt());
  w.front() *= 0.5;
  w.back() *= 0.5;
  return w;
}

double area(std::span<const double> path, const TimeGrid& grid,
            std::span<const double> weight) {
  if (path.size() != grid.size()) throw ShapeError("path length does not match the grid");
  if (!weight.empty() && weight.size() != grid.size()) {
    throw ShapeError("weight length does not match the grid");
  }
  const double dt = grid.dt();
  double total = 0.0;
  for (std::size_t j = 0; j < path.size(); ++j) {
    const double cell = (j == 0 || j + 1 == path.size()) ? 0.5 * dt : dt;
    total += cell * (weight.empty() ? 1.0 : weight[j]) * path[j];
  }
  return total;
}

void solve_bridge_precision(double dt, std::span<const double> rhs,
                            std::span<double> out) {
  // Thomas algorithm on tridiag(-1, 2, -1) after multiplying through by dt.
  const std::size_t n = rhs.size();
  if (out.size() != n) throw ShapeError("solver output has the wrong length");
  if (n == 0) return;
  std::vector<double> c(n);
  double denom = 2.0;
  c[0] = -1.0 / denom;
  out[0] = dt * rhs[0] / denom;
  for (std::size_t j = 1; j < n; ++j) {
    denom = 2.0 + c[j - 1];
    c[j] = -1.0 / denom;
    out[j] = (dt * rhs[j] + out[j - 1]) / denom;
  }
  for (std::size_t j = n - 1; j-- > 0;) out[j] -= c[j] * out[j + 1];
}

Path tilt_shift(const TimeGrid& grid, double rho) {
  if (!(rho >= 0.0)) throw DomainError("tilt must be non-negative");
  return tilt_shift(grid, Path(grid.size(), rho));
}

Path tilt_shift(const TimeGrid& grid, std::span<const double> rho_weights) {
  if (rho_weights.size() != grid.size()) throw ShapeError("tilt weights do not match the grid");
  for (double r : rho_weights) {
    if (!(r >= 0.0)) throw DomainError("tilt must be non-negative");
  }
  const std::size_t m = grid.steps();
  Path shift(m + 1, 0.0);
  if (m < 2) return shift;
  std::vector<double> rhs(m - 1);
  for (std::size_t j = 1; j < m; ++j) rhs[j - 1] = -rho_weights[j] * grid.dt();
  solve_bridge_precision(grid.dt(), rhs, std::span<double>(shift).subspan(1, m - 1));
  return shift;
}

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw DomainError("alpha must lie in (0, 1/2)");
}

}  // namespace

double curved_max(std::span<const double> path, const TimeGrid& grid, double alpha) {
  return curved_max(path, grid, alpha, Window{grid.left(), grid.right()});
}

double curved_max(std::span<const double> path, const TimeGrid& grid, double alpha,
                  Window window) {
  check_alpha(alpha);
  if (path.size() != grid.size()) throw ShapeError("path length does not match the grid");
  if (window.lo <= 0.0 && window.hi >= 0.0 && grid.left() <= 0.0 &&
      grid.right() >= 0.0 && !grid.node_at(0.0)) {
    throw DomainError("curved maximum needs t = 0 to be a grid node");
  }
  const auto [first, last] = grid.nodes_in(window.lo, window.hi);
  double best = 0.0;
  for (std::size_t j = first; j <= last; ++j) {
    best = std::max(best, path[j] - std::pow(std::abs(grid.time(j)), alpha));
  }
  return best;
}

double min_gap(const Ensemble& ensemble, Window window, std::size_t k) {
  const std::size_t lines = k == 0 ? ensemble.line_count() : k;
  if (lines < 2 || lines > ensemble.line_count()) {
    throw DomainError("minimal gap needs at least two lines");
  }
  const auto [first, last] = ensemble.grid.nodes_in(window.lo, window.hi);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < lines; ++i) {
    for (std::size_t j = first; j <= last; ++j) {
      best = std::min(best, std::abs(ensemble.lines[i][j] - ensemble.lines[i + 1][j]));
    }
  }
  return best;
}

double modulus(const Ensemble& ensemble, Window window, double delta, std::size_t k) {
  if (!(delta > 0.0)) throw DomainError("modulus needs delta > 0");
  const std::size_t lines = k == 0 ? ensemble.line_count() : std::min(k, ensemble.line_count());
  const auto [first, last] = ensemble.grid.nodes_in(window.lo, window.hi);
  const double dt = ensemble.grid.dt();
  // Largest node offset d with d * dt < delta.
  std::size_t reach = static_cast<std::size_t>(std::ceil(delta / dt - 1e-9));
  reach = reach == 0 ? 0 : reach - 1;
  double best = 0.0;
  for (std::size_t i = 0; i < lines; ++i) {
    const Path& x = ensemble.lines[i];
    for (std::size_t s = first; s <= last; ++s) {
      const std::size_t stop = std::min(last, s + reach);
      for (std::size_t t = s + 1; t <= stop; ++t) best = std::max(best, std::abs(x[t] - x[s]));
    }
  }
  return best;
}

double harmonic_U(std::span<const double> x) {
  if (x.empty()) throw DomainError("harmonic function needs at least one coordinate");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || (i > 0 && !(x[i - 1] > x[i]))) {
      throw DomainError("harmonic function needs x_1 > ... > x_k > 0");
    }
  }
  double u = 1.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    u *= x[i];
    for (std::size_t j = i + 1; j < x.size(); ++j) u *= (x[i] - x[j]) * (x[i] + x[j]);
  }
  return u;
}

bool check_admissible(const Ensemble& ensemble, bool strict_endpoints) {
  const std::size_t size = ensemble.grid.size();
  if ((ensemble.floor && ensemble.floor->size() != size) ||
      (ensemble.ceiling && ensemble.ceiling->size() != size)) {
    return false;
  }
  for (const auto& line : ensemble.lines) {
    if (line.size() != size) return false;
    for (double v : line) {
      if (!std::isfinite(v)) return false;
    }
  }
  const std::size_t n = ensemble.line_count();
  for (std::size_t j = 0; j < size; ++j) {
    const bool endpoint = j == 0 || j + 1 == size;
    const bool strict = !endpoint || strict_endpoints;
    const double floor = ensemble.floor_at(j);
    const double ceiling = ensemble.ceiling_at(j);
    if (!(floor >= 0.0) || !(ceiling >= floor)) return false;
    if (n == 0) continue;
    if (!(ensemble.lines[0][j] <= ceiling)) return false;
    if (!(ensemble.lines[n - 1][j] >= floor)) return false;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double upper = ensemble.lines[i][j];
      const double lower = ensemble.lines[i + 1][j];
      if (strict ? !(upper > lower) : !(upper >= lower)) return false;
    }
  }
  return true;
}

double event_threshold(std::size_t i, double M, double lambda) {
  if (i == 0) throw DomainError("line indices start at 1");
  if (!(M > 0.0) || !(lambda > 1.0)) throw DomainError("threshold needs M > 0, lambda > 1");
  return std::pow(lambda, -static_cast<double>(i - 1) / 3.0) * M;
}

double window_max(std::span<const double> path, const TimeGrid& grid, Window window) {
  if (path.size() != grid.size()) throw ShapeError("path length does not match the grid");
  const auto [first, last] = grid.nodes_in(window.lo, window.hi);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t j = first; j <= last; ++j) best = std::max(best, path[j]);
  return best;
}

}  // namespace tiltline
