#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "tiltline/random.hpp"

namespace tiltline {

/// Uniform discretization of [left, right] into `steps` cells.
class TimeGrid {
 public:
  /// Single cell on [0, 1].
  TimeGrid() : TimeGrid(0.0, 1.0, 1) {}
  TimeGrid(double left, double right, std::size_t steps);

  /// Grid with spacing `dt`; (right - left) / dt must be an integer to 1e-9.
  static TimeGrid with_spacing(double left, double right, double dt);

  double left() const { return left_; }
  double right() const { return right_; }
  std::size_t steps() const { return steps_; }
  std::size_t size() const { return steps_ + 1; }
  double dt() const { return dt_; }

  /// Node time; node 0 is exactly `left` and node `steps` exactly `right`.
  double time(std::size_t j) const;

  /// Index of the node at time t, if t is a node (to `tol` in units of dt).
  std::optional<std::size_t> node_at(double t, double tol = 1e-9) const;

  /// Inclusive node range [first, last] of the nodes inside [lo, hi].
  /// Throws DomainError when the window contains no node.
  std::pair<std::size_t, std::size_t> nodes_in(double lo, double hi) const;

  /// True when every node of `coarse` is also a node of this grid.
  bool contains_nodes_of(const TimeGrid& coarse) const;

  /// Same grid translated by `shift` in time.
  TimeGrid shifted(double shift) const;

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  double left_;
  double right_;
  std::size_t steps_;
  double dt_;
};

/// Node values of one line, value[j] at grid.time(j).
using Path = std::vector<double>;

/// Closed time window [lo, hi].
struct Window {
  double lo;
  double hi;
};

/// Ordered stack of lines; lines[0] is the top line.
struct Ensemble {
  TimeGrid grid;
  std::vector<Path> lines;
  std::optional<Path> floor;    // absent means the wall at 0
  std::optional<Path> ceiling;  // absent means +infinity

  std::size_t line_count() const { return lines.size(); }
  double floor_at(std::size_t j) const { return floor ? (*floor)[j] : 0.0; }
  double ceiling_at(std::size_t j) const;
};

/// Per-line area tilts, either geometric rho_i = a * lambda^(i-1) or given
/// per line as constants or grid-sampled weight functions.
class TiltSchedule {
 public:
  static TiltSchedule geometric(double a, double lambda);
  static TiltSchedule constants(std::vector<double> rhos);
  static TiltSchedule weights(std::vector<Path> rho_paths);
  /// No tilt on any line.
  static TiltSchedule none() { return constants({}); }

  bool is_geometric() const { return kind_ == Kind::geometric; }
  bool is_weighted() const { return kind_ == Kind::weights; }
  const std::vector<double>& rhos() const { return rhos_; }
  const std::vector<Path>& rho_paths() const { return rho_paths_; }
  double a() const { return a_; }
  double lambda() const { return lambda_; }

  /// Tilt weights of line `line` (0-based) at every node of `grid`.
  Path weights_for(std::size_t line, const TimeGrid& grid) const;

  /// Tilt of line `line` if it is constant in time.
  std::optional<double> constant_rho(std::size_t line) const;

  /// True when this schedule is pointwise >= `other` on the first n lines.
  bool dominates(const TiltSchedule& other, std::size_t n,
                 const TimeGrid& grid) const;

 private:
  enum class Kind { geometric, constants, weights };
  Kind kind_ = Kind::constants;
  double a_ = 0.0;
  double lambda_ = 1.0;
  std::vector<double> rhos_;
  std::vector<Path> rho_paths_;
};

/// Endpoint potential nu_i or eta_i; an empty function is identically zero.
using Potential = std::function<double(double)>;

struct FixedBoundary {
  std::vector<double> left;
  std::vector<double> right;
};
struct ZeroBoundary {};
struct FreeBoundary {
  std::vector<Potential> nu;   // left endpoint potentials
  std::vector<Potential> eta;  // right endpoint potentials
};
using BoundaryCondition = std::variant<FixedBoundary, ZeroBoundary, FreeBoundary>;

/// Brownian transition density (2 pi t)^(-1/2) exp(-(y - x)^2 / (2 t)).
double kernel_q(double t, double x, double y);

/// Exact discrete Brownian bridge pinned at (left, x) and (right, y).
Path sample_bridge(const TimeGrid& grid, double x, double y, RandomStream& rng);

/// Trapezoid weights (dt/2 at the ends, dt inside).
Path trapezoid_weights(const TimeGrid& grid);

/// Trapezoid approximation of the weighted area integral of h(t) X(t).
double area(std::span<const double> path, const TimeGrid& grid,
            std::span<const double> weight = {});

/// Mean shift m such that a discrete bridge (pinned at both ends) tilted by
/// exp(-sum_j rho_j w_j X_j) equals in law the untilted bridge plus m.
Path tilt_shift(const TimeGrid& grid, double rho);
Path tilt_shift(const TimeGrid& grid, std::span<const double> rho_weights);

/// Solves (1/dt) tridiag(-1, 2, -1) m = rhs on the interior of a block of
/// `rhs.size()` interior nodes; the block endpoints are pinned at zero.
void solve_bridge_precision(double dt, std::span<const double> rhs,
                            std::span<double> out);

/// max over nodes of (X(t) - |t|^alpha)_+, alpha in (0, 1/2).
double curved_max(std::span<const double> path, const TimeGrid& grid,
                  double alpha);
double curved_max(std::span<const double> path, const TimeGrid& grid,
                  double alpha, Window window);

/// Minimal gap between adjacent lines among the top k lines inside the
/// window (k = 0 means all lines).
double min_gap(const Ensemble& ensemble, Window window, std::size_t k = 0);

/// Maximal oscillation |X_i(s) - X_i(t)| over lines i < k and window nodes
/// with |s - t| < delta (k = 0 means all lines).
double modulus(const Ensemble& ensemble, Window window, double delta,
               std::size_t k = 0);

/// prod_j x_j * prod_{i<j} (x_i^2 - x_j^2) on the open chamber.
double harmonic_U(std::span<const double> x);

bool check_admissible(const Ensemble& ensemble, bool strict_endpoints = false);

/// lambda^(-(i-1)/3) * M for line index i >= 1.
double event_threshold(std::size_t i, double M, double lambda);

/// max of X over the window nodes.
double window_max(std::span<const double> path, const TimeGrid& grid,
                  Window window);

}  // namespace tiltline
