#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "tiltline/bridge_core.hpp"
#include "tiltline/sampler.hpp"

namespace tiltline {

/// Uniform points on [0, x_max] with end-corrected (Gregory) weights.
struct SpaceGrid {
  double x_max = 1.0;
  std::size_t points = 2;

  double spacing() const { return x_max / double(points - 1); }
  double x(std::size_t i) const;
  std::vector<double> weights() const;
};

/// Quadrature weights for `count` uniform points spaced `h`: trapezoid for
/// fewer than 8 points, Gregory end corrections otherwise.
std::vector<double> gregory_weights(std::size_t count, double h);

struct OracleOptions {
  std::optional<double> x_max;
  std::optional<double> spacing;
  double cost_limit = 2e11;  // flops
};

/// x_max = 8 (M + sqrt(r - l)) with M the largest boundary value; spacing
/// sqrt(dt)/16 for one line and sqrt(dt)/10 for two.
SpaceGrid default_space_grid(const SamplerConfig& config, const OracleOptions& options = {});

/// One-point laws of every line at every node of the discrete measure.
struct MarginalTable {
  TimeGrid grid;
  SpaceGrid space;
  std::size_t lines = 0;
  // density[node][line] on the space grid; empty when the node is pinned.
  std::vector<std::vector<std::vector<double>>> density;
  // pinned[node][line]: boundary value at pinned endpoint nodes.
  std::vector<std::vector<std::optional<double>>> pinned;
  double log_partition = 0.0;
  double boundary_mass = 0.0;     // largest mass in the top 5% of the space grid
  double quadrature_defect = 0.0; // largest |mass - 1| before renormalization

  double mean(std::size_t node, std::size_t line) const;
  /// CDF at x (piecewise-linear density, cumulative trapezoid).
  double cdf(std::size_t node, std::size_t line, double x) const;
  std::function<double(double)> cdf_function(std::size_t node, std::size_t line) const;
  /// Columns node_time, line (1-based), x, density; pinned nodes are skipped.
  void write_csv(std::ostream& out) const;
};

/// Z of the discrete measure by dense transfer products. n <= 2; floor must
/// be the wall and the ceiling absent. CostGuardError over the cost limit.
double brute_partition(const SamplerConfig& config, const OracleOptions& options = {});
double log_brute_partition(const SamplerConfig& config, const OracleOptions& options = {});

MarginalTable transfer_marginals(const SamplerConfig& config, const OracleOptions& options = {});

/// 1 - exp(-2 x y / t).
double reflection_positive_prob(double x, double y, double t);

struct KmResult {
  double probability = 0.0;
  double rcond = 1.0;          // reciprocal condition estimate of the scaled matrix
  bool ill_conditioned = false;
  double error_bound = 0.0;    // eps / rcond, relative
};

/// det[K_t(x_i, y_j)] / prod q_t(x_i, y_i) with K = q, or the wall kernel
/// q_t(x, y) - q_t(x, -y).
KmResult km_prob(std::span<const double> x, std::span<const double> y, double t, bool wall);

/// det[q_t(x_i, z_j) - q_t(x_i, -z_j)]: transition density of k
/// non-colliding Brownian motions killed at 0.
double killed_density(std::span<const double> x, std::span<const double> z, double t);

struct HarnackResult {
  std::size_t samples = 0;
  double min_ratio = 0.0;
  double max_ratio = 0.0;
  double spread() const { return max_ratio / min_ratio; }
};

using ChamberFunction = std::function<double(std::span<const double>)>;

/// Ratio p_t(x, z) / (U(x) U(z)) over `samples` uniform pairs in the
/// chamber below L. `u` defaults to harmonic_U.
HarnackResult harnack_ratio_check(std::size_t k, double t, double L, std::size_t samples,
                                  std::uint64_t seed, ChamberFunction u = {}, double t0 = 0.25);

/// Exact i.i.d. draws of one constant-tilt line with fixed endpoints on the
/// grid, positive at interior nodes: bridge plus parabola, by rejection.
class ExactLineSampler {
 public:
  ExactLineSampler(TimeGrid grid, double rho, double x, double y);
  Path sample(RandomStream& rng);
  std::uint64_t attempts() const { return attempts_; }

 private:
  TimeGrid grid_;
  double x_;
  double y_;
  Path shift_;
  std::uint64_t attempts_ = 0;
};

}  // namespace tiltline
