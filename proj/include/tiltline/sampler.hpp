#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tiltline/bridge_core.hpp"
#include "tiltline/random.hpp"

namespace tiltline {

enum class SweepSchedule { systematic, random_block };

struct SamplerConfig {
  std::size_t n = 1;
  TimeGrid grid{-1.0, 1.0, 40};
  TiltSchedule tilts = TiltSchedule::geometric(1.0, 2.0);
  BoundaryCondition boundary = ZeroBoundary{};
  std::optional<Path> floor;
  std::optional<Path> ceiling;
  std::size_t block_len = 21;       // nodes per block, pinned ends included
  std::size_t max_rejections = 64;  // proposals before a block is halved
  SweepSchedule schedule = SweepSchedule::systematic;
  std::uint64_t seed = 1;
  std::size_t burnin = 100;
  std::size_t thin = 1;

  /// Throws DomainError / ShapeError / ConsistencyError on invalid settings.
  void validate() const;

  /// Stable hash of every setting except the seed. Endpoint potentials are
  /// functions and only contribute whether they are present.
  std::uint64_t hash() const;
};

struct LineStats {
  std::uint64_t proposals = 0;
  std::uint64_t acceptances = 0;
  std::uint64_t halvings = 0;
  std::uint64_t site_updates = 0;
  std::uint64_t endpoint_proposals = 0;
  std::uint64_t endpoint_acceptances = 0;

  friend bool operator==(const LineStats&, const LineStats&) = default;
};

/// Everything needed to continue a chain: the unit of checkpointing.
struct ChainState {
  Ensemble ensemble;
  RandomStream rng;
  std::uint64_t sweeps_done = 0;
  std::vector<LineStats> stats;
  // Free boundary only: random-walk scale and adaptation count per
  // endpoint, index 2 * line + (0 left, 1 right).
  std::vector<double> endpoint_scale;
  std::vector<std::uint64_t> endpoint_adapt_steps;
  bool adapting = true;

  friend bool operator==(const ChainState& a, const ChainState& b) {
    return a.ensemble.grid == b.ensemble.grid && a.ensemble.lines == b.ensemble.lines &&
           a.ensemble.floor == b.ensemble.floor && a.ensemble.ceiling == b.ensemble.ceiling &&
           a.rng == b.rng && a.sweeps_done == b.sweeps_done && a.stats == b.stats &&
           a.endpoint_scale == b.endpoint_scale &&
           a.endpoint_adapt_steps == b.endpoint_adapt_steps && a.adapting == b.adapting;
  }
};

/// Brownian-Gibbs block sampler for the node-constrained discrete polymer
/// measure with area tilts, floor, ceiling and boundary data.
class GibbsSampler {
 public:
  explicit GibbsSampler(SamplerConfig config);

  const SamplerConfig& config() const { return config_; }
  std::size_t line_count() const { return config_.n; }
  bool free_boundary() const;

  /// Deterministic admissible starting configuration with rng seeded by
  /// `seed` (the config seed when omitted).
  ChainState initial_state() const { return initial_state(config_.seed); }
  ChainState initial_state(std::uint64_t seed) const;

  /// Heat-bath update of line `line` (0-based) on the open node range
  /// (s, t), pinned at s and t. Throws ConsistencyError if some interior
  /// node has an empty constraint window.
  void resample_block(ChainState& state, std::size_t line, std::size_t s,
                      std::size_t t) const;

  /// Exact single-node heat-bath update of line `line` at node j, driven by
  /// the uniform u (inverse-CDF realization).
  void update_site(ChainState& state, std::size_t line, std::size_t j, double u) const;

  void sweep(ChainState& state) const;

  /// Metropolis update of every free endpoint. UsageError unless free b.c.
  void update_endpoints(ChainState& state) const;

  /// Blocks of one systematic pass, left to right with 50% overlap.
  const std::vector<std::pair<std::size_t, std::size_t>>& blocks() const { return blocks_; }

  /// Per-node tilt weight of a line (rho_i(t_j)).
  const Path& tilt_weights(std::size_t line) const { return tilt_weights_[line]; }

  double lower_bound(const ChainState& state, std::size_t line, std::size_t j) const;
  double upper_bound(const ChainState& state, std::size_t line, std::size_t j) const;

 private:
  void resample_recursive(ChainState& state, std::size_t line, std::size_t s,
                          std::size_t t, std::vector<double>& scratch) const;
  void verify_block(const ChainState& state, std::size_t line, std::size_t s,
                    std::size_t t) const;

  SamplerConfig config_;
  std::vector<Path> tilt_weights_;
  Path trapezoid_;
  std::vector<std::pair<std::size_t, std::size_t>> blocks_;
};

/// One sweep of two chains driven by common randomness, realized as
/// single-site inverse-CDF heat-bath updates so that lo <= hi nodewise is
/// preserved exactly. Both rng streams end in the same state. Requires
/// Fixed or Zero boundaries, equal grids and line counts, lo tilts >= hi
/// tilts, lo floor/ceiling <= hi floor/ceiling and lo boundary data <= hi.
void coupled_sweep(const GibbsSampler& lo_sampler, ChainState& lo,
                   const GibbsSampler& hi_sampler, ChainState& hi);

/// True when lo <= hi at every node of every line.
bool nodewise_ordered(const Ensemble& lo, const Ensemble& hi);

// ---------------------------------------------------------------------------
// Observables and chain runs

struct Observable {
  enum class Kind { one_point, curved_max, min_gap, modulus, area, window_max };
  Kind kind = Kind::one_point;
  std::size_t line = 1;  // 1-based line index (k for min_gap / modulus)
  double time = 0.0;
  double alpha = 0.25;
  Window window{-1.0, 1.0};
  double delta = 0.1;

  static Observable one_point(std::size_t line, double time);
  static Observable curved(std::size_t line, double alpha, Window window);
  static Observable gap(std::size_t k, Window window);
  static Observable oscillation(std::size_t k, Window window, double delta);
  static Observable line_area(std::size_t line);
  static Observable maximum(std::size_t line, Window window);

  std::string name() const;
  /// Inverse of name(); DomainError on malformed text.
  static Observable parse(const std::string& text);
  double evaluate(const Ensemble& ensemble) const;
};

struct SampleTable {
  std::vector<std::string> columns;
  std::vector<std::uint64_t> chain;
  std::vector<std::uint64_t> sweep;
  std::vector<std::vector<double>> values;  // values[column][row]

  std::size_t rows() const { return sweep.size(); }
  const std::vector<double>& column(const std::string& name) const;
};

struct ChainDiagnostics {
  std::uint64_t sweeps = 0;
  std::uint64_t retained = 0;
  std::vector<double> ess;  // per observable column
  std::vector<LineStats> line_stats;
};

struct ChainRun {
  SampleTable table;
  ChainDiagnostics diagnostics;
  ChainState final_state;
};

using StateVisitor = std::function<void(const ChainState&)>;

/// Burn in, then retain n_samples states spaced `thin` sweeps apart,
/// evaluating the observables on each. The visitor (if any) sees every
/// retained state. Starting from `resume` skips initialization and burn-in.
ChainRun run_chain(const GibbsSampler& sampler, std::size_t n_samples,
                   const std::vector<Observable>& observables,
                   const StateVisitor& visitor = {},
                   std::optional<ChainState> resume = std::nullopt);

/// Independent chains with seeds derive_seed(config.seed, c, config.hash()),
/// run on up to `workers` threads; rows are concatenated in chain order and
/// the ESS of each column is summed over chains.
/// `visitors`, when set, supplies the state visitor of each chain.
ChainRun run_chains(const GibbsSampler& sampler, std::size_t chains,
                    std::size_t samples_per_chain,
                    const std::vector<Observable>& observables, std::size_t workers = 1,
                    const std::function<StateVisitor(std::size_t)>& visitors = {});

// ---------------------------------------------------------------------------
// Checkpoints

/// Versioned little-endian blob: magic, version, config hash, grid, floor,
/// ceiling, line values, rng state, counters, checksum.
std::string checkpoint(const ChainState& state, std::uint64_t config_hash);

/// Throws DecodeError on truncation, corruption, version or hash mismatch.
ChainState restore(std::string_view blob, std::uint64_t expected_config_hash);

// ---------------------------------------------------------------------------
// Untilted proposal acceptance

struct SurvivalEstimate {
  std::uint64_t trials = 0;
  std::uint64_t survived = 0;          // refined (continuous-time) survival
  std::uint64_t survived_at_nodes = 0; // survival checked at coarse nodes only
  double frequency() const { return trials ? double(survived) / double(trials) : 0.0; }
  double node_frequency() const {
    return trials ? double(survived_at_nodes) / double(trials) : 0.0;
  }
  double standard_error() const;
};

/// Frequency with which k independent untilted bridge proposals from x to y
/// over `duration` stay strictly ordered (and positive when `wall`). Each
/// proposal is drawn on `coarse_steps` cells; cells where a constraint is
/// within six standard deviations are refined by exact dyadic bridge
/// midpoints down to `refine_levels` halvings.
SurvivalEstimate unconstrained_acceptance(const std::vector<double>& x,
                                          const std::vector<double>& y, double duration,
                                          bool wall, std::size_t coarse_steps,
                                          std::size_t refine_levels, std::uint64_t trials,
                                          RandomStream& rng);

}  // namespace tiltline
