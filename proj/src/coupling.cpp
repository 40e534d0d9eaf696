#include <cmath>
#include <limits>

#include "tiltline/errors.hpp"
#include "tiltline/sampler.hpp"

namespace tiltline {

namespace {

std::pair<std::vector<double>, std::vector<double>> pinned_values(const SamplerConfig& c) {
  if (const auto* fixed = std::get_if<FixedBoundary>(&c.boundary)) {
    return {fixed->left, fixed->right};
  }
  if (std::holds_alternative<ZeroBoundary>(c.boundary)) {
    return {std::vector<double>(c.n, 0.0), std::vector<double>(c.n, 0.0)};
  }
  throw DomainError("monotone coupling is only offered for fixed or zero boundaries");
}

bool below_everywhere(const std::optional<Path>& lo, const std::optional<Path>& hi,
                      double absent, std::size_t size) {
  for (std::size_t j = 0; j < size; ++j) {
    const double a = lo ? (*lo)[j] : absent;
    const double b = hi ? (*hi)[j] : absent;
    if (!(a <= b)) return false;
  }
  return true;
}

void check_coupling(const GibbsSampler& lo_sampler, const GibbsSampler& hi_sampler) {
  const SamplerConfig& lo = lo_sampler.config();
  const SamplerConfig& hi = hi_sampler.config();
  if (!(lo.grid == hi.grid) || lo.n != hi.n) {
    throw DomainError("coupled chains need identical grids and line counts");
  }
  const auto [lo_left, lo_right] = pinned_values(lo);
  const auto [hi_left, hi_right] = pinned_values(hi);
  for (std::size_t i = 0; i < lo.n; ++i) {
    if (!(lo_left[i] <= hi_left[i]) || !(lo_right[i] <= hi_right[i])) {
      throw DomainError("coupling needs lo boundary data <= hi boundary data");
    }
    const Path& rl = lo_sampler.tilt_weights(i);
    const Path& rh = hi_sampler.tilt_weights(i);
    for (std::size_t j = 0; j < rl.size(); ++j) {
      if (!(rl[j] >= rh[j])) throw DomainError("coupling needs lo tilts >= hi tilts");
    }
  }
  const std::size_t size = lo.grid.size();
  const double inf = std::numeric_limits<double>::infinity();
  if (!below_everywhere(lo.floor, hi.floor, 0.0, size) ||
      !below_everywhere(lo.ceiling, hi.ceiling, inf, size)) {
    throw DomainError("coupling needs lo floor/ceiling <= hi floor/ceiling");
  }
}

}  // namespace

void coupled_sweep(const GibbsSampler& lo_sampler, ChainState& lo,
                   const GibbsSampler& hi_sampler, ChainState& hi) {
  check_coupling(lo_sampler, hi_sampler);
  const std::size_t n = lo_sampler.line_count();
  const std::size_t m = lo_sampler.config().grid.steps();
  // Every site update is an inverse-CDF draw with a shared uniform; the
  // conditional mean and window are monotone in the neighbours, the tilt
  // and the floor/ceiling, so lo <= hi survives each update.
  for (std::size_t line = 0; line < n; ++line) {
    for (std::size_t j = 1; j < m; ++j) {
      const double u = lo.rng.uniform();
      lo_sampler.update_site(lo, line, j, u);
      hi_sampler.update_site(hi, line, j, u);
    }
  }
  hi.rng = lo.rng;
  ++lo.sweeps_done;
  ++hi.sweeps_done;
}

}  // namespace tiltline
