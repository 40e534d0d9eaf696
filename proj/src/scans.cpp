#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "tiltline/errors.hpp"
#include "tiltline/random.hpp"
#include "tiltline/sampler.hpp"
#include "tiltline/stats.hpp"

namespace tiltline {

bool ThresholdEvent::increasing() const {
  return std::all_of(conditions.begin(), conditions.end(),
                     [](const Condition& c) { return c.above; });
}

bool ThresholdEvent::holds(const Ensemble& e) const {
  for (const auto& c : conditions) {
    if (c.line == 0 || c.line > e.line_count()) throw DomainError("event line out of range");
    const auto j = e.grid.node_at(c.time);
    if (!j) throw DomainError("event time is not a grid node");
    const double v = e.lines[c.line - 1][*j];
    if (c.above ? !(v > c.threshold) : !(v < c.threshold)) return false;
  }
  return true;
}

ThresholdEvent ThresholdEvent::shifted(double shift) const {
  ThresholdEvent out = *this;
  for (auto& c : out.conditions) c.time += shift;
  return out;
}

std::string ThresholdEvent::name() const {
  if (conditions.empty()) return "always";
  std::string s;
  for (const auto& c : conditions) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "X%zu(%g)%s%g", c.line, c.time, c.above ? ">" : "<",
                  c.threshold);
    if (!s.empty()) s += "&";
    s += buf;
  }
  return s;
}

ScanResult monotone_scan(const std::vector<SamplerConfig>& configs, const ThresholdEvent& event,
                         std::size_t n_samples, double level) {
  if (!event.increasing()) throw DomainError("monotone scan requires an increasing event");
  if (configs.empty()) throw DomainError("monotone scan needs at least one config");
  if (n_samples == 0) throw InsufficientDataError("monotone scan needs samples");
  for (std::size_t c = 0; c < configs.size(); ++c) {
    const auto& cfg = configs[c];
    if (!std::holds_alternative<ZeroBoundary>(cfg.boundary)) {
      throw DomainError("monotone scan requires zero boundary conditions");
    }
    for (const auto& cond : event.conditions) {
      if (cond.line == 0 || cond.line > cfg.n) throw DomainError("event line exceeds n");
      if (!cfg.grid.node_at(cond.time)) throw DomainError("event time is not a grid node");
    }
    if (c > 0) {
      const auto& prev = configs[c - 1];
      const bool grows = cfg.n >= prev.n && cfg.grid.left() <= prev.grid.left() &&
                         cfg.grid.right() >= prev.grid.right();
      const bool strict = cfg.n > prev.n || cfg.grid.left() < prev.grid.left() ||
                          cfg.grid.right() > prev.grid.right();
      if (!grows || !strict) {
        throw DomainError("scan configs must strictly increase in (n, -left, right)");
      }
    }
  }

  ScanResult result;
  result.observable = event.name();
  for (const auto& cfg : configs) {
    GibbsSampler sampler(cfg);
    std::vector<double> ind;
    ind.reserve(n_samples);
    run_chain(sampler, n_samples, {},
              [&](const ChainState& s) { ind.push_back(event.holds(s.ensemble) ? 1.0 : 0.0); });
    result.settings.push_back(
        {cfg.n, cfg.grid.left(), cfg.grid.right(), estimate_proportion(ind, level)});
  }
  result.non_decreasing = true;
  for (std::size_t i = 1; i < result.settings.size(); ++i) {
    const auto& a = result.settings[i - 1].estimate;
    const auto& b = result.settings[i].estimate;
    if (b.estimate < a.estimate - joint_half_width(a, b)) result.non_decreasing = false;
  }
  if (result.settings.size() >= 2) {
    const auto& a = result.settings[result.settings.size() - 2].estimate;
    const auto& b = result.settings.back().estimate;
    result.saturated = std::abs(b.estimate - a.estimate) <= joint_half_width(a, b);
  }
  return result;
}

GibbsConsistencyResult gibbs_consistency(const GibbsSampler& sampler,
                                         std::span<const Ensemble> states, double t0,
                                         double t1, std::uint64_t seed, double threshold) {
  if (states.empty()) throw InsufficientDataError("no stored states");
  const TimeGrid& grid = sampler.config().grid;
  if (!(t1 >= t0)) throw DomainError("resample interval must satisfy t0 <= t1");
  const auto s = grid.node_at(t0);
  const auto t = grid.node_at(t1);
  if (!s || !t) throw DomainError("resample interval is not grid-aligned");

  GibbsConsistencyResult out;
  out.pairs = states.size();
  const std::size_t n = sampler.line_count();
  if (*t < *s + 2) {
    out.p_values.assign(n, 1.0);
    return out;
  }
  const std::size_t mid = (*s + *t) / 2;
  const std::uint64_t hash = sampler.config().hash();
  auto& before = out.midpoint_before;
  auto& after = out.midpoint_after;
  before.assign(n, {});
  after.assign(n, {});
  for (std::size_t r = 0; r < states.size(); ++r) {
    ChainState copy{states[r], RandomStream(derive_seed(seed, r, hash)), 0,
                    std::vector<LineStats>(n), {}, {}, false};
    for (std::size_t i = 0; i < n; ++i) sampler.resample_block(copy, i, *s, *t);
    for (std::size_t i = 0; i < n; ++i) {
      const Path& a = states[r].lines[i];
      const Path& b = copy.ensemble.lines[i];
      for (std::size_t j = 0; j < a.size(); ++j) {
        if ((j <= *s || j >= *t) && a[j] != b[j]) out.outside_identical = false;
      }
      before[i].push_back(a[mid]);
      after[i].push_back(b[mid]);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double ess = effective_sample_size(before[i]);
    const double d = ks_statistic(before[i], after[i]);
    const double p = ks_p_value(d, ess / 2.0);
    out.p_values.push_back(p);
    if (!(p > threshold)) out.passed = false;
  }
  if (!out.outside_identical) out.passed = false;
  return out;
}

}  // namespace tiltline
