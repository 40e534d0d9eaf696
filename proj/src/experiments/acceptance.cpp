#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tiltline/errors.hpp"
#include "tiltline/experiments.hpp"

namespace fs = std::filesystem;

namespace tiltline::experiments {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

SamplerConfig base_config(std::size_t n, double left, double right, double a) {
  SamplerConfig c;
  c.n = n;
  c.grid = TimeGrid::with_spacing(left, right, 0.05);
  c.tilts = a > 0.0 ? TiltSchedule::geometric(a, 2.0) : TiltSchedule::none();
  c.boundary = ZeroBoundary{};
  return c;
}

std::vector<double> one_point_series(const SamplerConfig& cfg, std::size_t line, double t,
                                     std::size_t samples) {
  GibbsSampler sampler(cfg);
  const auto run = run_chain(sampler, samples, {Observable::one_point(line, t)});
  return run.table.values[0];
}

// ---------------------------------------------------------------------------

Gate oracle_equivalence(const AcceptanceOptions& o) {
  std::string detail;
  double worst = 0.0;
  bool pass = true;

  SamplerConfig one = base_config(1, -1.0, 1.0, 1.0);
  one.block_len = one.grid.size();
  one.max_rejections = 1000000;
  one.burnin = 10;
  one.seed = derive_seed(o.seed, 1, 1);
  const auto xs = one_point_series(one, 1, 0.0, 1'100'000);
  const double ess = effective_sample_size(xs);
  const MarginalTable m1 = transfer_marginals(one);
  const double ks1 = ks_statistic(xs, m1.cdf_function(*one.grid.node_at(0.0), 0));
  pass = pass && ks1 < 0.01 && ess >= 1e6;
  worst = std::max(worst, ks1 / 0.01);
  detail += "n=1 KS " + fmt(ks1) + " ESS " + fmt(ess);

  for (double a : {0.0, 1.0}) {
    SamplerConfig two = base_config(2, 0.0, 1.0, a);
    two.boundary = FixedBoundary{{2.0, 1.0}, {2.0, 1.0}};
    two.block_len = two.grid.size();
    two.max_rejections = 100000;
    two.seed = derive_seed(o.seed, 2, a > 0 ? 1 : 0);
    GibbsSampler sampler(two);
    const auto run = run_chain(sampler, 200'000,
                               {Observable::one_point(1, 0.5), Observable::one_point(2, 0.5)});
    const MarginalTable m2 = transfer_marginals(two);
    const std::size_t mid = *two.grid.node_at(0.5);
    for (std::size_t line = 0; line < 2; ++line) {
      const double ks = ks_statistic(run.table.values[line], m2.cdf_function(mid, line));
      pass = pass && ks < 0.015;
      worst = std::max(worst, ks / 0.015);
      detail += "; n=2 a=" + fmt(a) + " line " + std::to_string(line + 1) + " KS " + fmt(ks) +
                " ESS " + fmt(run.diagnostics.ess[line]);
    }
  }
  return {"oracle equivalence", worst, 0.0, worst, 1.0, pass, detail};
}

Gate untilted_exactness(const AcceptanceOptions& o) {
  RandomStream rng(derive_seed(o.seed, 2, 0));
  const double exact = -std::expm1(-1.0);
  const auto wall = unconstrained_acceptance({1.0}, {1.0}, 2.0, true, 32, 20, 1'000'000, rng);
  const auto km = unconstrained_acceptance({2.0, 1.0}, {2.0, 1.0}, 1.0, false, 32, 20, 1'000'000, rng);
  const double z1 = (wall.frequency() - reflection_positive_prob(1, 1, 2)) / wall.standard_error();
  const double z2 = (km.frequency() - km_prob(std::vector<double>{2, 1}, std::vector<double>{2, 1}, 1, false).probability) /
                    km.standard_error();
  const double worst = std::max(std::abs(z1), std::abs(z2));
  return {"untilted exactness", worst, 0.0, worst, 4.0, worst <= 4.0,
          "wall " + fmt(wall.frequency()) + " (z " + fmt(z1) + "), pair " + fmt(km.frequency()) +
              " (z " + fmt(z2) + "), exact " + fmt(exact)};
}

Gate curved_max_tightness(const AcceptanceOptions& o) {
  const Observable obs = Observable::curved(1, 0.25, {-1.0, 1.0});
  std::vector<EstimateCI> est;
  std::string detail;
  bool pass = true;
  double worst = 0.0;
  const std::pair<std::size_t, double> settings[] = {{3, 2.0}, {5, 3.0}, {8, 4.0}};
  for (const auto& [n, T] : settings) {
    SamplerConfig c = base_config(n, -T, T, 1.0);
    c.boundary = FreeBoundary{};
    c.burnin = 500;
    c.seed = derive_seed(o.seed, 3, n);
    GibbsSampler sampler(c);
    const auto run = run_chains(sampler, 4, 5000, {obs}, o.workers);
    EstimateCI e = estimate_mean(run.table.values[0]);
    e.ess = std::min(run.diagnostics.ess[0], double(run.table.rows()));
    double ss = 0.0;
    for (double v : run.table.values[0]) ss += (v - e.estimate) * (v - e.estimate);
    e.standard_error = std::sqrt(ss / double(run.table.rows() - 1) / e.ess);
    const double rel = e.standard_error / e.estimate;
    pass = pass && std::isfinite(e.estimate) && rel < 0.05;
    worst = std::max(worst, rel / 0.05);
    detail += (detail.empty() ? "" : "; ") + std::string("(") + std::to_string(n) + "," + fmt(T) +
              ") " + fmt(e.estimate) + " se " + fmt(e.standard_error);
    est.push_back(e);
  }
  for (std::size_t a = 0; a < est.size(); ++a) {
    for (std::size_t b = a + 1; b < est.size(); ++b) {
      const double r = std::abs(est[a].estimate - est[b].estimate) / joint_half_width(est[a], est[b]);
      worst = std::max(worst, r);
      pass = pass && r <= 1.0;
    }
  }
  return {"curved maximum tightness", worst, 0.0, worst, 1.0, pass, detail};
}

Gate maximum_scaling(const AcceptanceOptions& o) {
  SamplerConfig c = base_config(6, -3.0, 3.0, 1.0);
  c.burnin = 500;
  c.seed = derive_seed(o.seed, 4, 0);
  GibbsSampler sampler(c);
  const std::vector<std::size_t> ks = {1, 2, 3};
  std::vector<Observable> obs;
  for (std::size_t k : ks) obs.push_back(Observable::maximum(k, {-1.0, 1.0}));
  const auto run = run_chains(sampler, 2, 10000, obs, o.workers);
  const auto table = max_tail_scan(run.table.values, ks, {2.0, 4.0, 8.0}, 2.0);
  double worst = 0.0;
  std::string detail = "reference C " + fmt(table.reference_C);
  for (const auto& cell : table.cells) {
    worst = std::max(worst, cell.M * cell.probability.lower);
    detail += "; k=" + std::to_string(cell.k) + " M=" + fmt(cell.M) + " p=" +
              fmt(cell.probability.estimate) + " [" + fmt(cell.probability.lower) + "," +
              fmt(cell.probability.upper) + "]";
  }
  return {"maximum scaling", worst, 0.0, table.fitted_C, table.reference_C,
          table.single_constant_fits, detail};
}

Gate coupling_invariant(const AcceptanceOptions& o) {
  std::size_t violations = 0;
  const std::size_t sweeps = 10000;
  {
    SamplerConfig hi = base_config(3, -2.0, 2.0, 1.0), lo = hi;
    lo.tilts = TiltSchedule::geometric(2.0, 2.0);
    GibbsSampler ls(lo), hs(hi);
    ChainState a = ls.initial_state(derive_seed(o.seed, 5, 0)), b = hs.initial_state(derive_seed(o.seed, 5, 0));
    for (std::size_t s = 0; s < sweeps; ++s) {
      coupled_sweep(ls, a, hs, b);
      if (!nodewise_ordered(a.ensemble, b.ensemble)) ++violations;
    }
  }
  {
    SamplerConfig lo = base_config(3, -2.0, 2.0, 1.0);
    lo.boundary = FixedBoundary{{3.0, 2.0, 1.0}, {3.0, 2.0, 1.0}};
    SamplerConfig hi = lo;
    hi.floor = Path(hi.grid.size(), 0.5);
    GibbsSampler ls(lo), hs(hi);
    ChainState a = ls.initial_state(derive_seed(o.seed, 5, 1)), b = hs.initial_state(derive_seed(o.seed, 5, 1));
    for (std::size_t s = 0; s < sweeps; ++s) {
      coupled_sweep(ls, a, hs, b);
      if (!nodewise_ordered(a.ensemble, b.ensemble)) ++violations;
    }
  }
  return {"monotone coupling", double(violations), 0.0, double(violations), 0.0, violations == 0,
          "2 x " + std::to_string(sweeps) + " coupled sweeps (tilts 2 vs 1, floors 0 vs 0.5)"};
}

Gate gibbs_property(const AcceptanceOptions& o) {
  SamplerConfig c = base_config(2, -1.0, 1.0, 1.0);
  c.boundary = FixedBoundary{{2.0, 1.0}, {2.0, 1.0}};
  c.thin = 2;
  c.seed = derive_seed(o.seed, 6, 0);
  GibbsSampler sampler(c);
  std::vector<Ensemble> states;
  states.reserve(100000);
  run_chain(sampler, 100000, {}, [&](const ChainState& s) { states.push_back(s.ensemble); });
  const auto r = gibbs_consistency(sampler, states, -0.5, 0.5, derive_seed(o.seed, 6, 1), 0.01);
  const double p = *std::min_element(r.p_values.begin(), r.p_values.end());
  return {"Brownian-Gibbs consistency", p, 0.0, 1.0, 0.01, r.passed,
          "pairs " + std::to_string(r.pairs) + ", outside identical " +
              (r.outside_identical ? "yes" : "no") + ", p " + fmt(r.p_values[0]) + " / " +
              fmt(r.p_values[1])};
}

Gate minimal_gaps(const AcceptanceOptions& o) {
  SamplerConfig c = base_config(3, -2.0, 2.0, 1.0);
  c.burnin = 500;
  c.seed = derive_seed(o.seed, 7, 0);
  GibbsSampler sampler(c);
  const auto run = run_chains(sampler, 2, 25000, {Observable::gap(3, {-0.5, 0.5})}, o.workers);
  const auto table = gap_tail(run.table.values[0], {0.1, 0.05, 0.025, 0.0125});
  double worst = 0.0;
  std::string detail = "reference C " + fmt(table.reference_C);
  for (const auto& cell : table.cells) {
    worst = std::max(worst, cell.probability.lower / cell.delta);
    detail += "; d=" + fmt(cell.delta) + " p=" + fmt(cell.probability.estimate) + " [" +
              fmt(cell.probability.lower) + "," + fmt(cell.probability.upper) + "]";
  }
  return {"minimal gaps", worst, 0.0, worst, table.reference_C, table.monotone && table.linear_bound,
          detail + (table.monotone ? "" : "; not monotone")};
}

Gate monotone_convergence(const AcceptanceOptions& o) {
  ThresholdEvent ev;
  ev.conditions.push_back({1, 0.0, 0.5, true});
  std::vector<SamplerConfig> configs;
  const std::pair<std::size_t, double> settings[] = {{2, 1.0}, {4, 2.0}, {6, 3.0}};
  for (const auto& [n, T] : settings) {
    SamplerConfig c = base_config(n, -T, T, 1.0);
    c.burnin = 500;
    c.seed = derive_seed(o.seed, 8, n);
    configs.push_back(c);
  }
  const std::size_t samples = 40000;
  const ScanResult r = monotone_scan(configs, ev, samples);
  SamplerConfig moved = configs.back();
  moved.grid = TimeGrid(moved.grid.left() - 1.0, moved.grid.right() - 1.0, moved.grid.steps());
  const double base = r.settings.back().estimate.estimate;
  const double shifted = monotone_scan({moved}, ev.shifted(-1.0), samples).settings[0].estimate.estimate;
  std::string detail;
  for (const auto& s : r.settings) {
    detail += "(" + std::to_string(s.n) + "," + fmt(s.right) + ") " + fmt(s.estimate.estimate) +
              " [" + fmt(s.estimate.lower) + "," + fmt(s.estimate.upper) + "]; ";
  }
  detail += std::string("non-decreasing ") + (r.non_decreasing ? "yes" : "no") + ", saturated " +
            (r.saturated ? "yes" : "no") + ", shift " + (base == shifted ? "exact" : "differs");
  const auto& a = r.settings[1].estimate;
  const auto& b = r.settings[2].estimate;
  const double diff = std::abs(b.estimate - a.estimate);
  return {"zero-boundary monotone convergence", diff, 0.0, diff, joint_half_width(a, b),
          r.non_decreasing && r.saturated && base == shifted, detail};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Gate determinism(const AcceptanceOptions& o) {
  json doc = {{"kind", "simulate"},
              {"seed", o.seed},
              {"chains", 2},
              {"samples", 200},
              {"observables", {"one_point:1:0", "curved_max:1:0.25:-1:1", "min_gap:2:-0.5:0.5"}},
              {"sampler", {{"n", 2}, {"burnin", 20}}}};
  std::string bytes[2];
  for (int r = 0; r < 2; ++r) {
    doc["output"] = (fs::path(o.scratch_dir) / ("determinism_" + std::to_string(r))).string();
    const auto cfg = parse_config(doc);
    run_experiment(cfg);
    bytes[r] = slurp((fs::path(cfg.output()) / "samples.csv").string()) +
               slurp((fs::path(cfg.output()) / "summary.csv").string());
  }
  const bool csv_same = bytes[0] == bytes[1];

  bool resume_same = true;
  for (int variant = 0; variant < 2; ++variant) {
    SamplerConfig c = base_config(3, -1.0, 1.0, 1.0);
    if (variant == 1) c.boundary = FreeBoundary{};
    c.seed = derive_seed(o.seed, 9, variant);
    GibbsSampler sampler(c);
    ChainState full = sampler.initial_state();
    for (int s = 0; s < 100; ++s) sampler.sweep(full);
    ChainState half = sampler.initial_state();
    for (int s = 0; s < 50; ++s) sampler.sweep(half);
    ChainState resumed = restore(checkpoint(half, c.hash()), c.hash());
    for (int s = 0; s < 50; ++s) sampler.sweep(resumed);
    resume_same = resume_same && full == resumed && checkpoint(full, c.hash()) == checkpoint(resumed, c.hash());
  }
  const double ok = (csv_same && resume_same) ? 1.0 : 0.0;
  return {"determinism and checkpoints", ok, 0.0, 1.0, 1.0, csv_same && resume_same,
          std::string("csv identical ") + (csv_same ? "yes" : "no") + ", 100 = 50 + restore + 50 " +
              (resume_same ? "yes" : "no")};
}

}  // namespace

const std::vector<Criterion>& acceptance_criteria() {
  static const std::vector<Criterion> list = {
      {1, "oracle equivalence", oracle_equivalence},
      {2, "untilted exactness", untilted_exactness},
      {3, "curved maximum tightness", curved_max_tightness},
      {4, "maximum scaling", maximum_scaling},
      {5, "monotone coupling", coupling_invariant},
      {6, "Brownian-Gibbs consistency", gibbs_property},
      {7, "minimal gaps", minimal_gaps},
      {8, "zero-boundary monotone convergence", monotone_convergence},
      {9, "determinism and checkpoints", determinism},
  };
  return list;
}

std::vector<Gate> run_acceptance(const AcceptanceOptions& options, const std::vector<int>& selected,
                                 const std::function<void(int, const Gate&)>& on_gate) {
  std::error_code ec;
  fs::create_directories(options.scratch_dir, ec);
  if (ec) throw IoError("cannot create " + options.scratch_dir + ": " + ec.message());
  std::vector<Gate> out;
  for (const auto& c : acceptance_criteria()) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.number) == selected.end()) {
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    Gate g;
    try {
      g = c.run(options);
    } catch (const std::exception& e) {
      g = {c.title, 0, 0, 0, 0, false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    g.detail += "; " + fmt(secs) + " s";
    if (on_gate) on_gate(c.number, g);
    out.push_back(std::move(g));
  }
  return out;
}

std::string format_gate_line(int number, const Gate& g) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "[%s] %d %s: estimate %.6g, interval [%.6g, %.6g], threshold %.6g",
                g.passed ? "PASS" : "FAIL", number, g.name.c_str(), g.estimate, g.lower, g.upper,
                g.threshold);
  std::string s = buf;
  if (!g.detail.empty()) s += " | " + g.detail;
  return s;
}

}  // namespace tiltline::experiments
