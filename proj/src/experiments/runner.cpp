#include <algorithm>
#include <charconv>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "tiltline/errors.hpp"
#include "tiltline/experiments.hpp"

namespace fs = std::filesystem;

namespace tiltline::experiments {

namespace {

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

struct Context {
  const ExperimentConfig& config;
  std::string dir;
  std::ostream* log;
  std::vector<Gate> gates;
  std::vector<std::string> artifacts;

  std::string path(const std::string& name) const { return (fs::path(dir) / name).string(); }

  void save(CsvTable table, const std::string& name) {
    table.preamble = "tiltline csv v" + std::to_string(kCsvSchema) + " config_hash=" +
                     hex(config.hash());
    table.save(path(name));
    artifacts.push_back(name);
  }

  void save(const Plot& plot, const std::string& name) {
    std::string body = plot.svg();
    body.insert(body.find('\n') + 1, "<!-- config_hash=" + hex(config.hash()) + " -->\n");
    std::ofstream out(path(name), std::ios::binary);
    if (!out) throw IoError("cannot write " + path(name));
    out << body;
    artifacts.push_back(name);
  }

  void note(const std::string& s) const {
    if (log) *log << s << '\n';
  }

  void gate(Gate g) {
    note(format_gate_line(int(gates.size()) + 1, g));
    gates.push_back(std::move(g));
  }
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<double> doubles(const json& v) { return v.get<std::vector<double>>(); }

Window window_param(const json& p) {
  const auto w = doubles(p.at("window"));
  if (w.size() != 2 || !(w[0] < w[1])) throw ConfigError("params.window must be [lo, hi] with lo < hi");
  return {w[0], w[1]};
}

std::vector<std::pair<std::size_t, double>> settings_param(const json& p) {
  std::vector<std::pair<std::size_t, double>> out;
  for (const auto& s : p.at("settings")) {
    if (!s.is_array() || s.size() != 2 || !s[0].is_number_unsigned() || !s[1].is_number()) {
      throw ConfigError("params.settings entries must be [n, T]");
    }
    out.emplace_back(s[0].get<std::size_t>(), s[1].get<double>());
  }
  if (out.empty()) throw ConfigError("params.settings must not be empty");
  return out;
}

ThresholdEvent event_param(const json& p) {
  ThresholdEvent ev;
  for (const auto& c : p.at("event")) {
    ev.conditions.push_back({c.at("line").get<std::size_t>(), c.at("time").get<double>(),
                             c.at("threshold").get<double>(), c.value("above", true)});
  }
  return ev;
}

SamplerConfig with_setting(SamplerConfig base, std::size_t n, double T) {
  base.n = n;
  const double dt = base.grid.dt();
  base.grid = TimeGrid::with_spacing(-T, T, dt);
  if (auto* f = std::get_if<FixedBoundary>(&base.boundary)) {
    if (f->left.size() != n) throw ConfigError("fixed boundary data do not match scanned n");
  }
  if (base.floor || base.ceiling) throw ConfigError("scans support the default floor and ceiling only");
  base.validate();
  return base;
}

EstimateCI ci_from_series(const std::vector<double>& v, double ess, double level) {
  EstimateCI e = estimate_mean(v, level);
  e.ess = std::min(ess, double(v.size()));
  double ss = 0.0;
  for (double x : v) ss += (x - e.estimate) * (x - e.estimate);
  const double var = v.size() > 1 ? ss / double(v.size() - 1) : 0.0;
  e.standard_error = std::sqrt(var / std::max(e.ess, 1.0));
  const double z = z_for_level(level);
  e.lower = e.estimate - z * e.standard_error;
  e.upper = e.estimate + z * e.standard_error;
  return e;
}

ChainRun sample(const Context& ctx, const SamplerConfig& cfg, const std::vector<Observable>& obs) {
  GibbsSampler sampler(cfg);
  const json& d = ctx.config.doc;
  return run_chains(sampler, d.at("chains").get<std::size_t>(), d.at("samples").get<std::size_t>(),
                    obs, ctx.config.workers());
}

CsvTable sample_table(const SampleTable& t) {
  CsvTable csv;
  csv.header = {"chain", "sweep"};
  csv.header.insert(csv.header.end(), t.columns.begin(), t.columns.end());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    std::vector<std::string> row = {std::to_string(t.chain[r]), std::to_string(t.sweep[r])};
    for (const auto& col : t.values) row.push_back(format_double(col[r]));
    csv.add(std::move(row));
  }
  return csv;
}

Plot ecdf_plot(const std::string& title, const std::vector<std::pair<std::string, std::vector<double>>>& sets) {
  Plot p{title, "value", "CDF"};
  for (const auto& [label, values] : sets) {
    std::vector<double> v = values;
    std::sort(v.begin(), v.end());
    PlotSeries s{label};
    const std::size_t stride = std::max<std::size_t>(1, v.size() / 400);
    for (std::size_t i = 0; i < v.size(); i += stride) {
      s.x.push_back(v[i]);
      s.y.push_back(double(i + 1) / double(v.size()));
    }
    p.series.push_back(std::move(s));
  }
  return p;
}

// ---------------------------------------------------------------------------

void run_simulate(Context& ctx, const std::optional<std::string>& resume) {
  const auto& d = ctx.config.doc;
  const SamplerConfig cfg = ctx.config.sampler();
  const auto obs = ctx.config.observables();
  GibbsSampler sampler(cfg);
  const std::size_t chains = d.at("chains").get<std::size_t>();
  const std::size_t samples = d.at("samples").get<std::size_t>();
  const std::size_t every = d.at("checkpoint_every").get<std::size_t>();
  const std::uint64_t hash = cfg.hash();

  auto make_visitor = [&](std::size_t c) -> StateVisitor {
    if (every == 0) return {};
    auto counter = std::make_shared<std::size_t>(0);
    const std::string file = ctx.path("checkpoint_chain" + std::to_string(c) + ".bin");
    return [=](const ChainState& s) {
      if (++*counter % every != 0) return;
      std::ofstream out(file, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot write " + file);
      const std::string blob = checkpoint(s, hash);
      out.write(blob.data(), std::streamsize(blob.size()));
    };
  };

  ChainRun run;
  if (resume) {
    if (chains != 1) throw ConfigError("--resume requires chains = 1");
    std::ifstream in(*resume, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint " + *resume);
    std::stringstream buf;
    buf << in.rdbuf();
    ChainState state = restore(buf.str(), hash);
    const std::size_t thin = std::max<std::size_t>(1, cfg.thin);
    const std::uint64_t done = state.sweeps_done > cfg.burnin ? (state.sweeps_done - cfg.burnin) / thin : 0;
    const std::size_t remaining = done >= samples ? 0 : samples - std::size_t(done);
    ctx.note("resuming at sweep " + std::to_string(state.sweeps_done) + ", " +
             std::to_string(remaining) + " samples remaining");
    run = run_chain(sampler, remaining, obs, make_visitor(0), std::move(state));
  } else {
    run = run_chains(sampler, chains, samples, obs, ctx.config.workers(), make_visitor);
  }
  ctx.save(sample_table(run.table), "samples.csv");

  CsvTable summary;
  summary.header = {"observable", "estimate", "standard_error", "ess", "lower", "upper", "level"};
  const double level = d.at("level").get<double>();
  for (std::size_t c = 0; c < run.table.columns.size(); ++c) {
    if (run.table.values[c].empty()) continue;
    const auto e = ci_from_series(run.table.values[c], run.diagnostics.ess[c], level);
    summary.add({run.table.columns[c], format_double(e.estimate), format_double(e.standard_error),
                 format_double(e.ess), format_double(e.lower), format_double(e.upper),
                 format_double(level)});
  }
  ctx.save(summary, "summary.csv");

  CsvTable diag;
  diag.header = {"line", "proposals", "acceptances", "halvings", "site_updates",
                 "endpoint_proposals", "endpoint_acceptances"};
  for (std::size_t i = 0; i < run.diagnostics.line_stats.size(); ++i) {
    const auto& s = run.diagnostics.line_stats[i];
    diag.add({std::to_string(i + 1), std::to_string(s.proposals), std::to_string(s.acceptances),
              std::to_string(s.halvings), std::to_string(s.site_updates),
              std::to_string(s.endpoint_proposals), std::to_string(s.endpoint_acceptances)});
  }
  ctx.save(diag, "diagnostics.csv");

  if (!run.table.columns.empty()) {
    Plot p{"trace of " + run.table.columns[0], "retained sample", run.table.columns[0]};
    PlotSeries s{run.table.columns[0]};
    const auto& col = run.table.values[0];
    const std::size_t stride = std::max<std::size_t>(1, col.size() / 1000);
    for (std::size_t r = 0; r < col.size(); r += stride) {
      s.x.push_back(double(r));
      s.y.push_back(col[r]);
    }
    p.series.push_back(std::move(s));
    ctx.save(p, "trace.svg");
  }
}

void run_oracle(Context& ctx) {
  const SamplerConfig cfg = ctx.config.sampler();
  const MarginalTable table = transfer_marginals(cfg, ctx.config.oracle());
  {
    std::ofstream out(ctx.path("marginals.csv"), std::ios::binary);
    if (!out) throw IoError("cannot write marginals.csv");
    out << "# tiltline csv v" << kCsvSchema << " config_hash=" << hex(ctx.config.hash()) << '\n';
    table.write_csv(out);
    ctx.artifacts.push_back("marginals.csv");
  }
  CsvTable summary;
  summary.header = {"node_time", "line", "mean"};
  for (std::size_t j = 0; j < table.grid.size(); ++j) {
    for (std::size_t i = 0; i < table.lines; ++i) {
      summary.add({format_double(table.grid.time(j)), std::to_string(i + 1),
                   format_double(table.mean(j, i))});
    }
  }
  ctx.save(summary, "summary.csv");
  const std::size_t mid = table.grid.steps() / 2;
  Plot p{"one-point densities at t = " + fmt(table.grid.time(mid)), "x", "density"};
  for (std::size_t i = 0; i < table.lines; ++i) {
    PlotSeries s{"line " + std::to_string(i + 1)};
    for (std::size_t k = 0; k < table.space.points; ++k) {
      s.x.push_back(table.space.x(k));
      s.y.push_back(table.density[mid][i][k]);
    }
    p.series.push_back(std::move(s));
  }
  ctx.save(p, "density.svg");
  ctx.note("log Z = " + fmt(table.log_partition) + ", boundary mass " + fmt(table.boundary_mass) +
           ", quadrature defect " + fmt(table.quadrature_defect));
  Gate g{"oracle boundary mass", table.boundary_mass, 0.0, table.boundary_mass, 1e-10,
         table.boundary_mass < 1e-10, "space points " + std::to_string(table.space.points)};
  ctx.gate(g);
}

void run_tightness(Context& ctx) {
  const auto& p = ctx.config.params();
  const double alpha = p.at("alpha").get<double>();
  const Window w = window_param(p);
  const double max_rel = p.at("max_rel_se").get<double>();
  const double level = ctx.config.doc.at("level").get<double>();
  const SamplerConfig base = ctx.config.sampler();
  const Observable obs = Observable::curved(1, alpha, w);
  std::vector<EstimateCI> est;
  CsvTable csv;
  csv.header = {"n", "T", "estimate", "standard_error", "ess", "lower", "upper", "relative_se"};
  Plot plot{"curved maximum of the top line", "T", "E xi"};
  PlotSeries mean{"estimate"}, lo{"lower CI", {}, {}, true}, hi{"upper CI", {}, {}, true};
  const auto settings = settings_param(p);
  for (const auto& [n, T] : settings) {
    const auto run = sample(ctx, with_setting(base, n, T), {obs});
    const auto e = ci_from_series(run.table.values[0], run.diagnostics.ess[0], level);
    est.push_back(e);
    const double rel = e.standard_error / std::abs(e.estimate);
    csv.add({std::to_string(n), format_double(T), format_double(e.estimate),
             format_double(e.standard_error), format_double(e.ess), format_double(e.lower),
             format_double(e.upper), format_double(rel)});
    mean.x.push_back(T), mean.y.push_back(e.estimate);
    lo.x.push_back(T), lo.y.push_back(e.lower);
    hi.x.push_back(T), hi.y.push_back(e.upper);
    ctx.gate({"relative SE n=" + std::to_string(n) + " T=" + fmt(T), rel, 0.0, rel, max_rel,
              std::isfinite(e.estimate) && rel < max_rel, "estimate " + fmt(e.estimate)});
  }
  double worst = 0.0;
  bool agree = true;
  for (std::size_t a = 0; a < est.size(); ++a) {
    for (std::size_t b = a + 1; b < est.size(); ++b) {
      const double ratio = std::abs(est[a].estimate - est[b].estimate) / joint_half_width(est[a], est[b]);
      worst = std::max(worst, ratio);
      if (ratio > 1.0) agree = false;
    }
  }
  ctx.gate({"mutual agreement within joint CI", worst, 0.0, worst, 1.0, agree,
            "largest |difference| / joint half-width"});
  plot.series = {mean, lo, hi};
  ctx.save(csv, "tightness.csv");
  ctx.save(plot, "tightness.svg");
}

void run_max_scaling(Context& ctx) {
  const auto& p = ctx.config.params();
  const Window w = window_param(p);
  const auto k_list = p.at("k_list").get<std::vector<std::size_t>>();
  const auto M_list = doubles(p.at("M_list"));
  const double level = ctx.config.doc.at("level").get<double>();
  const SamplerConfig cfg = ctx.config.sampler();
  if (!cfg.tilts.is_geometric()) throw ConfigError("max-scaling requires geometric tilts");
  std::vector<Observable> obs;
  for (std::size_t k : k_list) {
    if (k == 0 || k > cfg.n) throw ConfigError("params.k_list entries must lie in [1, n]");
    obs.push_back(Observable::maximum(k, w));
  }
  const auto run = sample(ctx, cfg, obs);
  const MaxTailTable table = max_tail_scan(run.table.values, k_list, M_list, cfg.tilts.lambda(), level);
  CsvTable csv;
  csv.header = {"k", "M", "threshold", "probability", "lower", "upper", "ess", "sparse"};
  Plot plot{"P(max X_k > lambda^(-(k-1)/3) M)", "M", "probability"};
  plot.log_x = plot.log_y = true;
  std::map<std::size_t, PlotSeries> by_k;
  for (const auto& c : table.cells) {
    csv.add({std::to_string(c.k), format_double(c.M), format_double(c.threshold),
             format_double(c.probability.estimate), format_double(c.probability.lower),
             format_double(c.probability.upper), format_double(c.probability.ess),
             c.sparse ? "1" : "0"});
    auto& s = by_k[c.k];
    s.label = "k = " + std::to_string(c.k);
    s.x.push_back(c.M);
    s.y.push_back(c.probability.upper);
  }
  for (auto& [k, s] : by_k) plot.series.push_back(s);
  PlotSeries fit{"C / M", {}, {}, true};
  for (double M : M_list) fit.x.push_back(M), fit.y.push_back(table.reference_C / M);
  plot.series.push_back(fit);
  ctx.save(csv, "max_scaling.csv");
  ctx.save(plot, "max_scaling.svg");
  double worst = 0.0;
  for (const auto& c : table.cells) worst = std::max(worst, c.M * c.probability.lower);
  ctx.gate({"single constant C fits all (k, M)", worst, 0.0, table.fitted_C, table.reference_C,
            table.single_constant_fits,
            "reference C " + fmt(table.reference_C) + ", fitted C " + fmt(table.fitted_C)});
}

void run_gap_scan(Context& ctx) {
  const auto& p = ctx.config.params();
  const Window w = window_param(p);
  const std::size_t k = p.at("gap_k").get<std::size_t>();
  const auto deltas = doubles(p.at("delta_list"));
  const double level = ctx.config.doc.at("level").get<double>();
  const SamplerConfig cfg = ctx.config.sampler();
  if (k < 2 || k > cfg.n) throw ConfigError("params.gap_k must lie in [2, n]");
  const auto run = sample(ctx, cfg, {Observable::gap(k, w)});
  const GapTable table = gap_tail(run.table.values[0], deltas, level);
  CsvTable csv;
  csv.header = {"delta", "probability", "lower", "upper", "ess", "upper_over_delta"};
  Plot plot{"P(minimal gap <= delta)", "delta", "probability"};
  PlotSeries est{"estimate"}, up{"upper CI", {}, {}, true}, lin{"C delta", {}, {}, true};
  for (const auto& c : table.cells) {
    csv.add({format_double(c.delta), format_double(c.probability.estimate),
             format_double(c.probability.lower), format_double(c.probability.upper),
             format_double(c.probability.ess),
             format_double(c.delta > 0 ? c.probability.upper / c.delta : 0.0)});
    est.x.push_back(c.delta), est.y.push_back(c.probability.estimate);
    up.x.push_back(c.delta), up.y.push_back(c.probability.upper);
    lin.x.push_back(c.delta), lin.y.push_back(table.reference_C * c.delta);
  }
  plot.series = {est, up, lin};
  ctx.save(csv, "gap_scan.csv");
  ctx.save(plot, "gap_scan.svg");
  ctx.gate({"gap probability decreases with delta", table.monotone ? 1.0 : 0.0, 0, 1, 1,
            table.monotone, ""});
  double worst = 0.0;
  for (const auto& c : table.cells) {
    if (c.delta > 0) worst = std::max(worst, c.probability.lower / c.delta);
  }
  ctx.gate({"P(g <= delta) / delta bounded", worst, 0.0, worst, table.reference_C,
            table.linear_bound, "reference C " + fmt(table.reference_C)});
}

void run_domination(Context& ctx) {
  const auto& p = ctx.config.params();
  SamplerConfig base = ctx.config.sampler();
  const double lambda = base.tilts.is_geometric() ? base.tilts.lambda() : 2.0;
  SamplerConfig lo_cfg = base, hi_cfg = base;
  lo_cfg.tilts = TiltSchedule::geometric(p.at("tilt_high").get<double>(), lambda);
  hi_cfg.tilts = TiltSchedule::geometric(p.at("tilt_low").get<double>(), lambda);
  if (!lo_cfg.tilts.dominates(hi_cfg.tilts, base.n, base.grid)) {
    throw ConfigError("params.tilt_high must be >= params.tilt_low");
  }
  const Observable obs = Observable::parse(p.at("observable").get<std::string>());
  if (!std::holds_alternative<FreeBoundary>(base.boundary)) {
    GibbsSampler lo_s(lo_cfg), hi_s(hi_cfg);
    ChainState lo = lo_s.initial_state(base.seed), hi = hi_s.initial_state(base.seed);
    const std::size_t sweeps = p.at("coupled_sweeps").get<std::size_t>();
    std::size_t violations = nodewise_ordered(lo.ensemble, hi.ensemble) ? 0 : 1;
    for (std::size_t s = 0; s < sweeps; ++s) {
      coupled_sweep(lo_s, lo, hi_s, hi);
      if (!nodewise_ordered(lo.ensemble, hi.ensemble)) ++violations;
    }
    ctx.gate({"coupled chains stay ordered", double(violations), 0, double(violations), 0,
              violations == 0, std::to_string(sweeps) + " coupled sweeps"});
  }
  const auto lo_run = sample(ctx, lo_cfg, {obs});
  const auto hi_run = sample(ctx, hi_cfg, {obs});
  const auto& a = lo_run.table.values[0];
  const auto& b = hi_run.table.values[0];
  const DominanceResult r = dominance_test(a, b, Direction::hi_dominates_lo, 999, base.seed);
  CsvTable csv;
  csv.header = {"statistic", "p_value", "accepted"};
  csv.add({format_double(r.statistic), format_double(r.p_value), r.accepted ? "1" : "0"});
  ctx.save(csv, "domination.csv");
  ctx.save(ecdf_plot(obs.name(), {{"tilt " + fmt(p.at("tilt_high").get<double>()), a},
                                  {"tilt " + fmt(p.at("tilt_low").get<double>()), b}}),
           "domination.svg");
  ctx.gate({"smaller tilt dominates", r.p_value, 0, 1, 0.05, r.accepted,
            "statistic " + fmt(r.statistic)});
}

void run_gibbs_check(Context& ctx) {
  const auto& p = ctx.config.params();
  const SamplerConfig cfg = ctx.config.sampler();
  GibbsSampler sampler(cfg);
  std::vector<Ensemble> states;
  const std::size_t samples = ctx.config.doc.at("samples").get<std::size_t>();
  states.reserve(samples);
  run_chain(sampler, samples, {}, [&](const ChainState& s) { states.push_back(s.ensemble); });
  const auto r = gibbs_consistency(sampler, states, p.at("t0").get<double>(),
                                   p.at("t1").get<double>(), cfg.seed + 1,
                                   p.at("threshold").get<double>());
  CsvTable csv;
  csv.header = {"line", "p_value"};
  for (std::size_t i = 0; i < r.p_values.size(); ++i) {
    csv.add({std::to_string(i + 1), format_double(r.p_values[i])});
  }
  ctx.save(csv, "gibbs_check.csv");
  std::vector<std::pair<std::string, std::vector<double>>> sets;
  for (std::size_t i = 0; i < r.midpoint_before.size(); ++i) {
    sets.push_back({"line " + std::to_string(i + 1) + " stored", r.midpoint_before[i]});
    sets.push_back({"line " + std::to_string(i + 1) + " resampled", r.midpoint_after[i]});
  }
  ctx.save(ecdf_plot("midpoint laws before and after resampling", sets), "gibbs_check.svg");
  ctx.gate({"outside values bit-identical", r.outside_identical ? 1.0 : 0.0, 0, 1, 1,
            r.outside_identical, std::to_string(r.pairs) + " pairs"});
  const double threshold = p.at("threshold").get<double>();
  for (std::size_t i = 0; i < r.p_values.size(); ++i) {
    ctx.gate({"inside KS line " + std::to_string(i + 1), r.p_values[i], 0, 1, threshold,
              r.p_values[i] > threshold, ""});
  }
}

void run_monotone_scan(Context& ctx) {
  const auto& p = ctx.config.params();
  const SamplerConfig base = ctx.config.sampler();
  const ThresholdEvent ev = event_param(p);
  const std::size_t samples = ctx.config.doc.at("samples").get<std::size_t>();
  const double level = ctx.config.doc.at("level").get<double>();
  std::vector<SamplerConfig> configs;
  for (const auto& [n, T] : settings_param(p)) configs.push_back(with_setting(base, n, T));
  const ScanResult r = monotone_scan(configs, ev, samples, level);

  const double shift = p.at("shift").get<double>();
  SamplerConfig moved = configs.back();
  moved.grid = TimeGrid(moved.grid.left() - shift, moved.grid.right() - shift, moved.grid.steps());
  const ScanResult again = monotone_scan({configs.back()}, ev, samples, level);
  const ScanResult shifted = monotone_scan({moved}, ev.shifted(-shift), samples, level);
  const double a = again.settings[0].estimate.estimate, b = shifted.settings[0].estimate.estimate;

  CsvTable csv;
  csv.header = {"n", "left", "right", "probability", "lower", "upper", "ess"};
  Plot plot{"P(" + r.observable + ")", "setting", "probability"};
  PlotSeries est{"estimate"}, lo{"lower CI", {}, {}, true}, hi{"upper CI", {}, {}, true};
  for (std::size_t i = 0; i < r.settings.size(); ++i) {
    const auto& s = r.settings[i];
    csv.add({std::to_string(s.n), format_double(s.left), format_double(s.right),
             format_double(s.estimate.estimate), format_double(s.estimate.lower),
             format_double(s.estimate.upper), format_double(s.estimate.ess)});
    est.x.push_back(double(i + 1)), est.y.push_back(s.estimate.estimate);
    lo.x.push_back(double(i + 1)), lo.y.push_back(s.estimate.lower);
    hi.x.push_back(double(i + 1)), hi.y.push_back(s.estimate.upper);
  }
  plot.series = {est, lo, hi};
  ctx.save(csv, "monotone_scan.csv");
  ctx.save(plot, "monotone_scan.svg");
  ctx.gate({"non-decreasing within CIs", r.non_decreasing ? 1.0 : 0.0, 0, 1, 1, r.non_decreasing, ""});
  const auto& l1 = r.settings.size() >= 2 ? r.settings[r.settings.size() - 2].estimate
                                           : r.settings.back().estimate;
  const auto& l2 = r.settings.back().estimate;
  ctx.gate({"last two settings agree", std::abs(l2.estimate - l1.estimate), 0,
            std::abs(l2.estimate - l1.estimate), joint_half_width(l1, l2), r.saturated, ""});
  ctx.gate({"time shift reproduces estimate", std::abs(a - b), 0, std::abs(a - b), 0, a == b,
            "shift " + fmt(shift)});
}

void run_accept(Context& ctx) {
  const auto& p = ctx.config.params();
  AcceptanceOptions opt;
  opt.seed = ctx.config.seed();
  opt.workers = ctx.config.workers();
  opt.scratch_dir = ctx.path("scratch");
  const auto selected = p.at("criteria").get<std::vector<int>>();
  const auto gates = run_acceptance(opt, selected, [&](int number, const Gate& g) {
    ctx.note(format_gate_line(number, g));
  });
  for (const auto& g : gates) ctx.gates.push_back(g);
}

void write_manifest(const Context& ctx, double seconds) {
  const SamplerConfig cfg = ctx.config.sampler();
  json gates = json::array();
  for (const auto& g : ctx.gates) {
    gates.push_back({{"name", g.name}, {"estimate", g.estimate}, {"lower", g.lower},
                     {"upper", g.upper}, {"threshold", g.threshold},
                     {"verdict", g.passed ? "pass" : "fail"}, {"detail", g.detail}});
  }
  const json measure = measure_of(ctx.config.doc.at("sampler"));
  json m = {{"version", kVersion},
            {"kind", ctx.config.kind()},
            {"config_hash", hex(ctx.config.hash())},
            {"sampler_hash", hex(cfg.hash())},
            {"measure", measure},
            {"measure_hash", hex(fnv1a64(measure.dump()))},
            {"seed", ctx.config.seed()},
            {"workers", ctx.config.workers()},
            {"csv_schema", kCsvSchema},
            {"wall_time_seconds", seconds},
            {"artifacts", ctx.artifacts},
            {"gates", gates},
            {"config", ctx.config.doc}};
  std::ofstream out(ctx.path("manifest.json"), std::ios::binary);
  if (!out) throw IoError("cannot write manifest.json");
  out << m.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// compare

struct RunData {
  std::string kind;
  json manifest;
  // Sampler: one-point samples and their ESS, keyed by (line, node time).
  std::map<std::pair<std::size_t, double>, std::pair<std::vector<double>, double>> samples;
  // Oracle: densities on a uniform space grid.
  std::map<std::pair<std::size_t, double>, std::pair<std::vector<double>, std::vector<double>>> densities;
};

template <typename T>
T parse_cell(const std::string& cell) {
  T v{};
  const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (r.ec != std::errc() || r.ptr != cell.data() + cell.size()) {
    throw IoError("malformed csv cell '" + cell + "'");
  }
  return v;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError("malformed " + path + ": " + e.what());
  }
}

RunData load_run(const std::string& dir) {
  RunData r;
  r.manifest = read_json((fs::path(dir) / "manifest.json").string());
  r.kind = r.manifest.at("kind").get<std::string>();
  if (r.kind == "simulate") {
    const CsvTable t = CsvTable::load((fs::path(dir) / "samples.csv").string());
    for (std::size_t c = 2; c < t.header.size(); ++c) {
      const Observable o = Observable::parse(t.header[c]);
      if (o.kind != Observable::Kind::one_point) continue;
      std::vector<double> v;
      v.reserve(t.rows.size());
      for (const auto& row : t.rows) v.push_back(parse_cell<double>(row[c]));
      // ESS summed per chain, as in the sampler diagnostics.
      double ess = 0.0;
      std::size_t start = 0;
      for (std::size_t i = 1; i <= t.rows.size(); ++i) {
        if (i == t.rows.size() || t.rows[i][0] != t.rows[start][0]) {
          ess += effective_sample_size(std::span<const double>(v).subspan(start, i - start));
          start = i;
        }
      }
      r.samples[{o.line, o.time}] = {std::move(v), ess};
    }
  } else if (r.kind == "oracle") {
    const CsvTable t = CsvTable::load((fs::path(dir) / "marginals.csv").string());
    const std::size_t ct = t.column("node_time"), cl = t.column("line"), cx = t.column("x"),
                      cd = t.column("density");
    for (const auto& row : t.rows) {
      auto& e = r.densities[{parse_cell<std::size_t>(row[cl]), parse_cell<double>(row[ct])}];
      e.first.push_back(parse_cell<double>(row[cx]));
      e.second.push_back(parse_cell<double>(row[cd]));
    }
  } else {
    throw ConfigError("compare needs simulate or oracle runs, got " + r.kind);
  }
  return r;
}

std::function<double(double)> density_cdf(const std::vector<double>& x, const std::vector<double>& d) {
  std::vector<double> cum(x.size(), 0.0);
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    cum[i + 1] = cum[i] + 0.5 * (x[i + 1] - x[i]) * (d[i] + d[i + 1]);
  }
  const double total = cum.back();
  return [=](double v) {
    if (v <= x.front()) return 0.0;
    if (v >= x.back()) return 1.0;
    const std::size_t i = std::size_t(std::upper_bound(x.begin(), x.end(), v) - x.begin()) - 1;
    const double h = x[i + 1] - x[i], u = v - x[i];
    const double c = cum[i] + u * d[i] + 0.5 * (d[i + 1] - d[i]) / h * u * u;
    return std::clamp(c / total, 0.0, 1.0);
  };
}

bool same_key(const std::pair<std::size_t, double>& a, const std::pair<std::size_t, double>& b) {
  return a.first == b.first && std::abs(a.second - b.second) < 1e-9;
}

}  // namespace

bool RunReport::passed() const {
  return std::all_of(gates.begin(), gates.end(), [](const Gate& g) { return g.passed; });
}

RunReport compare_runs(const std::string& a_dir, const std::string& b_dir,
                       const std::optional<std::string>& out_dir, double threshold,
                       std::ostream* log) {
  const RunData a = load_run(a_dir), b = load_run(b_dir);
  const json& ma = a.manifest.at("measure");
  const json& mb = b.manifest.at("measure");
  if (ma != mb) {
    std::string keys;
    for (const auto& [key, value] : ma.items()) {
      if (!mb.contains(key) || mb.at(key) != value) keys += (keys.empty() ? "" : ", ") + key;
    }
    throw ConfigError("runs target different measures; differing keys: " + keys);
  }
  RunReport report;
  CsvTable csv;
  csv.header = {"node_time", "line", "ks", "n_eff", "p_value", "threshold", "verdict"};
  std::optional<Plot> overlay;
  auto record = [&](std::pair<std::size_t, double> key, double ks, double ne,
                    std::function<double(double)> fa, std::function<double(double)> fb,
                    double lo, double hi) {
    const double p = ne > 0 ? ks_p_value(ks, ne) : 1.0;
    Gate g{"ks line " + std::to_string(key.first) + " t=" + fmt(key.second), ks, 0.0, ks,
           threshold, ks < threshold, "n_eff " + fmt(ne)};
    if (log) *log << format_gate_line(int(report.gates.size()) + 1, g) << '\n';
    report.gates.push_back(g);
    csv.add({format_double(key.second), std::to_string(key.first), format_double(ks),
             format_double(ne), format_double(p), format_double(threshold), g.passed ? "pass" : "fail"});
    if (!overlay) {
      overlay = Plot{"CDF overlay, line " + std::to_string(key.first) + " t = " + fmt(key.second),
                     "x", "CDF"};
      PlotSeries sa{a.kind + " A"}, sb{b.kind + " B", {}, {}, true};
      for (int i = 0; i <= 400; ++i) {
        const double x = lo + (hi - lo) * i / 400.0;
        sa.x.push_back(x), sa.y.push_back(fa(x));
        sb.x.push_back(x), sb.y.push_back(fb(x));
      }
      overlay->series = {sa, sb};
    }
  };
  auto ecdf = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return std::function<double(double)>([v](double x) {
      return double(std::upper_bound(v.begin(), v.end(), x) - v.begin()) / double(v.size());
    });
  };
  auto range = [](const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return std::pair{*lo, *hi};
  };

  if (a.kind == "simulate" && b.kind == "simulate") {
    for (const auto& [key, sa] : a.samples) {
      for (const auto& [kb, sb] : b.samples) {
        if (!same_key(key, kb)) continue;
        const double ks = ks_statistic(sa.first, sb.first);
        const double ne = sa.second * sb.second / (sa.second + sb.second);
        const auto [lo, hi] = range(sa.first);
        record(key, ks, ne, ecdf(sa.first), ecdf(sb.first), lo, hi);
      }
    }
  } else if (a.kind == "oracle" && b.kind == "oracle") {
    for (const auto& [key, da] : a.densities) {
      for (const auto& [kb, db] : b.densities) {
        if (!same_key(key, kb)) continue;
        const auto fa = density_cdf(da.first, da.second), fb = density_cdf(db.first, db.second);
        double ks = 0.0;
        for (double x : da.first) ks = std::max(ks, std::abs(fa(x) - fb(x)));
        for (double x : db.first) ks = std::max(ks, std::abs(fa(x) - fb(x)));
        record(key, ks, 0.0, fa, fb, da.first.front(), da.first.back());
      }
    }
  } else {
    const RunData& s = a.kind == "simulate" ? a : b;
    const RunData& o = a.kind == "simulate" ? b : a;
    for (const auto& [key, ss] : s.samples) {
      for (const auto& [ko, od] : o.densities) {
        if (!same_key(key, ko)) continue;
        const auto f = density_cdf(od.first, od.second);
        const double ks = ks_statistic(ss.first, f);
        const auto [lo, hi] = range(ss.first);
        record(key, ks, ss.second, ecdf(ss.first), f, lo, hi);
      }
    }
  }
  if (report.gates.empty()) throw ConfigError("the runs share no one-point marginals to compare");
  if (out_dir) {
    std::error_code ec;
    fs::create_directories(*out_dir, ec);
    if (ec) throw IoError("cannot create " + *out_dir + ": " + ec.message());
    csv.preamble = "tiltline csv v" + std::to_string(kCsvSchema) + " measure_hash=" +
                   hex(fnv1a64(ma.dump()));
    csv.save((fs::path(*out_dir) / "compare.csv").string());
    overlay->save((fs::path(*out_dir) / "compare.svg").string());
    report.output_dir = *out_dir;
  }
  return report;
}

RunReport run_experiment(const ExperimentConfig& config, const std::optional<std::string>& resume,
                         std::ostream* log) {
  const auto start = std::chrono::steady_clock::now();
  const std::string kind = config.kind();
  if (resume && kind != "simulate") throw ConfigError("--resume applies to simulate runs only");
  Context ctx{config, config.output(), log, {}, {}};
  std::error_code ec;
  fs::create_directories(ctx.dir, ec);
  if (ec) throw IoError("cannot create output directory " + ctx.dir + ": " + ec.message());
  {
    std::ofstream out(ctx.path("config.json"), std::ios::binary);
    if (!out) throw IoError("cannot write config.json");
    out << config.dump() << '\n';
  }
  if (kind == "simulate") {
    run_simulate(ctx, resume);
  } else if (kind == "oracle") {
    run_oracle(ctx);
  } else if (kind == "compare") {
    const auto& p = config.params();
    const auto r = compare_runs(p.at("sampler_dir").get<std::string>(),
                                p.at("oracle_dir").get<std::string>(), ctx.dir,
                                p.at("ks_threshold").get<double>(), log);
    ctx.gates = r.gates;
    ctx.artifacts = {"compare.csv", "compare.svg"};
  } else if (kind == "tightness-scan") {
    run_tightness(ctx);
  } else if (kind == "max-scaling") {
    run_max_scaling(ctx);
  } else if (kind == "gap-scan") {
    run_gap_scan(ctx);
  } else if (kind == "domination") {
    run_domination(ctx);
  } else if (kind == "gibbs-check") {
    run_gibbs_check(ctx);
  } else if (kind == "monotone-scan") {
    run_monotone_scan(ctx);
  } else if (kind == "accept") {
    run_accept(ctx);
  }
  ctx.save(gates_table(ctx.gates), "gates.csv");
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_manifest(ctx, seconds);
  return {ctx.dir, ctx.gates};
}

int exit_code_for_current_exception(std::ostream& err) {
  try {
    throw;
  } catch (const CostGuardError& e) {
    err << "cost guard: " << e.what() << " (estimate " << e.estimate() << " flops)\n";
    return kCostGuard;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const DecodeError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DomainError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ShapeError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ConsistencyError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const UsageError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const InsufficientDataError& e) {
    err << "insufficient data: " << e.what() << '\n';
    return kGateFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kGateFailure;
  }
}

int run(const RunOptions& options, std::ostream& log, std::ostream& err) {
  try {
    json doc;
    {
      std::ifstream in(options.config_path);
      if (!in) throw IoError("cannot read config " + options.config_path);
      try {
        doc = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
      }
    }
    for (const auto& s : options.overrides) apply_override(doc, s);
    if (options.out) doc["output"] = *options.out;
    if (options.seed) doc["seed"] = *options.seed;
    if (options.workers) doc["workers"] = *options.workers;
    const ExperimentConfig config = parse_config(doc);
    const RunReport report = run_experiment(config, options.resume, &log);
    log << (report.passed() ? "PASS" : "FAIL") << ": " << report.gates.size() << " gates, output "
        << report.output_dir << '\n';
    return report.passed() ? kPass : kGateFailure;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

int compare(const std::string& a_dir, const std::string& b_dir,
            const std::optional<std::string>& out_dir, double threshold, std::ostream& log,
            std::ostream& err) {
  try {
    const RunReport r = compare_runs(a_dir, b_dir, out_dir, threshold, &log);
    log << (r.passed() ? "PASS" : "FAIL") << ": " << r.gates.size() << " comparisons\n";
    return r.passed() ? kPass : kGateFailure;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

}  // namespace tiltline::experiments
