#include "tiltline/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "tiltline/errors.hpp"
#include "tiltline/numerics.hpp"
#include "tiltline/stats.hpp"

namespace tiltline {

namespace {

void append_double(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a,", v);
  out += buf;
}

void append_path(std::string& out, const std::optional<Path>& p) {
  if (!p) {
    out += "none;";
    return;
  }
  for (double v : *p) append_double(out, v);
  out += ';';
}

bool strictly_ordered_nonneg(const std::vector<double>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] >= 0.0) || !std::isfinite(v[i])) return false;
    if (i > 0 && !(v[i - 1] > v[i])) return false;
  }
  return true;
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void SamplerConfig::validate() const {
  if (n == 0) throw DomainError("sampler needs at least one line");
  if (block_len < 2) throw DomainError("block_len must be at least 2 nodes");
  if (max_rejections == 0) throw DomainError("max_rejections must be positive");
  for (std::size_t i = 0; i < n; ++i) (void)tilts.weights_for(i, grid);
  const std::size_t size = grid.size();
  if (floor) {
    if (floor->size() != size) throw ShapeError("floor length does not match the grid");
    for (double v : *floor) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("floor must be finite and >= 0");
    }
  }
  if (ceiling) {
    if (ceiling->size() != size) throw ShapeError("ceiling length does not match the grid");
    for (std::size_t j = 0; j < size; ++j) {
      const double lo = floor ? (*floor)[j] : 0.0;
      if (!((*ceiling)[j] > lo)) throw DomainError("ceiling must lie above the floor");
    }
  }
  const double floor_left = floor ? floor->front() : 0.0;
  const double floor_right = floor ? floor->back() : 0.0;
  const double inf = std::numeric_limits<double>::infinity();
  const double ceil_left = ceiling ? ceiling->front() : inf;
  const double ceil_right = ceiling ? ceiling->back() : inf;
  if (const auto* fixed = std::get_if<FixedBoundary>(&boundary)) {
    if (fixed->left.size() != n || fixed->right.size() != n) {
      throw ShapeError("fixed boundary vectors need one value per line");
    }
    if (!strictly_ordered_nonneg(fixed->left) || !strictly_ordered_nonneg(fixed->right)) {
      throw DomainError("fixed boundary vectors must be strictly ordered and >= 0");
    }
    if (fixed->left.back() < floor_left || fixed->right.back() < floor_right ||
        fixed->left.front() > ceil_left || fixed->right.front() > ceil_right) {
      throw ConsistencyError("fixed boundary data violate the floor or ceiling");
    }
  } else if (std::holds_alternative<ZeroBoundary>(boundary)) {
    if (floor_left > 0.0 || floor_right > 0.0) {
      throw ConsistencyError("zero boundary needs the floor to vanish at the endpoints");
    }
  } else if (const auto* free = std::get_if<FreeBoundary>(&boundary)) {
    if ((!free->nu.empty() && free->nu.size() != n) ||
        (!free->eta.empty() && free->eta.size() != n)) {
      throw ShapeError("endpoint potentials need one function per line");
    }
  }
}

std::uint64_t SamplerConfig::hash() const {
  std::string text = "tiltline-config-v1;n=" + std::to_string(n) + ";grid=";
  append_double(text, grid.left());
  append_double(text, grid.right());
  text += std::to_string(grid.steps()) + ";tilts=";
  if (tilts.is_geometric()) {
    text += "geometric:";
    append_double(text, tilts.a());
    append_double(text, tilts.lambda());
  } else if (tilts.is_weighted()) {
    text += "weights:";
    for (const auto& p : tilts.rho_paths()) append_path(text, p);
  } else {
    text += "constants:";
    for (double r : tilts.rhos()) append_double(text, r);
  }
  text += ";boundary=";
  if (const auto* fixed = std::get_if<FixedBoundary>(&boundary)) {
    text += "fixed:";
    for (double v : fixed->left) append_double(text, v);
    text += '|';
    for (double v : fixed->right) append_double(text, v);
  } else if (std::holds_alternative<ZeroBoundary>(boundary)) {
    text += "zero";
  } else {
    const auto& free = std::get<FreeBoundary>(boundary);
    text += "free:";
    for (const auto& f : free.nu) text += f ? 'p' : '0';
    text += '|';
    for (const auto& f : free.eta) text += f ? 'p' : '0';
  }
  text += ";floor=";
  append_path(text, floor);
  text += "ceiling=";
  append_path(text, ceiling);
  text += "block=" + std::to_string(block_len) + ";rej=" + std::to_string(max_rejections) +
          ";schedule=" + std::to_string(static_cast<int>(schedule)) +
          ";burnin=" + std::to_string(burnin) + ";thin=" + std::to_string(thin);
  return fnv1a64(text);
}

GibbsSampler::GibbsSampler(SamplerConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t m = config_.grid.steps();
  for (std::size_t i = 0; i < config_.n; ++i) {
    tilt_weights_.push_back(config_.tilts.weights_for(i, config_.grid));
  }
  trapezoid_ = trapezoid_weights(config_.grid);
  const std::size_t span = std::min(config_.block_len - 1, m);
  const std::size_t stride = std::max<std::size_t>(1, span / 2);
  for (std::size_t s = 0;; s += stride) {
    const std::size_t t = std::min(s + span, m);
    blocks_.emplace_back(s, t);
    if (t == m) break;
  }
}

bool GibbsSampler::free_boundary() const {
  return std::holds_alternative<FreeBoundary>(config_.boundary);
}

ChainState GibbsSampler::initial_state(std::uint64_t seed) const {
  const std::size_t n = config_.n;
  const std::size_t m = config_.grid.steps();
  Ensemble e{config_.grid, std::vector<Path>(n, Path(m + 1)), config_.floor, config_.ceiling};
  if (const auto* fixed = std::get_if<FixedBoundary>(&config_.boundary)) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= m; ++j) {
        const double w = static_cast<double>(j) / static_cast<double>(m);
        e.lines[i][j] = (1.0 - w) * fixed->left[i] + w * fixed->right[i];
      }
    }
  } else {
    const double fan_step = 1.0;
    for (std::size_t j = 0; j <= m; ++j) {
      const double lo = e.floor_at(j);
      for (std::size_t i = 0; i < n; ++i) {
        const double rank = static_cast<double>(n - i);
        e.lines[i][j] = config_.ceiling
                            ? lo + rank / static_cast<double>(n + 1) * (e.ceiling_at(j) - lo)
                            : lo + rank * fan_step;
      }
    }
    if (std::holds_alternative<ZeroBoundary>(config_.boundary)) {
      for (auto& line : e.lines) line.front() = line.back() = 0.0;
    }
  }
  if (!check_admissible(e)) {
    throw ConsistencyError("initial configuration is not admissible for this config");
  }
  ChainState state{std::move(e), RandomStream(seed), 0, std::vector<LineStats>(n),
                   std::vector<double>(2 * n, std::sqrt(config_.grid.dt())),
                   std::vector<std::uint64_t>(2 * n, 0), true};
  return state;
}

double GibbsSampler::lower_bound(const ChainState& state, std::size_t line,
                                 std::size_t j) const {
  return line + 1 < config_.n ? state.ensemble.lines[line + 1][j] : state.ensemble.floor_at(j);
}

double GibbsSampler::upper_bound(const ChainState& state, std::size_t line,
                                 std::size_t j) const {
  return line > 0 ? state.ensemble.lines[line - 1][j] : state.ensemble.ceiling_at(j);
}

void GibbsSampler::update_site(ChainState& state, std::size_t line, std::size_t j,
                               double u) const {
  const std::size_t m = config_.grid.steps();
  if (j == 0 || j >= m) throw DomainError("site updates act on interior nodes only");
  const double dt = config_.grid.dt();
  Path& x = state.ensemble.lines[line];
  const double mean =
      0.5 * (x[j - 1] + x[j + 1]) - 0.5 * dt * tilt_weights_[line][j] * trapezoid_[j];
  const double lo = lower_bound(state, line, j);
  const double hi = upper_bound(state, line, j);
  if (!(hi > lo)) throw ConsistencyError("empty constraint window at a site update");
  x[j] = truncated_normal_inverse(mean, std::sqrt(0.5 * dt), lo, hi, u);
  ++state.stats[line].site_updates;
}

void GibbsSampler::resample_block(ChainState& state, std::size_t line, std::size_t s,
                                  std::size_t t) const {
  if (line >= config_.n) throw DomainError("line index out of range");
  if (!(s < t) || t > config_.grid.steps()) throw DomainError("block must satisfy s < t <= m");
  for (std::size_t j = s + 1; j < t; ++j) {
    if (!(upper_bound(state, line, j) > lower_bound(state, line, j))) {
      throw ConsistencyError("empty constraint window inside the block");
    }
  }
  std::vector<double> scratch;
  resample_recursive(state, line, s, t, scratch);
  verify_block(state, line, s, t);
}

void GibbsSampler::resample_recursive(ChainState& state, std::size_t line, std::size_t s,
                                      std::size_t t, std::vector<double>& scratch) const {
  if (t - s < 2) return;
  if (t - s == 2) {
    update_site(state, line, s + 1, state.rng.uniform());
    return;
  }
  const std::size_t interior = t - s - 1;
  const double dt = config_.grid.dt();
  const Path& rho = tilt_weights_[line];
  std::vector<double> shift(interior);
  {
    std::vector<double> rhs(interior);
    for (std::size_t k = 0; k < interior; ++k) {
      rhs[k] = -rho[s + 1 + k] * trapezoid_[s + 1 + k];
    }
    solve_bridge_precision(dt, rhs, shift);
  }
  Path& x = state.ensemble.lines[line];
  const double target = x[t];
  scratch.resize(interior);
  LineStats& stats = state.stats[line];
  for (std::size_t attempt = 0; attempt < config_.max_rejections; ++attempt) {
    ++stats.proposals;
    double bridge = x[s];
    bool ok = true;
    for (std::size_t k = 0; k < interior; ++k) {
      const double remaining = static_cast<double>(t - s - k);
      const double mean = bridge + (target - bridge) / remaining;
      const double sd = std::sqrt(dt * (remaining - 1.0) / remaining);
      bridge = mean + sd * state.rng.normal();
      const double v = bridge + shift[k];
      const std::size_t j = s + 1 + k;
      if (!(v > lower_bound(state, line, j) && v < upper_bound(state, line, j))) {
        ok = false;
        break;
      }
      scratch[k] = v;
    }
    if (ok) {
      std::copy(scratch.begin(), scratch.begin() + interior, x.begin() + s + 1);
      ++stats.acceptances;
      return;
    }
  }
  ++stats.halvings;
  const std::size_t mid = s + (t - s) / 2;
  resample_recursive(state, line, s, mid, scratch);
  resample_recursive(state, line, mid, t, scratch);
  const std::size_t quarter = (t - s) / 4;
  const std::size_t lo = mid - std::max<std::size_t>(quarter, 1);
  const std::size_t hi = std::min(t, mid + std::max<std::size_t>(quarter, 1));
  resample_recursive(state, line, lo, hi, scratch);
}

void GibbsSampler::verify_block(const ChainState& state, std::size_t line, std::size_t s,
                                std::size_t t) const {
  const Path& x = state.ensemble.lines[line];
  for (std::size_t j = s + 1; j < t; ++j) {
    const bool bottom = line + 1 == config_.n;
    const double lo = lower_bound(state, line, j);
    const double hi = upper_bound(state, line, j);
    const bool above = bottom ? x[j] >= lo : x[j] > lo;
    const bool below = line == 0 ? x[j] <= hi : x[j] < hi;
    if (!std::isfinite(x[j]) || !above || !below) {
      throw std::logic_error("block update broke admissibility");
    }
  }
}

void GibbsSampler::sweep(ChainState& state) const {
  if (config_.schedule == SweepSchedule::systematic) {
    for (std::size_t line = 0; line < config_.n; ++line) {
      for (const auto& [s, t] : blocks_) resample_block(state, line, s, t);
    }
  } else {
    const std::size_t updates = config_.n * blocks_.size();
    for (std::size_t u = 0; u < updates; ++u) {
      const std::size_t line = state.rng.next_u64() % config_.n;
      const auto& [s, t] = blocks_[state.rng.next_u64() % blocks_.size()];
      resample_block(state, line, s, t);
    }
  }
  if (free_boundary()) update_endpoints(state);
  ++state.sweeps_done;
}

void GibbsSampler::update_endpoints(ChainState& state) const {
  const auto* free = std::get_if<FreeBoundary>(&config_.boundary);
  if (!free) throw UsageError("endpoint updates need free boundary conditions");
  const std::size_t m = config_.grid.steps();
  const double dt = config_.grid.dt();
  for (std::size_t line = 0; line < config_.n; ++line) {
    for (int side = 0; side < 2; ++side) {
      const std::size_t end = side == 0 ? 0 : m;
      const std::size_t inner = side == 0 ? 1 : m - 1;
      const auto& potentials = side == 0 ? free->nu : free->eta;
      const Potential* pot = potentials.empty() ? nullptr : &potentials[line];
      Path& x = state.ensemble.lines[line];
      const double neighbour = x[inner];
      const double tilt = tilt_weights_[line][end] * trapezoid_[end];
      auto log_target = [&](double v) {
        double lp = -(v - neighbour) * (v - neighbour) / (2.0 * dt) - tilt * v;
        if (pot && *pot) lp -= (*pot)(v);
        return lp;
      };
      const std::size_t idx = 2 * line + static_cast<std::size_t>(side);
      const double current = x[end];
      const double proposal = current + state.endpoint_scale[idx] * state.rng.normal();
      const double lo = std::max(lower_bound(state, line, end), 0.0);
      const double hi = upper_bound(state, line, end);
      const bool bottom = line + 1 == config_.n;
      const bool inside = (bottom ? proposal > lo || (lo > 0.0 && proposal >= lo)
                                  : proposal > lo) &&
                          (line == 0 ? proposal <= hi : proposal < hi);
      const double u = state.rng.uniform();
      bool accepted = false;
      if (inside) {
        const double log_ratio = log_target(proposal) - log_target(current);
        accepted = std::log(u) < log_ratio;
      }
      LineStats& stats = state.stats[line];
      ++stats.endpoint_proposals;
      if (accepted) {
        x[end] = proposal;
        ++stats.endpoint_acceptances;
      }
      if (state.adapting) {
        const double k = static_cast<double>(++state.endpoint_adapt_steps[idx]);
        const double step = ((accepted ? 1.0 : 0.0) - 0.4) * std::pow(k, -0.6);
        state.endpoint_scale[idx] =
            std::clamp(state.endpoint_scale[idx] * std::exp(step), 1e-8, 1e4);
      }
    }
  }
}

bool nodewise_ordered(const Ensemble& lo, const Ensemble& hi) {
  if (lo.lines.size() != hi.lines.size()) return false;
  for (std::size_t i = 0; i < lo.lines.size(); ++i) {
    if (lo.lines[i].size() != hi.lines[i].size()) return false;
    for (std::size_t j = 0; j < lo.lines[i].size(); ++j) {
      if (!(lo.lines[i][j] <= hi.lines[i][j])) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------

Observable Observable::one_point(std::size_t line, double time) {
  Observable o;
  o.kind = Kind::one_point;
  o.line = line;
  o.time = time;
  return o;
}

Observable Observable::curved(std::size_t line, double alpha, Window window) {
  Observable o;
  o.kind = Kind::curved_max;
  o.line = line;
  o.alpha = alpha;
  o.window = window;
  return o;
}

Observable Observable::gap(std::size_t k, Window window) {
  Observable o;
  o.kind = Kind::min_gap;
  o.line = k;
  o.window = window;
  return o;
}

Observable Observable::oscillation(std::size_t k, Window window, double delta) {
  Observable o;
  o.kind = Kind::modulus;
  o.line = k;
  o.window = window;
  o.delta = delta;
  return o;
}

Observable Observable::line_area(std::size_t line) {
  Observable o;
  o.kind = Kind::area;
  o.line = line;
  return o;
}

Observable Observable::maximum(std::size_t line, Window window) {
  Observable o;
  o.kind = Kind::window_max;
  o.line = line;
  o.window = window;
  return o;
}

std::string Observable::name() const {
  const std::string l = std::to_string(line);
  const std::string w = format_number(window.lo) + ":" + format_number(window.hi);
  switch (kind) {
    case Kind::one_point: return "one_point:" + l + ":" + format_number(time);
    case Kind::curved_max: return "curved_max:" + l + ":" + format_number(alpha) + ":" + w;
    case Kind::min_gap: return "min_gap:" + l + ":" + w;
    case Kind::modulus: return "modulus:" + l + ":" + w + ":" + format_number(delta);
    case Kind::area: return "area:" + l;
    case Kind::window_max: return "window_max:" + l + ":" + w;
  }
  return "unknown";
}

Observable Observable::parse(const std::string& text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const std::size_t colon = text.find(':', start);
    parts.push_back(text.substr(start, colon - start));
    if (colon == std::string::npos) break;
    start = colon + 1;
  }
  auto num = [&](std::size_t i) {
    try {
      std::size_t used = 0;
      const double v = std::stod(parts.at(i), &used);
      if (used != parts[i].size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw DomainError("malformed observable: " + text);
    }
  };
  auto index = [&](std::size_t i) {
    const double v = num(i);
    if (!(v >= 1.0) || v != std::floor(v)) throw DomainError("malformed observable: " + text);
    return static_cast<std::size_t>(v);
  };
  const std::string& k = parts[0];
  const std::size_t arity = parts.size() - 1;
  if (k == "one_point" && arity == 2) return one_point(index(1), num(2));
  if (k == "curved_max" && arity == 4) return curved(index(1), num(2), {num(3), num(4)});
  if (k == "min_gap" && arity == 3) return gap(index(1), {num(2), num(3)});
  if (k == "modulus" && arity == 4) return oscillation(index(1), {num(2), num(3)}, num(4));
  if (k == "area" && arity == 1) return line_area(index(1));
  if (k == "window_max" && arity == 3) return maximum(index(1), {num(2), num(3)});
  throw DomainError("malformed observable: " + text);
}

double Observable::evaluate(const Ensemble& e) const {
  if (line == 0 || line > e.line_count()) throw DomainError("observable line index out of range");
  const Path& x = e.lines[line - 1];
  switch (kind) {
    case Kind::one_point: {
      const auto j = e.grid.node_at(time);
      if (!j) throw DomainError("one-point observable time is not a grid node");
      return x[*j];
    }
    case Kind::curved_max: return curved_max(x, e.grid, alpha, window);
    case Kind::min_gap: return min_gap(e, window, line);
    case Kind::modulus: return modulus(e, window, delta, line);
    case Kind::area: return area(x, e.grid);
    case Kind::window_max: return window_max(x, e.grid, window);
  }
  return 0.0;
}

const std::vector<double>& SampleTable::column(const std::string& name) const {
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c] == name) return values[c];
  }
  throw DomainError("no column named " + name);
}

ChainRun run_chain(const GibbsSampler& sampler, std::size_t n_samples,
                   const std::vector<Observable>& observables, const StateVisitor& visitor,
                   std::optional<ChainState> resume) {
  const SamplerConfig& config = sampler.config();
  ChainState state = resume ? std::move(*resume) : sampler.initial_state();
  if (!resume) {
    for (std::size_t b = 0; b < config.burnin; ++b) sampler.sweep(state);
    state.adapting = false;
  }
  ChainRun run;
  for (const auto& o : observables) run.table.columns.push_back(o.name());
  run.table.values.resize(observables.size());
  for (auto& col : run.table.values) col.reserve(n_samples);
  const std::size_t thin = std::max<std::size_t>(1, config.thin);
  for (std::size_t r = 0; r < n_samples; ++r) {
    for (std::size_t k = 0; k < thin; ++k) sampler.sweep(state);
    run.table.chain.push_back(0);
    run.table.sweep.push_back(state.sweeps_done);
    for (std::size_t c = 0; c < observables.size(); ++c) {
      run.table.values[c].push_back(observables[c].evaluate(state.ensemble));
    }
    if (visitor) visitor(state);
  }
  run.diagnostics.sweeps = state.sweeps_done;
  run.diagnostics.retained = n_samples;
  for (const auto& col : run.table.values) {
    run.diagnostics.ess.push_back(effective_sample_size(col));
  }
  run.diagnostics.line_stats = state.stats;
  run.final_state = std::move(state);
  return run;
}

ChainRun run_chains(const GibbsSampler& sampler, std::size_t chains,
                    std::size_t samples_per_chain, const std::vector<Observable>& observables,
                    std::size_t workers,
                    const std::function<StateVisitor(std::size_t)>& visitors) {
  if (chains == 0) throw DomainError("need at least one chain");
  const std::uint64_t config_hash = sampler.config().hash();
  std::vector<std::optional<ChainRun>> runs(chains);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t c = next++; c < chains; c = next++) {
      try {
        ChainState start =
            sampler.initial_state(derive_seed(sampler.config().seed, c, config_hash));
        for (std::size_t b = 0; b < sampler.config().burnin; ++b) sampler.sweep(start);
        start.adapting = false;
        runs[c] = run_chain(sampler, samples_per_chain, observables,
                            visitors ? visitors(c) : StateVisitor{}, std::move(start));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(workers, 1, chains);
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  ChainRun merged;
  merged.table.columns = runs[0]->table.columns;
  merged.table.values.resize(observables.size());
  merged.diagnostics.ess.assign(observables.size(), 0.0);
  merged.diagnostics.line_stats.resize(sampler.line_count());
  for (std::size_t c = 0; c < chains; ++c) {
    ChainRun& r = *runs[c];
    for (std::size_t row = 0; row < r.table.rows(); ++row) {
      merged.table.chain.push_back(c);
      merged.table.sweep.push_back(r.table.sweep[row]);
    }
    for (std::size_t col = 0; col < observables.size(); ++col) {
      auto& dst = merged.table.values[col];
      dst.insert(dst.end(), r.table.values[col].begin(), r.table.values[col].end());
      merged.diagnostics.ess[col] += r.diagnostics.ess[col];
    }
    merged.diagnostics.sweeps += r.diagnostics.sweeps;
    merged.diagnostics.retained += r.diagnostics.retained;
    for (std::size_t i = 0; i < sampler.line_count(); ++i) {
      auto& d = merged.diagnostics.line_stats[i];
      const auto& s = r.diagnostics.line_stats[i];
      d.proposals += s.proposals;
      d.acceptances += s.acceptances;
      d.halvings += s.halvings;
      d.site_updates += s.site_updates;
      d.endpoint_proposals += s.endpoint_proposals;
      d.endpoint_acceptances += s.endpoint_acceptances;
    }
  }
  merged.final_state = std::move(runs.back()->final_state);
  return merged;
}

}  // namespace tiltline
