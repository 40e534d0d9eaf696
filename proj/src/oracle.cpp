#include "tiltline/oracle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>

#include "tiltline/errors.hpp"

namespace tiltline {

double SpaceGrid::x(std::size_t i) const {
  return i + 1 == points ? x_max : double(i) * spacing();
}

std::vector<double> gregory_weights(std::size_t count, double h) {
  std::vector<double> w(count, h);
  if (count == 0) return w;
  if (count == 1) {
    w[0] = 0.0;
    return w;
  }
  if (count < 8) {
    w.front() = w.back() = 0.5 * h;
    return w;
  }
  static constexpr double ends[4] = {17.0 / 48.0, 59.0 / 48.0, 43.0 / 48.0, 49.0 / 48.0};
  for (std::size_t i = 0; i < 4; ++i) {
    w[i] = ends[i] * h;
    w[count - 1 - i] = ends[i] * h;
  }
  return w;
}

std::vector<double> SpaceGrid::weights() const { return gregory_weights(points, spacing()); }

namespace {

using Eigen::MatrixXd;

struct Pins {
  std::optional<std::vector<double>> left;
  std::optional<std::vector<double>> right;
};

Pins pins_of(const SamplerConfig& c) {
  Pins p;
  if (const auto* f = std::get_if<FixedBoundary>(&c.boundary)) {
    p.left = f->left;
    p.right = f->right;
  } else if (std::holds_alternative<ZeroBoundary>(c.boundary)) {
    p.left = std::vector<double>(c.n, 0.0);
    p.right = std::vector<double>(c.n, 0.0);
  }
  return p;
}

void check_oracle_config(const SamplerConfig& c) {
  c.validate();
  if (c.floor) throw DomainError("oracle supports the wall at 0 as floor only");
  if (c.ceiling) throw DomainError("oracle does not support a ceiling");
  if (c.grid.steps() < 2) throw DomainError("oracle needs at least two time steps");
}

double flop_estimate(std::size_t n, std::size_t points, std::size_t steps) {
  const double p = double(points);
  return 2.0 * double(steps) * 2.0 * std::pow(p, double(n + 1));
}

// Forward-backward transfer operator on the space grid for one or two lines.
class Transfer {
 public:
  Transfer(const SamplerConfig& c, const OracleOptions& o) : config_(c) {
    check_oracle_config(c);
    n_ = c.n;
    space_ = default_space_grid(c, o);
    const std::size_t steps = c.grid.steps();
    const double cost = flop_estimate(n_, space_.points, steps);
    if (n_ > 2 || cost > o.cost_limit) {
      throw CostGuardError("oracle cost estimate exceeds the limit", cost);
    }
    P_ = space_.points;
    h_ = space_.spacing();
    g_ = space_.weights();
    dt_ = c.grid.dt();
    pins_ = pins_of(c);
    trap_ = trapezoid_weights(c.grid);
    for (std::size_t i = 0; i < n_; ++i) rho_.push_back(c.tilts.weights_for(i, c.grid));

    K_.resize(P_, P_);
    for (std::size_t i = 0; i < P_; ++i) {
      for (std::size_t k = 0; k < P_; ++k) K_(i, k) = kernel_q(dt_, x(i), x(k));
    }
    if (n_ == 1) {
      Wq_ = Eigen::Map<const Eigen::VectorXd>(g_.data(), P_);
    } else {
      lower_ = MatrixXd::Zero(P_, P_);
      upper_ = MatrixXd::Zero(P_, P_);
      for (std::size_t i = 0; i < P_; ++i) {
        const auto inner = gregory_weights(i + 1, h_);
        for (std::size_t k = 0; k <= i; ++k) lower_(i, k) = inner[k];
        const auto outer = gregory_weights(P_ - i, h_);
        for (std::size_t r = i; r < P_; ++r) upper_(r, i) = outer[r - i];
      }
      Wq_ = lower_;
      for (std::size_t i = 0; i < P_; ++i) Wq_.row(i) *= g_[i];
    }
  }

  double x(std::size_t i) const { return space_.x(i); }

  bool pinned(std::size_t j) const {
    return (j == 0 && pins_.left) || (j == config_.grid.steps() && pins_.right);
  }

  // Node factor: tilt weights and the ordering indicator.
  MatrixXd node_factor(std::size_t j) const {
    const double c1 = rho_[0][j] * trap_[j];
    if (n_ == 1) {
      MatrixXd f(P_, 1);
      for (std::size_t i = 0; i < P_; ++i) f(i, 0) = std::exp(-c1 * x(i));
      return f;
    }
    const double c2 = rho_[1][j] * trap_[j];
    MatrixXd f = MatrixXd::Zero(P_, P_);
    for (std::size_t i = 0; i < P_; ++i) {
      for (std::size_t k = 0; k <= i; ++k) f(i, k) = std::exp(-c1 * x(i) - c2 * x(k));
    }
    return f;
  }

  double pinned_tilt(std::size_t j, const std::vector<double>& v) const {
    double s = 0.0;
    for (std::size_t i = 0; i < n_; ++i) s += rho_[i][j] * trap_[j] * v[i];
    return -s;
  }

  // prod_i q(dt, v_i, y_i), or the endpoint potentials when v is absent.
  MatrixXd edge(const std::optional<std::vector<double>>& v,
                const std::vector<Potential>* pot) const {
    auto one = [&](std::size_t line, double y) {
      if (v) return kernel_q(dt_, (*v)[line], y);
      if (pot && line < pot->size() && (*pot)[line]) return std::exp(-(*pot)[line](y));
      return 1.0;
    };
    if (n_ == 1) {
      MatrixXd e(P_, 1);
      for (std::size_t i = 0; i < P_; ++i) e(i, 0) = one(0, x(i));
      return e;
    }
    MatrixXd e = MatrixXd::Zero(P_, P_);
    for (std::size_t i = 0; i < P_; ++i) {
      for (std::size_t k = 0; k <= i; ++k) e(i, k) = one(0, x(i)) * one(1, x(k));
    }
    return e;
  }

  MatrixXd apply(const MatrixXd& a) const {
    const MatrixXd w = Wq_.cwiseProduct(a);
    if (n_ == 1) return K_ * w;
    MatrixXd t = K_ * w;
    return t * K_;
  }

  static double normalize(MatrixXd& a) {
    const double m = a.cwiseAbs().maxCoeff();
    if (!(m > 0.0) || !std::isfinite(m)) throw ConsistencyError("transfer state degenerated");
    a /= m;
    return std::log(m);
  }

  MarginalTable run() {
    const std::size_t m = config_.grid.steps();
    const auto* free_bc = std::get_if<FreeBoundary>(&config_.boundary);
    const std::size_t first = pins_.left ? 1 : 0;
    const std::size_t last = pins_.right ? m - 1 : m;

    std::vector<MatrixXd> alpha(m + 1), beta(m + 1);
    std::vector<double> la(m + 1, 0.0), lb(m + 1, 0.0);
    if (pins_.left) {
      alpha[1] = edge(pins_.left, nullptr).cwiseProduct(node_factor(1));
      la[1] = pinned_tilt(0, *pins_.left);
    } else {
      alpha[0] = edge(std::nullopt, &free_bc->nu).cwiseProduct(node_factor(0));
    }
    la[first] += normalize(alpha[first]);
    for (std::size_t j = first; j < last; ++j) {
      alpha[j + 1] = apply(alpha[j]).cwiseProduct(node_factor(j + 1));
      la[j + 1] = la[j] + normalize(alpha[j + 1]);
    }
    if (pins_.right) {
      beta[m - 1] = edge(pins_.right, nullptr);
      lb[m - 1] = pinned_tilt(m, *pins_.right);
    } else {
      beta[m] = edge(std::nullopt, &free_bc->eta);
    }
    lb[last] += normalize(beta[last]);
    for (std::size_t j = last; j > first; --j) {
      beta[j - 1] = apply(beta[j].cwiseProduct(node_factor(j)));
      lb[j - 1] = lb[j] + normalize(beta[j - 1]);
    }

    MarginalTable table;
    table.grid = config_.grid;
    table.space = space_;
    table.lines = n_;
    table.density.assign(m + 1, std::vector<std::vector<double>>(n_));
    table.pinned.assign(m + 1, std::vector<std::optional<double>>(n_));
    for (std::size_t i = 0; i < n_; ++i) {
      if (pins_.left) table.pinned[0][i] = (*pins_.left)[i];
      if (pins_.right) table.pinned[m][i] = (*pins_.right)[i];
    }
    const std::size_t top = std::size_t(std::ceil(0.95 * double(P_ - 1)));
    bool have_z = false;
    for (std::size_t j = first; j <= last; ++j) {
      const MatrixXd d = alpha[j].cwiseProduct(beta[j]);
      const double total = Wq_.cwiseProduct(d).sum();
      if (!have_z) {
        table.log_partition = la[j] + lb[j] + std::log(total);
        have_z = true;
      }
      for (std::size_t line = 0; line < n_; ++line) {
        std::vector<double> dens(P_);
        if (n_ == 1) {
          for (std::size_t i = 0; i < P_; ++i) dens[i] = d(i, 0) / total;
        } else {
          const MatrixXd& w = line == 0 ? lower_ : upper_;
          const Eigen::VectorXd marg =
              line == 0 ? Eigen::VectorXd(w.cwiseProduct(d).rowwise().sum())
                        : Eigen::VectorXd(w.cwiseProduct(d).colwise().sum().transpose());
          for (std::size_t i = 0; i < P_; ++i) dens[i] = marg(i) / total;
        }
        double mass = 0.0, tail = 0.0;
        for (std::size_t i = 0; i < P_; ++i) {
          mass += g_[i] * dens[i];
          if (i >= top) tail += g_[i] * dens[i];
        }
        table.quadrature_defect = std::max(table.quadrature_defect, std::abs(mass - 1.0));
        for (auto& v : dens) v = std::max(0.0, v / mass);
        table.boundary_mass = std::max(table.boundary_mass, std::abs(tail / mass));
        table.density[j][line] = std::move(dens);
      }
    }
    if (!(table.boundary_mass < 1e-10)) {
      throw DomainError("space cutoff too small: boundary mass " +
                        std::to_string(table.boundary_mass));
    }
    return table;
  }

 private:
  const SamplerConfig& config_;
  std::size_t n_ = 1;
  SpaceGrid space_;
  std::size_t P_ = 0;
  double h_ = 0.0;
  double dt_ = 0.0;
  std::vector<double> g_;
  Pins pins_;
  Path trap_;
  std::vector<Path> rho_;
  MatrixXd K_;
  MatrixXd Wq_;
  MatrixXd lower_;
  MatrixXd upper_;
};

}  // namespace

SpaceGrid default_space_grid(const SamplerConfig& config, const OracleOptions& options) {
  double M = 0.0;
  if (const auto* f = std::get_if<FixedBoundary>(&config.boundary)) {
    for (double v : f->left) M = std::max(M, v);
    for (double v : f->right) M = std::max(M, v);
  }
  const double x_max = options.x_max.value_or(
      8.0 * (M + std::sqrt(config.grid.right() - config.grid.left())));
  const double sq = std::sqrt(config.grid.dt());
  const double h = options.spacing.value_or(config.n == 1 ? sq / 16.0 : sq / 10.0);
  if (!(x_max > 0.0) || !(h > 0.0)) throw DomainError("space grid needs x_max, spacing > 0");
  SpaceGrid s;
  s.x_max = x_max;
  s.points = std::max<std::size_t>(9, std::size_t(std::ceil(x_max / h)) + 1);
  return s;
}

double MarginalTable::mean(std::size_t node, std::size_t line) const {
  if (pinned.at(node).at(line)) return *pinned[node][line];
  const auto& d = density.at(node).at(line);
  const auto w = space.weights();
  double s = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) s += w[i] * space.x(i) * d[i];
  return s;
}

double MarginalTable::cdf(std::size_t node, std::size_t line, double x) const {
  if (pinned.at(node).at(line)) return x >= *pinned[node][line] ? 1.0 : 0.0;
  const auto& d = density.at(node).at(line);
  if (x <= 0.0) return 0.0;
  if (x >= space.x_max) return 1.0;
  const double h = space.spacing();
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < d.size(); ++i) total += 0.5 * h * (d[i] + d[i + 1]);
  const std::size_t cell = std::min(d.size() - 2, std::size_t(x / h));
  double below = 0.0;
  for (std::size_t i = 0; i < cell; ++i) below += 0.5 * h * (d[i] + d[i + 1]);
  const double u = x - space.x(cell);
  const double slope = (d[cell + 1] - d[cell]) / h;
  below += u * d[cell] + 0.5 * slope * u * u;
  return std::clamp(below / total, 0.0, 1.0);
}

std::function<double(double)> MarginalTable::cdf_function(std::size_t node,
                                                          std::size_t line) const {
  if (pinned.at(node).at(line)) {
    const double v = *pinned[node][line];
    return [v](double x) { return x >= v ? 1.0 : 0.0; };
  }
  const auto& d = density.at(node).at(line);
  const double h = space.spacing();
  std::vector<double> cum(d.size(), 0.0);
  for (std::size_t i = 0; i + 1 < d.size(); ++i) cum[i + 1] = cum[i] + 0.5 * h * (d[i] + d[i + 1]);
  const double total = cum.back();
  const SpaceGrid s = space;
  return [cum, d, h, total, s](double x) {
    if (x <= 0.0) return 0.0;
    if (x >= s.x_max) return 1.0;
    const std::size_t cell = std::min(d.size() - 2, std::size_t(x / h));
    const double u = x - s.x(cell);
    const double v = cum[cell] + u * d[cell] + 0.5 * (d[cell + 1] - d[cell]) / h * u * u;
    return std::clamp(v / total, 0.0, 1.0);
  };
}

namespace {
void put(std::ostream& out, double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, r.ptr - buf);
}
}  // namespace

void MarginalTable::write_csv(std::ostream& out) const {
  out << "node_time,line,x,density\n";
  for (std::size_t j = 0; j < density.size(); ++j) {
    for (std::size_t line = 0; line < lines; ++line) {
      if (pinned[j][line]) continue;
      const auto& d = density[j][line];
      for (std::size_t i = 0; i < d.size(); ++i) {
        put(out, grid.time(j));
        out << ',' << line + 1 << ',';
        put(out, space.x(i));
        out << ',';
        put(out, d[i]);
        out << '\n';
      }
    }
  }
}

MarginalTable transfer_marginals(const SamplerConfig& config, const OracleOptions& options) {
  return Transfer(config, options).run();
}

double log_brute_partition(const SamplerConfig& config, const OracleOptions& options) {
  return transfer_marginals(config, options).log_partition;
}

double brute_partition(const SamplerConfig& config, const OracleOptions& options) {
  return std::exp(log_brute_partition(config, options));
}

double reflection_positive_prob(double x, double y, double t) {
  if (!(x > 0.0) || !(y > 0.0) || !(t > 0.0)) {
    throw DomainError("reflection probability needs x, y, t > 0");
  }
  return -std::expm1(-2.0 * x * y / t);
}

namespace {
void check_chamber(std::span<const double> v, bool positive, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw DomainError(std::string(what) + " must be finite");
    if (i > 0 && !(v[i - 1] > v[i])) {
      throw DomainError(std::string(what) + " must be strictly decreasing");
    }
    if (positive && !(v[i] > 0.0)) throw DomainError(std::string(what) + " must be positive");
  }
}
}  // namespace

KmResult km_prob(std::span<const double> x, std::span<const double> y, double t, bool wall) {
  if (x.empty() || x.size() != y.size()) throw ShapeError("km_prob needs equal, non-empty sizes");
  if (!(t > 0.0)) throw DomainError("km_prob needs t > 0");
  check_chamber(x, wall, "start points");
  check_chamber(y, wall, "end points");
  const std::size_t k = x.size();
  auto lq = [t](double a, double b) { return -(a - b) * (a - b) / (2.0 * t); };
  Eigen::MatrixXd m(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double scale = 0.5 * (lq(x[i], y[i]) + lq(x[j], y[j]));
      double v = std::exp(lq(x[i], y[j]) - scale);
      if (wall) v -= std::exp(lq(x[i], -y[j]) - scale);
      m(i, j) = v;
    }
  }
  KmResult r;
  if (k == 1) {
    r.probability = m(0, 0);
    return r;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  r.probability = lu.determinant();
  r.rcond = lu.rcond();
  r.error_bound = std::numeric_limits<double>::epsilon() / std::max(r.rcond, 1e-300);
  r.ill_conditioned = r.rcond < 1e-8;
  return r;
}

double killed_density(std::span<const double> x, std::span<const double> z, double t) {
  if (x.empty() || x.size() != z.size()) throw ShapeError("killed_density needs equal sizes");
  if (!(t > 0.0)) throw DomainError("killed_density needs t > 0");
  const std::size_t k = x.size();
  Eigen::MatrixXd m(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) m(i, j) = kernel_q(t, x[i], z[j]) - kernel_q(t, x[i], -z[j]);
  }
  return k == 1 ? m(0, 0) : Eigen::FullPivLU<Eigen::MatrixXd>(m).determinant();
}

HarnackResult harnack_ratio_check(std::size_t k, double t, double L, std::size_t samples,
                                  std::uint64_t seed, ChamberFunction u, double t0) {
  if (!(t0 > 0.0) || !(t >= t0)) throw DomainError("Harnack check needs t >= t0 > 0");
  if (k == 0 || !(L > 0.0)) throw DomainError("Harnack check needs k >= 1 and L > 0");
  if (samples < 2) throw DomainError("Harnack check needs at least two samples");
  if (!u) u = [](std::span<const double> v) { return harmonic_U(v); };
  RandomStream rng(seed);
  HarnackResult r;
  r.min_ratio = std::numeric_limits<double>::infinity();
  r.max_ratio = 0.0;
  std::vector<double> x(k), z(k);
  for (std::size_t s = 0; s < samples; ++s) {
    for (auto& v : x) v = L * rng.uniform();
    for (auto& v : z) v = L * rng.uniform();
    std::sort(x.rbegin(), x.rend());
    std::sort(z.rbegin(), z.rend());
    const double denom = u(x) * u(z);
    const double p = killed_density(x, z, t);
    if (!(denom > 0.0) || !(p > 0.0)) continue;
    const double ratio = p / denom;
    if (!std::isfinite(ratio)) continue;
    r.min_ratio = std::min(r.min_ratio, ratio);
    r.max_ratio = std::max(r.max_ratio, ratio);
    ++r.samples;
  }
  if (r.samples < 2) throw DomainError("Harnack check: degenerate sample set");
  return r;
}

ExactLineSampler::ExactLineSampler(TimeGrid grid, double rho, double x, double y)
    : grid_(grid), x_(x), y_(y) {
  if (!(rho >= 0.0) || !(x >= 0.0) || !(y >= 0.0)) {
    throw DomainError("exact sampler needs rho, x, y >= 0");
  }
  shift_.resize(grid_.size());
  for (std::size_t j = 0; j < grid_.size(); ++j) {
    const double t = grid_.time(j);
    shift_[j] = -0.5 * rho * (t - grid_.left()) * (grid_.right() - t);
  }
  shift_.front() = shift_.back() = 0.0;
}

Path ExactLineSampler::sample(RandomStream& rng) {
  const std::size_t m = grid_.steps();
  const double sd = std::sqrt(grid_.dt());
  Path w(m + 1, 0.0);
  for (;;) {
    ++attempts_;
    for (std::size_t j = 1; j <= m; ++j) w[j] = w[j - 1] + sd * rng.normal();
    bool ok = true;
    Path out(m + 1);
    for (std::size_t j = 0; j <= m; ++j) {
      const double f = double(j) / double(m);
      out[j] = x_ + (y_ - x_) * f + w[j] - f * w[m] + shift_[j];
      if (j > 0 && j < m && out[j] < 0.0) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    out.front() = x_;
    out.back() = y_;
    return out;
  }
}

}  // namespace tiltline
