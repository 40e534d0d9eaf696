#include "tiltline/numerics.hpp"

#include <algorithm>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <limits>
#include <numbers>

#include "tiltline/errors.hpp"

namespace tiltline {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_ccdf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw DomainError("quantile needs p in [0, 1]");
  }
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double normal_ccdf_inverse(double q) { return -normal_quantile(q); }

double truncated_normal_inverse(double mean, double sd, double lo, double hi, double u) {
  if (!(sd > 0.0)) throw DomainError("truncated normal needs sd > 0");
  if (!(hi > lo)) throw ConsistencyError("empty truncation interval");
  const double a = (lo - mean) / sd;
  const double b = (hi - mean) / sd;
  double z;
  if (a > 0.0) {
    // Both bounds in the upper tail: work with survival probabilities.
    const double qa = normal_ccdf(a);
    const double qb = std::isfinite(b) ? normal_ccdf(b) : 0.0;
    if (qa <= 0.0) {
      z = a;  // beyond double range; the lower bound is the only sensible value
    } else {
      z = normal_ccdf_inverse(qa - u * (qa - qb));
    }
  } else {
    const double pa = std::isfinite(a) ? normal_cdf(a) : 0.0;
    const double pb = std::isfinite(b) ? normal_cdf(b) : 1.0;
    if (pb <= 0.0) {
      z = b;
    } else {
      z = normal_quantile(pa + u * (pb - pa));
    }
  }
  double x = mean + sd * z;
  // Keep the draw inside the open interval despite rounding.
  if (!(x > lo)) x = std::nextafter(lo, std::numeric_limits<double>::infinity());
  if (!(x < hi)) x = std::nextafter(hi, -std::numeric_limits<double>::infinity());
  if (!(x > lo)) x = 0.5 * (lo + hi);
  return x;
}

}  // namespace tiltline
