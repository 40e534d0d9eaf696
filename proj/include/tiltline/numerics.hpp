#pragma once

namespace tiltline {

double normal_cdf(double z);
/// Upper tail 1 - Phi(z), accurate for large z.
double normal_ccdf(double z);
double normal_quantile(double p);
/// Inverse of the upper tail: returns z with normal_ccdf(z) = q.
double normal_ccdf_inverse(double q);

/// Inverse-CDF draw from N(mean, sd^2) truncated to the open interval
/// (lo, hi); either bound may be infinite. Non-decreasing in mean, lo, hi
/// and u, which makes it the monotone realization used by couplings.
double truncated_normal_inverse(double mean, double sd, double lo, double hi, double u);

}  // namespace tiltline
