#pragma once

// Test-only oracles, kept independent of the library's own special-function
// and sampling code paths: boost::math supplies reference CDFs, the erf
// series and bisection quantile are hand-rolled here.

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>

namespace oracle {

// Phi via the Taylor series of erf; converges to ~1e-15 for |x| <= 6.
inline double normal_cdf_series(double x) {
  const double z = x / std::sqrt(2.0);
  double term = z;
  double sum = z;
  for (int n = 1; n < 200; ++n) {
    term *= -z * z / n;
    sum += term / (2 * n + 1);
    if (std::fabs(term) < 1e-18) break;
  }
  const double erf = 2.0 / std::sqrt(M_PI) * sum;
  return 0.5 * (1.0 + erf);
}

// Quantile by bisection on a supplied CDF.
inline double quantile_bisect(const std::function<double(double)>& cdf, double p,
                              double lo = -40.0, double hi = 40.0) {
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Mean of a doubly truncated standard normal by Simpson quadrature.
inline double truncnorm_mean_quadrature(double mean, double sd, double lo, double hi) {
  const double a = std::max(lo, mean - 12.0 * sd);
  const double b = std::min(hi, mean + 12.0 * sd);
  const int n = 20000;  // even
  const double h = (b - a) / n;
  auto pdf = [&](double x) {
    const double z = (x - mean) / sd;
    return std::exp(-0.5 * z * z);
  };
  double num = 0.0, den = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = a + i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    num += w * x * pdf(x);
    den += w * pdf(x);
  }
  return num / den;
}

// Two-sided Kolmogorov-Smirnov test p-value against an analytic CDF.
inline double ks_pvalue(std::vector<double> sample,
                        const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const std::size_t n = sample.size();
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = cdf(sample[i]);
    d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
    d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - f));
  }
  // asymptotic Kolmogorov distribution
  const double t = (std::sqrt(static_cast<double>(n)) + 0.12 +
                    0.11 / std::sqrt(static_cast<double>(n))) *
                   d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    p += 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * t * t);
  }
  return std::min(std::max(p, 0.0), 1.0);
}

inline double beta_cdf(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return boost::math::cdf(boost::math::beta_distribution<double>(a, b), x);
}

inline double gamma_cdf(double shape, double rate, double x) {
  if (x <= 0.0) return 0.0;
  return boost::math::cdf(boost::math::gamma_distribution<double>(shape, 1.0 / rate), x);
}

inline double normal_cdf_ref(double mean, double sd, double x) {
  return boost::math::cdf(boost::math::normal_distribution<double>(mean, sd), x);
}

inline double chi_squared_quantile(double df, double p) {
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(df), p);
}

}  // namespace oracle
