#include "osrpc/sampling.hpp"

#include <cmath>
#include <string>

#include "osrpc/errors.hpp"
#include "osrpc/special.hpp"

namespace osrpc {

void TruncationBounds::validate() const {
  if (!(lower < upper)) {
    throw InvalidParameterError("TruncationBounds: lower (" +
                                std::to_string(lower) +
                                ") must be below upper (" +
                                std::to_string(upper) + ")");
  }
}

double sample_gamma(double shape, RngStream& rng) {
  if (!(shape > 0.0)) {
    throw InvalidParameterError("sample_gamma: shape must be positive, got " +
                                std::to_string(shape));
  }
  if (shape == 1.0) return rng.exponential();
  if (shape < 1.0) {
    const double g = sample_gamma(shape + 1.0, rng);
    const double u = rng.uniform_pos();
    return g * std::pow(u, 1.0 / shape);
  }
  // Marsaglia & Tsang (2000) squeeze method.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_pos();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double sample_gamma(double shape, double rate, RngStream& rng) {
  if (!(rate > 0.0)) {
    throw InvalidParameterError("sample_gamma: rate must be positive, got " +
                                std::to_string(rate));
  }
  return sample_gamma(shape, rng) / rate;
}

double sample_beta(double a, double b, RngStream& rng) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw InvalidParameterError("sample_beta: parameters must be positive");
  }
  const double x = sample_gamma(a, rng);
  const double y = sample_gamma(b, rng);
  double r = (x + y > 0.0) ? x / (x + y) : 0.5;
  if (r <= 0.0) r = 1e-300;
  if (r >= 1.0) r = 1.0 - 1e-16;
  return r;
}

void sample_dirichlet_into(std::span<const double> concentration,
                           std::span<double> out, RngStream& rng) {
  if (concentration.empty()) {
    throw InvalidParameterError("sample_dirichlet: empty concentration");
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < concentration.size(); ++k) {
    const double a = concentration[k];
    if (!(a > 0.0)) {
      throw InvalidParameterError(
          "sample_dirichlet: concentration must be positive, component " +
          std::to_string(k) + " is " + std::to_string(a));
    }
    double g = sample_gamma(a, rng);
    if (g <= 0.0) g = 1e-308;  // keep components strictly positive
    out[k] = g;
    sum += g;
  }
  for (std::size_t k = 0; k < concentration.size(); ++k) out[k] /= sum;
}

std::vector<double> sample_dirichlet(std::span<const double> concentration,
                                     RngStream& rng) {
  std::vector<double> out(concentration.size());
  sample_dirichlet_into(concentration, out, rng);
  return out;
}

namespace {

// N(0,1) restricted to (lo, hi) with lo >= 4: translated-exponential
// rejection (Robert 1995). hi may be infinite.
double sample_right_tail(double lo, double hi, RngStream& rng) {
  const double alpha = 0.5 * (lo + std::sqrt(lo * lo + 4.0));
  for (int attempt = 0; attempt < 1000000; ++attempt) {
    const double x = lo + rng.exponential() / alpha;
    if (x >= hi) continue;
    const double w = x - alpha;
    if (rng.uniform() <= std::exp(-0.5 * w * w)) return x;
  }
  throw NumericError("sample_truncnorm: tail rejection failed to accept in (" +
                     std::to_string(lo) + ", " + std::to_string(hi) + ")");
}

}  // namespace

double sample_truncnorm(double mean, double sd, const TruncationBounds& bounds,
                        RngStream& rng) {
  if (!(sd > 0.0)) {
    throw InvalidParameterError("sample_truncnorm: sd must be positive");
  }
  bounds.validate();
  double a = (bounds.lower - mean) / sd;
  double b = (bounds.upper - mean) / sd;

  if (std::isinf(a) && a < 0.0 && std::isinf(b) && b > 0.0) {
    return mean + sd * rng.normal();
  }

  // Work on the side where Phi has full floating-point resolution: flip the
  // interval into the left half-line when it leans right.
  bool flipped = false;
  const double lean = (std::isinf(a) ? b : (std::isinf(b) ? a : a + b));
  if (lean > 0.0) {
    flipped = true;
    const double na = -b;
    b = -a;
    a = na;
  }

  double x;
  if (b <= -4.0) {
    // Both bounds beyond 4 sd in the tail; mirror to the right tail.
    const double pa = normal_cdf(a);
    const double pb = normal_cdf(b);
    if (!(pb - pa >= 1e-300)) {
      throw NumericError(
          "sample_truncnorm: interval mass underflow on standardized (" +
          std::to_string(a) + ", " + std::to_string(b) + ")");
    }
    x = -sample_right_tail(-b, -a, rng);
  } else {
    const double pa = normal_cdf(a);
    const double pb = normal_cdf(b);
    if (!(pb - pa >= 1e-300)) {
      throw NumericError(
          "sample_truncnorm: interval mass underflow on standardized (" +
          std::to_string(a) + ", " + std::to_string(b) + ")");
    }
    x = normal_quantile(rng.uniform_in(pa, pb));
    if (x <= a) x = std::nextafter(a, b);
    if (x >= b) x = std::nextafter(b, a);
  }

  if (flipped) x = -x;
  double out = mean + sd * x;
  if (out <= bounds.lower) out = std::nextafter(bounds.lower, bounds.upper);
  if (out >= bounds.upper) out = std::nextafter(bounds.upper, bounds.lower);
  return out;
}

std::vector<double> sample_mvn(const std::vector<double>& mean,
                               const Matrix& covariance, RngStream& rng) {
  const int q = static_cast<int>(mean.size());
  if (covariance.rows() != q || covariance.cols() != q) {
    throw InvalidParameterError("sample_mvn: dimension mismatch");
  }
  const Matrix L = cholesky(covariance);
  std::vector<double> z(q);
  for (int i = 0; i < q; ++i) z[i] = rng.normal();
  std::vector<double> out(mean);
  for (int i = 0; i < q; ++i) {
    double s = 0.0;
    for (int j = 0; j <= i; ++j) s += L(i, j) * z[j];
    out[i] += s;
  }
  return out;
}

std::vector<double> sample_mvn_from_precision_chol(
    const std::vector<double>& mean, const Matrix& precision_chol,
    RngStream& rng) {
  const int q = static_cast<int>(mean.size());
  std::vector<double> z(q);
  for (int i = 0; i < q; ++i) z[i] = rng.normal();
  std::vector<double> w = backsolve_transposed(precision_chol, z);
  for (int i = 0; i < q; ++i) w[i] += mean[i];
  return w;
}

}  // namespace osrpc
