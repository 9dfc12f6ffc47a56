#pragma once

#include <limits>
#include <span>
#include <vector>

#include "osrpc/linalg.hpp"
#include "osrpc/rng.hpp"

namespace osrpc {

// Open interval for truncated sampling; either side may be infinite.
struct TruncationBounds {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  void validate() const;  // throws InvalidParameterError unless lower < upper
};

// Gamma(shape, 1). Marsaglia-Tsang for shape >= 1, the standard boost trick
// below 1, and the exponential fast path at shape == 1 (the overfitted-prior
// case eta = alpha = 1 hits it constantly).
double sample_gamma(double shape, RngStream& rng);
double sample_gamma(double shape, double rate, RngStream& rng);

double sample_beta(double a, double b, RngStream& rng);

// Dirichlet via normalized Gamma draws. All concentrations must be > 0.
void sample_dirichlet_into(std::span<const double> concentration,
                           std::span<double> out, RngStream& rng);
std::vector<double> sample_dirichlet(std::span<const double> concentration,
                                     RngStream& rng);

// Doubly truncated normal. Inverse-CDF in the central regime; Robert's
// translated-exponential rejection once both bounds sit beyond 4 sd on the
// same side. Throws NumericError when the interval mass underflows (CDF
// difference below 1e-300).
double sample_truncnorm(double mean, double sd, const TruncationBounds& bounds,
                        RngStream& rng);

// Multivariate normal from mean and SPD covariance (Cholesky inside).
std::vector<double> sample_mvn(const std::vector<double>& mean,
                               const Matrix& covariance, RngStream& rng);

// Draw from MVN(mean, P^{-1}) given the lower Cholesky factor of the
// precision P. Used by the regression-coefficient update.
std::vector<double> sample_mvn_from_precision_chol(
    const std::vector<double>& mean, const Matrix& precision_chol,
    RngStream& rng);

}  // namespace osrpc
