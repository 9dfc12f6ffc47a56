#pragma once

#include <vector>

#include "osrpc/dataset.hpp"
#include "osrpc/model.hpp"
#include "osrpc/rng.hpp"
#include "osrpc/sampling.hpp"

namespace osrpc {

// Truncation interval of the latent response for outcome level m (1-based).
TruncationBounds outcome_interval(const std::vector<double>& delta, int m,
                                  int M);

// Latent responses: z_i ~ N(W_i xi, 1) truncated to the interval of y_i.
void draw_z(ProbitState& probit, const DesignMatrix& design,
            const std::vector<int>& y, RngStream& rng);

// Regression coefficients from their multivariate normal full conditional
// (Sigma0^{-1} + W'W)^{-1}(Sigma0^{-1} mu0 + W'Z), cov (Sigma0^{-1} + W'W)^{-1}.
void update_xi(ProbitState& probit, const DesignMatrix& design,
               const ProbitPrior& prior, RngStream& rng);

// Ordered-boundary updates via the uniform-transform scheme; boundary m is
// skipped (flag false) when outcome level m or m+1 has no subjects.
std::vector<bool> update_delta(ProbitState& probit, const std::vector<int>& y,
                               RngStream& rng);

struct OutcomeLikelihood {
  Matrix probs;        // n x M category probabilities
  double loglik = 0.0; // sum of log prob of the observed categories
};

OutcomeLikelihood outcome_likelihood(const ProbitState& probit,
                                     const DesignMatrix& design,
                                     const std::vector<int>& y);

// Sample-quantile boundary start: delta_1 = 0, later boundaries at the
// normal quantiles of the cumulative outcome frequencies.
std::vector<double> initial_delta(const std::vector<int>& y, int M);

}  // namespace osrpc
