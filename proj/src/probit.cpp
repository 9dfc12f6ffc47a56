#include "osrpc/probit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "osrpc/errors.hpp"
#include "osrpc/special.hpp"

namespace osrpc {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TruncationBounds outcome_interval(const std::vector<double>& delta, int m,
                                  int M) {
  TruncationBounds b;
  if (m > 1) b.lower = delta[m - 2];
  if (m < M) b.upper = delta[m - 1];
  return b;
}

void draw_z(ProbitState& probit, const DesignMatrix& design,
            const std::vector<int>& y, RngStream& rng) {
  const int n = design.W.rows();
  const int M = static_cast<int>(probit.delta.size()) + 1;
  probit.z.resize(n);
  for (int i = 0; i < n; ++i) {
    const double mu = design.predictor(i, probit.xi);
    const TruncationBounds b = outcome_interval(probit.delta, y[i], M);
    try {
      probit.z[i] = sample_truncnorm(mu, 1.0, b, rng);
    } catch (const NumericError& e) {
      throw NumericError("draw_z: subject " + std::to_string(i + 1) + ": " +
                         e.what());
    }
  }
}

void update_xi(ProbitState& probit, const DesignMatrix& design,
               const ProbitPrior& prior, RngStream& rng) {
  const int q = design.W.cols();
  if (static_cast<int>(prior.mu0.size()) != q || prior.Sigma0.rows() != q) {
    throw InvalidParameterError("update_xi: prior dimension mismatch");
  }
  // Sigma0^{-1} and Sigma0^{-1} mu0 through the prior Cholesky factor.
  const Matrix L0 = cholesky(prior.Sigma0);
  Matrix prec = crossprod(design.W);
  std::vector<double> rhs = crossprod_vec(design.W, probit.z);
  std::vector<double> e(q, 0.0);
  for (int j = 0; j < q; ++j) {
    std::fill(e.begin(), e.end(), 0.0);
    e[j] = 1.0;
    const std::vector<double> col = chol_solve(L0, e);
    for (int i = 0; i < q; ++i) prec(i, j) += col[i];
  }
  const std::vector<double> pm = chol_solve(L0, prior.mu0);
  for (int i = 0; i < q; ++i) rhs[i] += pm[i];

  const Matrix Lp = cholesky(prec);
  const std::vector<double> mean = chol_solve(Lp, rhs);
  probit.xi = sample_mvn_from_precision_chol(mean, Lp, rng);
}

namespace {

double clamped_quantile(double u) {
  if (u < 1e-300) u = 1e-300;
  if (u > 1.0 - 1e-16) u = 1.0 - 1e-16;
  return normal_quantile(u);
}

}  // namespace

std::vector<bool> update_delta(ProbitState& probit, const std::vector<int>& y,
                               RngStream& rng) {
  const int M = static_cast<int>(probit.delta.size()) + 1;
  const double s0 = probit.s0;
  std::vector<bool> updated(M - 1, false);

  std::vector<double> cmax(M, -kInf);  // max z within category m
  std::vector<double> cmin(M, kInf);   // min z within category m
  for (std::size_t i = 0; i < y.size(); ++i) {
    const int m = y[i] - 1;
    cmax[m] = std::max(cmax[m], probit.z[i]);
    cmin[m] = std::min(cmin[m], probit.z[i]);
  }

  for (int m = 1; m <= M - 1; ++m) {
    // boundary m separates categories m and m+1; both must be occupied
    if (!std::isfinite(cmax[m - 1]) || !std::isfinite(cmin[m])) continue;
    const double c1 = cmax[m - 1];
    const double c2 = cmin[m];
    double draw;
    if (m == 1) {
      // anchored to the next boundary (the Phi anchor is 1 when M == 2)
      const double phi_next =
          (M > 2) ? std::max(normal_cdf(probit.delta[1] / s0), 1e-300) : 1.0;
      const double lo = normal_cdf(c1 / s0) / phi_next;
      const double hi = normal_cdf(c2 / s0) / phi_next;
      const double star = rng.uniform_in(lo, hi);
      draw = clamped_quantile(phi_next * star);
    } else {
      // anchored to the freshly drawn previous boundary
      const double phi_prev = normal_cdf(probit.delta[m - 2] / s0);
      const double denom = std::max(1.0 - phi_prev, 1e-300);
      const double lo = (normal_cdf(c1 / s0) - phi_prev) / denom;
      const double hi = (normal_cdf(c2 / s0) - phi_prev) / denom;
      const double star = rng.uniform_in(lo, hi);
      draw = clamped_quantile(phi_prev + star * (1.0 - phi_prev));
    }
    // the transform targets (c1, c2); keep containment exact under rounding
    if (draw <= c1) draw = std::nextafter(c1, c2);
    if (draw >= c2) draw = std::nextafter(c2, c1);
    probit.delta[m - 1] = draw;
    updated[m - 1] = true;
  }
  return updated;
}

OutcomeLikelihood outcome_likelihood(const ProbitState& probit,
                                     const DesignMatrix& design,
                                     const std::vector<int>& y) {
  const int n = design.W.rows();
  const int M = static_cast<int>(probit.delta.size()) + 1;
  OutcomeLikelihood out;
  out.probs = Matrix(n, M);
  for (int i = 0; i < n; ++i) {
    const double mu = design.predictor(i, probit.xi);
    double prev = 0.0;
    for (int m = 1; m < M; ++m) {
      const double cdf = normal_cdf((probit.delta[m - 1] - mu) / probit.s0);
      out.probs(i, m - 1) = std::max(cdf - prev, 0.0);
      prev = cdf;
    }
    out.probs(i, M - 1) = std::max(1.0 - prev, 0.0);
    out.loglik += std::log(std::max(out.probs(i, y[i] - 1), 1e-300));
  }
  return out;
}

std::vector<double> initial_delta(const std::vector<int>& y, int M) {
  const int n = static_cast<int>(y.size());
  std::vector<int> cum(M, 0);
  for (int v : y) ++cum[v - 1];
  for (int m = 1; m < M; ++m) cum[m] += cum[m - 1];

  std::vector<double> delta(M - 1);
  delta[0] = 0.0;
  for (int m = 2; m <= M - 1; ++m) {
    double frac = static_cast<double>(cum[m - 1]) / std::max(n, 1);
    frac = std::min(std::max(frac, 1e-9), 1.0 - 1e-9);
    delta[m - 1] = std::max(normal_quantile(frac), delta[m - 2] + 1e-3);
  }
  return delta;
}

}  // namespace osrpc
