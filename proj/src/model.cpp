#include "osrpc/model.hpp"

#include <cmath>
#include <string>

#include "osrpc/errors.hpp"
#include "osrpc/special.hpp"

namespace osrpc {

std::string to_string(Mode m) { return m == Mode::osRPC ? "osrpc" : "oslcm"; }

Mode mode_from_string(const std::string& s) {
  if (s == "osrpc" || s == "osRPC") return Mode::osRPC;
  if (s == "oslcm" || s == "osLCM") return Mode::osLCM;
  throw InvalidParameterError("unknown mode '" + s +
                              "' (expected osrpc or oslcm)");
}

void Hyperparameters::validate() const {
  if (!(alpha > 0.0) || !(eta > 0.0) || !(a_beta > 0.0) || !(b_beta > 0.0)) {
    throw InvalidParameterError(
        "hyperparameters: alpha, eta, a_beta, b_beta must be positive");
  }
  if (!(sigma0 > 0.0) || !(s0 > 0.0)) {
    throw InvalidParameterError("hyperparameters: sigma0 and s0 must be positive");
  }
  if (K0 < 1 || Ks < 1) {
    throw InvalidParameterError("hyperparameters: K0 and Ks must be at least 1");
  }
  if (M != 0 && M < 2) {
    throw InvalidParameterError("hyperparameters: M must be 0 (infer) or >= 2");
  }
}

void SamplerConfig::validate() const {
  if (adaptive_iters < 1 || fixed_iters < 1 || thin < 1) {
    throw InvalidParameterError("sampler config: iteration counts must be positive");
  }
  if (adaptive_burnin < 0 || adaptive_burnin >= adaptive_iters) {
    throw InvalidParameterError("sampler config: adaptive burn-in must be below adaptive iterations");
  }
  if (fixed_burnin < 0 || fixed_burnin >= fixed_iters) {
    throw InvalidParameterError("sampler config: fixed burn-in must be below fixed iterations");
  }
  if (!(nonempty_threshold > 0.0 && nonempty_threshold < 1.0)) {
    throw InvalidParameterError("sampler config: nonempty threshold must be in (0,1)");
  }
  if (permute_every < 0) {
    throw InvalidParameterError("sampler config: permute_every must be >= 0");
  }
}

void ModelState::check_invariants(double tol) const {
  auto check_simplex = [&](const double* v, int len, const std::string& what) {
    double sum = 0.0;
    for (int r = 0; r < len; ++r) {
      if (!(v[r] >= 0.0)) {
        throw NumericError(what + ": negative component");
      }
      sum += v[r];
    }
    if (std::fabs(sum - 1.0) > tol) {
      throw NumericError(what + ": sums to " + std::to_string(sum));
    }
  };
  check_simplex(pi.data(), K, "pi");
  const int S = static_cast<int>(lambda.size());
  const int p = static_cast<int>(cell_offset.size()) - 1;
  for (int s = 0; s < S; ++s) {
    check_simplex(lambda[s].data(), Ks[s], "lambda[" + std::to_string(s) + "]");
  }
  for (int k = 1; k <= K; ++k) {
    for (int j = 0; j < p; ++j) {
      const int dj = cell_offset[j + 1] - cell_offset[j];
      check_simplex(&theta0[static_cast<std::size_t>(k - 1) * D + cell_offset[j]], dj,
                    "theta0[" + std::to_string(k) + "][" + std::to_string(j) + "]");
    }
  }
  for (int s = 0; s < S; ++s) {
    for (int l = 1; l <= Ks[s]; ++l) {
      for (int j = 0; j < p; ++j) {
        const int dj = cell_offset[j + 1] - cell_offset[j];
        check_simplex(&theta1[s][static_cast<std::size_t>(l - 1) * D + cell_offset[j]], dj,
                      "theta1");
      }
    }
  }
  for (double v : nu) {
    if (!(v >= 0.0 && v <= 1.0)) throw NumericError("nu outside [0,1]");
  }
  for (double v : beta) {
    if (!(v > 0.0)) throw NumericError("beta not positive");
  }
  for (std::size_t m = 1; m < probit.delta.size(); ++m) {
    if (!(probit.delta[m - 1] < probit.delta[m])) {
      throw NumericError("delta not strictly increasing");
    }
  }
}

double outcome_category_logprob(const std::vector<double>& delta, double s0,
                                double mu, int m, int M) {
  double prob;
  if (M == 1) return 0.0;
  if (m == 1) {
    prob = normal_cdf((delta[0] - mu) / s0);
  } else if (m == M) {
    prob = normal_sf((delta[M - 2] - mu) / s0);
  } else {
    prob = normal_cdf((delta[m - 1] - mu) / s0) -
           normal_cdf((delta[m - 2] - mu) / s0);
  }
  if (prob < 1e-300) prob = 1e-300;
  return std::log(prob);
}

double joint_loglik(const ModelState& state, const CategoricalDataset& data) {
  const int n = data.n;
  const int p = data.p;
  const int S = data.S;
  const int K = state.K;
  const int M = data.M;
  const auto& xi = state.probit.xi;

  // log Pr(y = m) for every (subpop, cluster, category) cell-means cell
  std::vector<double> ltab(static_cast<std::size_t>(S) * K * M);
  for (int s = 0; s < S; ++s) {
    for (int k = 0; k < K; ++k) {
      const double mu = xi[s] + xi[S + k];
      for (int m = 1; m <= M; ++m) {
        ltab[(static_cast<std::size_t>(s) * K + k) * M + (m - 1)] =
            outcome_category_logprob(state.probit.delta, state.probit.s0, mu, m, M);
      }
    }
  }

  std::vector<double> logpi(K);
  for (int k = 0; k < K; ++k) {
    logpi[k] = std::log(std::max(state.pi[k], 1e-300));
  }

  double total = 0.0;
  std::vector<double> acc(K);
  for (int i = 0; i < n; ++i) {
    const int s = data.subpop[i] - 1;
    for (int k = 0; k < K; ++k) {
      acc[k] = logpi[k] +
               ltab[(static_cast<std::size_t>(s) * K + k) * M + (data.y[i] - 1)];
    }
    double local_part = 0.0;
    for (int j = 0; j < p; ++j) {
      const int cell = state.cell_offset[j] + data.level(i, j) - 1;
      if (state.G[static_cast<std::size_t>(i) * p + j]) {
        const double* t0 = state.theta0.data() + cell;
        for (int k = 0; k < K; ++k) {
          acc[k] += std::log(std::max(t0[static_cast<std::size_t>(k) * state.D], 1e-300));
        }
      } else {
        double mix = 0.0;
        for (int l = 1; l <= state.Ks[s]; ++l) {
          mix += state.lambda[s][l - 1] *
                 state.theta1[s][static_cast<std::size_t>(l - 1) * state.D + cell];
        }
        local_part += std::log(std::max(mix, 1e-300));
      }
    }
    double mx = acc[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, acc[k]);
    double sum = 0.0;
    for (int k = 0; k < K; ++k) sum += std::exp(acc[k] - mx);
    total += mx + std::log(sum) + local_part;
  }
  return total;
}

}  // namespace osrpc
