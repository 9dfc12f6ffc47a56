#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "osrpc/dataset.hpp"
#include "osrpc/linalg.hpp"

namespace osrpc {

enum class Mode { osRPC, osLCM };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct Hyperparameters {
  double alpha = 1.0;   // mixture-weight Dirichlet concentration
  double eta = 1.0;     // pattern-table Dirichlet concentration
  double a_beta = 1.0;  // Gamma shape for the Beta-Bernoulli hyperparameter
  double b_beta = 1.0;  // Gamma rate
  double mu0 = 0.0;     // prior mean for every regression coefficient
  double sigma0 = 1.0;  // prior variance scale: Sigma0 = sigma0 * I
  double s0 = 1.0;      // probit scale constant
  int K0 = 50;          // overfitted global cluster count
  int Ks = 50;          // overfitted local cluster count
  int M = 0;            // outcome levels; 0 = take from the dataset

  void validate() const;
};

struct SamplerConfig {
  int adaptive_iters = 10000;
  int adaptive_burnin = 5000;
  int fixed_iters = 25000;
  int fixed_burnin = 15000;
  int thin = 10;
  double nonempty_threshold = 0.05;
  int permute_every = 10;
  Mode mode = Mode::osRPC;
  std::uint64_t seed = 0;
  // Test hook: keep the full osRPC sweep but hold nu at 1 everywhere.
  bool pin_nu_at_one = false;

  void validate() const;
};

struct ProbitPrior {
  std::vector<double> mu0;
  Matrix Sigma0;
};

// Latent probit block: z lives in the delta-interval of the observed
// outcome; delta is strictly increasing.
struct ProbitState {
  std::vector<double> z;      // n
  std::vector<double> xi;     // q = S + K
  std::vector<double> delta;  // M - 1
  double s0 = 1.0;
};

// Full parameter set of one chain. Cluster indices (C, L) and level codes
// are 1-based throughout, matching the file formats.
struct ModelState {
  int K = 0;            // current global cluster count
  std::vector<int> Ks;  // per-subpopulation local cluster count

  std::vector<int> C;            // n, 1..K
  std::vector<std::uint16_t> L;  // n*p, 1..Ks[s_i]
  std::vector<std::uint8_t> G;   // n*p, 0/1

  std::vector<double> pi;                   // K
  std::vector<std::vector<double>> lambda;  // [s][Ks[s]]
  // theta0: K x (sum_j d_j), layout [k][cell] with cell = offset[j] + (r-1)
  std::vector<double> theta0;
  // theta1[s]: Ks[s] x (sum_j d_j), same cell layout
  std::vector<std::vector<double>> theta1;
  std::vector<double> nu;    // S*p, [s*p + j]
  std::vector<double> beta;  // S

  ProbitState probit;

  // Cell layout shared with the dataset's level counts.
  std::vector<int> cell_offset;  // p+1
  int D = 0;                     // sum_j d_j

  double theta0_at(int k, int j, int r) const {  // k 1-based, r 1-based
    return theta0[static_cast<std::size_t>(k - 1) * D + cell_offset[j] + r - 1];
  }
  double theta1_at(int s, int l, int j, int r) const {  // s 0-based, l 1-based
    return theta1[s][static_cast<std::size_t>(l - 1) * D + cell_offset[j] + r - 1];
  }
  std::uint8_t g_at(int i, int j, int p) const { return G[static_cast<std::size_t>(i) * p + j]; }

  // Checks every simplex and ordering invariant; throws on violation.
  void check_invariants(double tol = 1e-10) const;
};

// Observed-data joint log likelihood of the mixture + probit model at the
// given state: per subject the global factor mixes over clusters (with the
// subject's cell-mean column following the candidate cluster) and variables
// flagged local contribute through the local mixture.
double joint_loglik(const ModelState& state, const CategoricalDataset& data);

// log Pr(y = m | linear predictor mu), m 1-based.
double outcome_category_logprob(const std::vector<double>& delta, double s0,
                                double mu, int m, int M);

}  // namespace osrpc
