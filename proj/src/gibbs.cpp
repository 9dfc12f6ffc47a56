#include "osrpc/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "osrpc/errors.hpp"
#include "osrpc/probit.hpp"
#include "osrpc/sampling.hpp"
#include "osrpc/special.hpp"

namespace osrpc {

namespace step {
// Stable stream tags; init block uses iter 0.
constexpr int kInitC = 1;
constexpr int kInitL = 2;
constexpr int kInitG = 3;
constexpr int kInitPi = 4;
constexpr int kInitLambda = 5;
constexpr int kInitTheta0 = 6;
constexpr int kInitTheta1 = 7;
constexpr int kInitBeta = 8;
constexpr int kInitXi = 9;
constexpr int kInitZ = 10;
constexpr int kG = 20;
constexpr int kC = 21;
constexpr int kL = 22;
constexpr int kPi = 23;
constexpr int kLambda = 24;
constexpr int kTheta = 25;
constexpr int kNuBeta = 26;
constexpr int kZ = 27;
constexpr int kXi = 28;
constexpr int kDelta = 29;
constexpr int kPermute = 30;
}  // namespace step

GibbsSampler::GibbsSampler(const CategoricalDataset& data,
                           const Hyperparameters& hyper,
                           const SamplerConfig& cfg)
    : data_(data), hyper_(hyper), cfg_(cfg) {
  data_.validate();
  hyper_.validate();
  cfg_.validate();
  M_ = hyper_.M > 0 ? hyper_.M : data_.M;
  for (int i = 0; i < data_.n; ++i) {
    if (data_.y[i] > M_) {
      throw InvalidParameterError("observed outcome exceeds configured M");
    }
  }
}

RngStream GibbsSampler::stream(int phase, int iter, int s) const {
  return RngStream(derive_seed(cfg_.seed,
                               {static_cast<std::uint64_t>(phase),
                                static_cast<std::uint64_t>(iter),
                                static_cast<std::uint64_t>(s)}),
                   0);
}

void GibbsSampler::init_state(int K, std::vector<int> Ks, int phase) {
  const int n = data_.n;
  const int p = data_.p;
  const int S = data_.S;
  const bool lcm = cfg_.mode == Mode::osLCM;

  ModelState st;
  st.K = K;
  st.Ks = std::move(Ks);
  if (static_cast<int>(st.Ks.size()) != S) {
    throw InvalidParameterError("init_state: Ks must have one entry per subpopulation");
  }
  st.cell_offset.assign(p + 1, 0);
  for (int j = 0; j < p; ++j) st.cell_offset[j + 1] = st.cell_offset[j] + data_.d[j];
  st.D = st.cell_offset[p];

  {
    RngStream r = stream(phase, 0, step::kInitC);
    st.C.resize(n);
    for (int i = 0; i < n; ++i) st.C[i] = 1 + static_cast<int>(r.below(K));
  }
  st.L.assign(static_cast<std::size_t>(n) * p, 1);
  if (!lcm) {
    RngStream r = stream(phase, 0, step::kInitL);
    for (int i = 0; i < n; ++i) {
      const int ks = st.Ks[data_.subpop[i] - 1];
      for (int j = 0; j < p; ++j) {
        st.L[static_cast<std::size_t>(i) * p + j] =
            static_cast<std::uint16_t>(1 + r.below(ks));
      }
    }
  }

  const double nu0 = (lcm || cfg_.pin_nu_at_one) ? 1.0 : 0.5;
  st.nu.assign(static_cast<std::size_t>(S) * p, nu0);
  st.G.assign(static_cast<std::size_t>(n) * p, 1);
  if (!lcm) {
    RngStream r = stream(phase, 0, step::kInitG);
    for (std::size_t idx = 0; idx < st.G.size(); ++idx) {
      st.G[idx] = r.uniform() < nu0 ? 1 : 0;
    }
  }

  {
    RngStream r = stream(phase, 0, step::kInitPi);
    std::vector<double> conc(K, hyper_.alpha);
    st.pi = sample_dirichlet(conc, r);
  }
  st.lambda.resize(S);
  if (!lcm) {
    RngStream r = stream(phase, 0, step::kInitLambda);
    for (int s = 0; s < S; ++s) {
      std::vector<double> conc(st.Ks[s], hyper_.alpha);
      st.lambda[s] = sample_dirichlet(conc, r);
    }
  } else {
    for (int s = 0; s < S; ++s) {
      st.lambda[s].assign(st.Ks[s], 1.0 / st.Ks[s]);
    }
  }

  st.theta0.resize(static_cast<std::size_t>(K) * st.D);
  {
    RngStream r = stream(phase, 0, step::kInitTheta0);
    std::vector<double> conc;
    for (int k = 0; k < K; ++k) {
      for (int j = 0; j < p; ++j) {
        conc.assign(data_.d[j], hyper_.eta);
        sample_dirichlet_into(
            conc,
            std::span<double>(st.theta0.data() + static_cast<std::size_t>(k) * st.D +
                                  st.cell_offset[j],
                              data_.d[j]),
            r);
      }
    }
  }
  st.theta1.resize(S);
  if (!lcm) {
    RngStream r = stream(phase, 0, step::kInitTheta1);
    std::vector<double> conc;
    for (int s = 0; s < S; ++s) {
      st.theta1[s].resize(static_cast<std::size_t>(st.Ks[s]) * st.D);
      for (int l = 0; l < st.Ks[s]; ++l) {
        for (int j = 0; j < p; ++j) {
          conc.assign(data_.d[j], hyper_.eta);
          sample_dirichlet_into(
              conc,
              std::span<double>(st.theta1[s].data() +
                                    static_cast<std::size_t>(l) * st.D +
                                    st.cell_offset[j],
                                data_.d[j]),
              r);
        }
      }
    }
  } else {
    for (int s = 0; s < S; ++s) {
      st.theta1[s].resize(static_cast<std::size_t>(st.Ks[s]) * st.D);
      for (int l = 0; l < st.Ks[s]; ++l) {
        for (int j = 0; j < p; ++j) {
          for (int r2 = 0; r2 < data_.d[j]; ++r2) {
            st.theta1[s][static_cast<std::size_t>(l) * st.D + st.cell_offset[j] + r2] =
                1.0 / data_.d[j];
          }
        }
      }
    }
  }

  st.beta.assign(S, 1.0);
  if (!lcm) {
    RngStream r = stream(phase, 0, step::kInitBeta);
    for (int s = 0; s < S; ++s) {
      st.beta[s] = sample_gamma(hyper_.a_beta, hyper_.b_beta, r);
    }
  }

  const int q = S + K;
  st.probit.s0 = hyper_.s0;
  st.probit.xi.resize(q);
  {
    RngStream r = stream(phase, 0, step::kInitXi);
    const double sd = std::sqrt(hyper_.sigma0);
    for (int c = 0; c < q; ++c) st.probit.xi[c] = hyper_.mu0 + sd * r.normal();
  }
  st.probit.delta = initial_delta(data_.y, M_);
  {
    RngStream r = stream(phase, 0, step::kInitZ);
    st.probit.z.resize(n);
    for (int i = 0; i < n; ++i) {
      const double mu = st.probit.xi[data_.subpop[i] - 1] + st.probit.xi[S + st.C[i] - 1];
      st.probit.z[i] =
          sample_truncnorm(mu, 1.0, outcome_interval(st.probit.delta, data_.y[i], M_), r);
    }
  }

  state_ = std::move(st);
}

void GibbsSampler::set_state(const ModelState& st) { state_ = st; }

void GibbsSampler::update_G(RngStream& rng) {
  const int n = data_.n;
  const int p = data_.p;
  for (int i = 0; i < n; ++i) {
    const int s = data_.subpop[i] - 1;
    const std::size_t row = static_cast<std::size_t>(i) * p;
    const std::size_t t0row = static_cast<std::size_t>(state_.C[i] - 1) * state_.D;
    for (int j = 0; j < p; ++j) {
      const int cell = state_.cell_offset[j] + data_.level(i, j) - 1;
      const double nu_sj = state_.nu[static_cast<std::size_t>(s) * p + j];
      const double a = nu_sj * state_.theta0[t0row + cell];
      const double b =
          (1.0 - nu_sj) *
          state_.theta1[s][static_cast<std::size_t>(state_.L[row + j] - 1) * state_.D + cell];
      const double pij = a / (a + b);
      state_.G[row + j] = rng.uniform() < pij ? 1 : 0;
    }
  }
}

void GibbsSampler::update_C(RngStream& rng) {
  const int n = data_.n;
  const int p = data_.p;
  const int S = data_.S;
  const int K = state_.K;
  const int D = state_.D;

  logpi_.resize(K);
  for (int k = 0; k < K; ++k) logpi_[k] = std::log(std::max(state_.pi[k], 1e-300));

  logt0_t_.resize(static_cast<std::size_t>(D) * K);
  for (int k = 0; k < K; ++k) {
    const double* src = state_.theta0.data() + static_cast<std::size_t>(k) * D;
    for (int cell = 0; cell < D; ++cell) {
      logt0_t_[static_cast<std::size_t>(cell) * K + k] = std::log(std::max(src[cell], 1e-300));
    }
  }

  // log outcome probabilities for every (subpop, category, cluster) cell
  outcome_logtab_.resize(static_cast<std::size_t>(S) * M_ * K);
  for (int s = 0; s < S; ++s) {
    for (int k = 0; k < K; ++k) {
      const double mu = state_.probit.xi[s] + state_.probit.xi[S + k];
      for (int m = 1; m <= M_; ++m) {
        outcome_logtab_[(static_cast<std::size_t>(s) * M_ + m - 1) * K + k] =
            outcome_category_logprob(state_.probit.delta, state_.probit.s0, mu, m, M_);
      }
    }
  }

  acc_.resize(K);
  for (int i = 0; i < n; ++i) {
    const int s = data_.subpop[i] - 1;
    const std::size_t row = static_cast<std::size_t>(i) * p;
    const double* ltab =
        outcome_logtab_.data() + (static_cast<std::size_t>(s) * M_ + data_.y[i] - 1) * K;
    for (int k = 0; k < K; ++k) acc_[k] = logpi_[k] + ltab[k];
    for (int j = 0; j < p; ++j) {
      if (!state_.G[row + j]) continue;
      const int cell = state_.cell_offset[j] + data_.level(i, j) - 1;
      const double* lt = logt0_t_.data() + static_cast<std::size_t>(cell) * K;
      for (int k = 0; k < K; ++k) acc_[k] += lt[k];
    }
    double mx = acc_[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, acc_[k]);
    if (!std::isfinite(mx)) {
      throw NumericError("update_C: subject " + std::to_string(i + 1) +
                         " has -inf log probability in every cluster");
    }
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
      acc_[k] = std::exp(acc_[k] - mx);
      total += acc_[k];
    }
    const double u = rng.uniform() * total;
    double cum = 0.0;
    int pick = K;
    for (int k = 0; k < K; ++k) {
      cum += acc_[k];
      if (u < cum) {
        pick = k + 1;
        break;
      }
    }
    state_.C[i] = std::min(pick, K);
  }
}

void GibbsSampler::update_L(RngStream& rng) {
  const int n = data_.n;
  const int p = data_.p;
  const int S = data_.S;
  const int D = state_.D;

  lint1_t_.resize(S);
  std::vector<std::vector<double>> cumlambda(S);
  for (int s = 0; s < S; ++s) {
    const int ks = state_.Ks[s];
    lint1_t_[s].resize(static_cast<std::size_t>(D) * ks);
    for (int l = 0; l < ks; ++l) {
      const double* src = state_.theta1[s].data() + static_cast<std::size_t>(l) * D;
      for (int cell = 0; cell < D; ++cell) {
        lint1_t_[s][static_cast<std::size_t>(cell) * ks + l] = src[cell];
      }
    }
    cumlambda[s].resize(ks);
    double c = 0.0;
    for (int l = 0; l < ks; ++l) {
      c += state_.lambda[s][l];
      cumlambda[s][l] = c;
    }
  }

  std::vector<double> w;
  for (int i = 0; i < n; ++i) {
    const int s = data_.subpop[i] - 1;
    const int ks = state_.Ks[s];
    const std::size_t row = static_cast<std::size_t>(i) * p;
    w.resize(ks);
    for (int j = 0; j < p; ++j) {
      int pick = ks;
      if (state_.G[row + j]) {
        // globally explained pair: the conditional is the weight prior alone
        const double u = rng.uniform() * cumlambda[s][ks - 1];
        for (int l = 0; l < ks; ++l) {
          if (u < cumlambda[s][l]) {
            pick = l + 1;
            break;
          }
        }
      } else {
        const int cell = state_.cell_offset[j] + data_.level(i, j) - 1;
        const double* t1 = lint1_t_[s].data() + static_cast<std::size_t>(cell) * ks;
        double total = 0.0;
        for (int l = 0; l < ks; ++l) {
          w[l] = state_.lambda[s][l] * t1[l];
          total += w[l];
        }
        const double u = rng.uniform() * total;
        double cum = 0.0;
        for (int l = 0; l < ks; ++l) {
          cum += w[l];
          if (u < cum) {
            pick = l + 1;
            break;
          }
        }
      }
      state_.L[row + j] = static_cast<std::uint16_t>(std::min(pick, ks));
    }
  }
}

void GibbsSampler::update_pi(RngStream& rng) {
  const int K = state_.K;
  std::vector<double> conc(K, hyper_.alpha);
  for (int i = 0; i < data_.n; ++i) conc[state_.C[i] - 1] += 1.0;
  sample_dirichlet_into(conc, state_.pi, rng);
}

void GibbsSampler::update_lambda(RngStream& rng) {
  const int p = data_.p;
  for (int s = 0; s < data_.S; ++s) {
    std::vector<double> conc(state_.Ks[s], hyper_.alpha);
    for (int i = 0; i < data_.n; ++i) {
      if (data_.subpop[i] - 1 != s) continue;
      const std::size_t row = static_cast<std::size_t>(i) * p;
      for (int j = 0; j < p; ++j) conc[state_.L[row + j] - 1] += 1.0;
    }
    sample_dirichlet_into(conc, state_.lambda[s], rng);
  }
}

void GibbsSampler::update_theta(RngStream& rng) {
  const int n = data_.n;
  const int p = data_.p;
  const int S = data_.S;
  const int K = state_.K;
  const int D = state_.D;
  const bool lcm = cfg_.mode == Mode::osLCM;

  cnt0_.assign(static_cast<std::size_t>(K) * D, 0);
  if (!lcm) {
    cnt1_.resize(S);
    for (int s = 0; s < S; ++s) {
      cnt1_[s].assign(static_cast<std::size_t>(state_.Ks[s]) * D, 0);
    }
  }
  for (int i = 0; i < n; ++i) {
    const int s = data_.subpop[i] - 1;
    const std::size_t row = static_cast<std::size_t>(i) * p;
    const std::size_t t0row = static_cast<std::size_t>(state_.C[i] - 1) * D;
    for (int j = 0; j < p; ++j) {
      const int cell = state_.cell_offset[j] + data_.level(i, j) - 1;
      if (state_.G[row + j]) {
        ++cnt0_[t0row + cell];
      } else if (!lcm) {
        ++cnt1_[s][static_cast<std::size_t>(state_.L[row + j] - 1) * D + cell];
      }
    }
  }

  std::vector<double> conc;
  for (int k = 0; k < K; ++k) {
    const std::size_t base = static_cast<std::size_t>(k) * D;
    for (int j = 0; j < p; ++j) {
      const int dj = data_.d[j];
      conc.resize(dj);
      for (int r = 0; r < dj; ++r) {
        conc[r] = hyper_.eta + cnt0_[base + state_.cell_offset[j] + r];
      }
      sample_dirichlet_into(
          conc,
          std::span<double>(state_.theta0.data() + base + state_.cell_offset[j], dj),
          rng);
    }
  }
  if (!lcm) {
    for (int s = 0; s < S; ++s) {
      for (int l = 0; l < state_.Ks[s]; ++l) {
        const std::size_t base = static_cast<std::size_t>(l) * D;
        for (int j = 0; j < p; ++j) {
          const int dj = data_.d[j];
          conc.resize(dj);
          for (int r = 0; r < dj; ++r) {
            conc[r] = hyper_.eta + cnt1_[s][base + state_.cell_offset[j] + r];
          }
          sample_dirichlet_into(
              conc,
              std::span<double>(state_.theta1[s].data() + base + state_.cell_offset[j], dj),
              rng);
        }
      }
    }
  }
}

void GibbsSampler::update_nu_beta(RngStream& rng) {
  const int n = data_.n;
  const int p = data_.p;
  const int S = data_.S;

  std::vector<int> gsum(static_cast<std::size_t>(S) * p, 0);
  std::vector<int> ns(S, 0);
  for (int i = 0; i < n; ++i) {
    const int s = data_.subpop[i] - 1;
    ++ns[s];
    const std::size_t row = static_cast<std::size_t>(i) * p;
    for (int j = 0; j < p; ++j) gsum[static_cast<std::size_t>(s) * p + j] += state_.G[row + j];
  }
  for (int s = 0; s < S; ++s) {
    for (int j = 0; j < p; ++j) {
      const int g = gsum[static_cast<std::size_t>(s) * p + j];
      state_.nu[static_cast<std::size_t>(s) * p + j] =
          sample_beta(1.0 + g, state_.beta[s] + (ns[s] - g), rng);
    }
  }
  for (int s = 0; s < S; ++s) {
    double rate = hyper_.b_beta;
    for (int j = 0; j < p; ++j) {
      const double nu_sj =
          std::min(state_.nu[static_cast<std::size_t>(s) * p + j], 1.0 - 1e-12);
      rate -= std::log1p(-nu_sj);
    }
    state_.beta[s] = sample_gamma(hyper_.a_beta + p, rate, rng);
  }
}

void GibbsSampler::update_probit_z(RngStream& rng) {
  const int S = data_.S;
  for (int i = 0; i < data_.n; ++i) {
    const double mu =
        state_.probit.xi[data_.subpop[i] - 1] + state_.probit.xi[S + state_.C[i] - 1];
    try {
      state_.probit.z[i] = sample_truncnorm(
          mu, 1.0, outcome_interval(state_.probit.delta, data_.y[i], M_), rng);
    } catch (const NumericError& e) {
      throw NumericError("draw_z: subject " + std::to_string(i + 1) + ": " + e.what());
    }
  }
}

void GibbsSampler::update_probit_xi(RngStream& rng) {
  const int n = data_.n;
  const int S = data_.S;
  const int K = state_.K;
  const int q = S + K;

  // W'W assembled from the one-hot structure: subpop/cluster counts and
  // their cross tabulation.
  std::vector<int> ncl(K, 0);
  std::vector<int> nsub(S, 0);
  std::vector<int> cross(static_cast<std::size_t>(S) * K, 0);
  std::vector<double> rhs(q, hyper_.mu0 / hyper_.sigma0);
  for (int i = 0; i < n; ++i) {
    const int s = data_.subpop[i] - 1;
    const int k = state_.C[i] - 1;
    ++nsub[s];
    ++ncl[k];
    ++cross[static_cast<std::size_t>(s) * K + k];
    rhs[s] += state_.probit.z[i];
    rhs[S + k] += state_.probit.z[i];
  }
  Matrix prec(q, q);
  const double prior_prec = 1.0 / hyper_.sigma0;
  for (int s = 0; s < S; ++s) prec(s, s) = nsub[s] + prior_prec;
  for (int k = 0; k < K; ++k) prec(S + k, S + k) = ncl[k] + prior_prec;
  for (int s = 0; s < S; ++s) {
    for (int k = 0; k < K; ++k) {
      prec(s, S + k) = prec(S + k, s) = cross[static_cast<std::size_t>(s) * K + k];
    }
  }
  const Matrix Lp = cholesky(prec);
  const std::vector<double> mean = chol_solve(Lp, rhs);
  state_.probit.xi = sample_mvn_from_precision_chol(mean, Lp, rng);
}

void GibbsSampler::update_probit_delta(RngStream& rng) {
  update_delta(state_.probit, data_.y, rng);
}

void GibbsSampler::apply_random_permutation(RngStream& rng, bool include_local) {
  const int K = state_.K;
  if (K > 1) {
    std::vector<int> sigma(K);
    for (int k = 0; k < K; ++k) sigma[k] = k;
    for (int k = K - 1; k >= 1; --k) {
      std::swap(sigma[k], sigma[rng.below(static_cast<std::uint64_t>(k) + 1)]);
    }
    for (int i = 0; i < data_.n; ++i) state_.C[i] = sigma[state_.C[i] - 1] + 1;
    std::vector<double> pi_new(K);
    std::vector<double> theta0_new(state_.theta0.size());
    for (int k = 0; k < K; ++k) {
      pi_new[sigma[k]] = state_.pi[k];
      std::copy(state_.theta0.begin() + static_cast<std::size_t>(k) * state_.D,
                state_.theta0.begin() + static_cast<std::size_t>(k + 1) * state_.D,
                theta0_new.begin() + static_cast<std::size_t>(sigma[k]) * state_.D);
    }
    state_.pi = std::move(pi_new);
    state_.theta0 = std::move(theta0_new);
    std::vector<double> xi_new(state_.probit.xi);
    for (int k = 0; k < K; ++k) xi_new[data_.S + sigma[k]] = state_.probit.xi[data_.S + k];
    state_.probit.xi = std::move(xi_new);
  }

  if (!include_local) return;
  const int p = data_.p;
  for (int s = 0; s < data_.S; ++s) {
    const int ks = state_.Ks[s];
    if (ks <= 1) continue;
    std::vector<int> sigma(ks);
    for (int l = 0; l < ks; ++l) sigma[l] = l;
    for (int l = ks - 1; l >= 1; --l) {
      std::swap(sigma[l], sigma[rng.below(static_cast<std::uint64_t>(l) + 1)]);
    }
    for (int i = 0; i < data_.n; ++i) {
      if (data_.subpop[i] - 1 != s) continue;
      const std::size_t row = static_cast<std::size_t>(i) * p;
      for (int j = 0; j < p; ++j) {
        state_.L[row + j] = static_cast<std::uint16_t>(sigma[state_.L[row + j] - 1] + 1);
      }
    }
    std::vector<double> lam_new(ks);
    std::vector<double> th_new(state_.theta1[s].size());
    for (int l = 0; l < ks; ++l) {
      lam_new[sigma[l]] = state_.lambda[s][l];
      std::copy(state_.theta1[s].begin() + static_cast<std::size_t>(l) * state_.D,
                state_.theta1[s].begin() + static_cast<std::size_t>(l + 1) * state_.D,
                th_new.begin() + static_cast<std::size_t>(sigma[l]) * state_.D);
    }
    state_.lambda[s] = std::move(lam_new);
    state_.theta1[s] = std::move(th_new);
  }
}

void GibbsSampler::sweep(int iter, int phase) {
  const bool lcm = cfg_.mode == Mode::osLCM;
  if (!lcm) {
    RngStream r = stream(phase, iter, step::kG);
    update_G(r);
  }
  {
    RngStream r = stream(phase, iter, step::kC);
    update_C(r);
  }
  if (!lcm) {
    RngStream r = stream(phase, iter, step::kL);
    update_L(r);
  }
  {
    RngStream r = stream(phase, iter, step::kPi);
    update_pi(r);
  }
  if (!lcm) {
    RngStream r = stream(phase, iter, step::kLambda);
    update_lambda(r);
  }
  {
    RngStream r = stream(phase, iter, step::kTheta);
    update_theta(r);
  }
  if (!lcm) {
    RngStream r = stream(phase, iter, step::kNuBeta);
    update_nu_beta(r);
    if (cfg_.pin_nu_at_one) {
      std::fill(state_.nu.begin(), state_.nu.end(), 1.0);
    }
  }
  {
    RngStream r = stream(phase, iter, step::kZ);
    update_probit_z(r);
  }
  {
    RngStream r = stream(phase, iter, step::kXi);
    update_probit_xi(r);
  }
  {
    RngStream r = stream(phase, iter, step::kDelta);
    update_probit_delta(r);
  }
  if (cfg_.permute_every > 0 && iter % cfg_.permute_every == 0) {
    RngStream r = stream(phase, iter, step::kPermute);
    apply_random_permutation(r, /*include_local=*/phase == 0 && !lcm);
  }
}

std::vector<double> GibbsSampler::assignment_probs(int subject) const {
  const int S = data_.S;
  const int K = state_.K;
  const int p = data_.p;
  const int i = subject;
  const int s = data_.subpop[i] - 1;
  std::vector<double> lp(K);
  for (int k = 0; k < K; ++k) {
    const double mu = state_.probit.xi[s] + state_.probit.xi[S + k];
    lp[k] = std::log(std::max(state_.pi[k], 1e-300)) +
            outcome_category_logprob(state_.probit.delta, state_.probit.s0, mu,
                                     data_.y[i], M_);
    const std::size_t row = static_cast<std::size_t>(i) * p;
    for (int j = 0; j < p; ++j) {
      if (!state_.G[row + j]) continue;
      lp[k] += std::log(std::max(state_.theta0_at(k + 1, j, data_.level(i, j)), 1e-300));
    }
  }
  double mx = lp[0];
  for (int k = 1; k < K; ++k) mx = std::max(mx, lp[k]);
  double total = 0.0;
  for (int k = 0; k < K; ++k) {
    lp[k] = std::exp(lp[k] - mx);
    total += lp[k];
  }
  for (int k = 0; k < K; ++k) lp[k] /= total;
  return lp;
}

TraceDraw GibbsSampler::snapshot(int iter) const {
  const int n = data_.n;
  const int p = data_.p;
  const int K = state_.K;
  const bool lcm = cfg_.mode == Mode::osLCM;

  TraceDraw dr;
  dr.iter = iter;
  dr.loglik = joint_loglik(state_, data_);
  dr.pi = state_.pi;
  dr.theta0 = state_.theta0;
  dr.nu = state_.nu;
  dr.beta = state_.beta;
  dr.xi = state_.probit.xi;
  dr.delta = state_.probit.delta;
  if (!lcm) {
    for (const auto& l : state_.lambda) {
      dr.lambda.insert(dr.lambda.end(), l.begin(), l.end());
    }
    for (const auto& t : state_.theta1) {
      dr.theta1.insert(dr.theta1.end(), t.begin(), t.end());
    }
    dr.L.resize(state_.L.size());
    for (std::size_t idx = 0; idx < state_.L.size(); ++idx) {
      dr.L[idx] = static_cast<std::uint8_t>(state_.L[idx]);
    }
  }
  dr.C.resize(n);
  for (int i = 0; i < n; ++i) dr.C[i] = static_cast<std::uint16_t>(state_.C[i]);
  dr.Gbits.assign((static_cast<std::size_t>(n) * p + 7) / 8, 0);
  for (std::size_t idx = 0; idx < state_.G.size(); ++idx) {
    if (state_.G[idx]) dr.Gbits[idx >> 3] |= static_cast<std::uint8_t>(1u << (idx & 7));
  }
  dr.cprob.resize(static_cast<std::size_t>(n) * K);
  for (int i = 0; i < n; ++i) {
    const std::vector<double> probs = assignment_probs(i);
    for (int k = 0; k < K; ++k) {
      dr.cprob[static_cast<std::size_t>(i) * K + k] = static_cast<float>(probs[k]);
    }
  }
  return dr;
}

int GibbsSampler::count_nonempty(double threshold) const {
  std::vector<int> cnt(state_.K, 0);
  for (int i = 0; i < data_.n; ++i) ++cnt[state_.C[i] - 1];
  int nz = 0;
  for (int k = 0; k < state_.K; ++k) {
    if (cnt[k] >= threshold * data_.n) ++nz;
  }
  return nz;
}

void GibbsSampler::accumulate_occupancy(OccupancyAccumulator& acc) const {
  const int n = data_.n;
  const int p = data_.p;
  const int S = data_.S;

  std::vector<double> frac(state_.K, 0.0);
  for (int i = 0; i < n; ++i) frac[state_.C[i] - 1] += 1.0;
  for (double& f : frac) f /= n;
  std::sort(frac.begin(), frac.end(), std::greater<double>());
  if (acc.global_sorted_sum.empty()) acc.global_sorted_sum.assign(state_.K, 0.0);
  for (int k = 0; k < state_.K; ++k) acc.global_sorted_sum[k] += frac[k];

  if (cfg_.mode == Mode::osRPC) {
    if (acc.local_sorted_sum.empty()) {
      acc.local_sorted_sum.resize(S);
      for (int s = 0; s < S; ++s) acc.local_sorted_sum[s].assign(state_.Ks[s], 0.0);
    }
    for (int s = 0; s < S; ++s) {
      std::vector<double> cnt(state_.Ks[s], 0.0);
      double base = 0.0;
      for (int i = 0; i < n; ++i) {
        if (data_.subpop[i] - 1 != s) continue;
        const std::size_t row = static_cast<std::size_t>(i) * p;
        for (int j = 0; j < p; ++j) {
          if (state_.G[row + j]) continue;
          cnt[state_.L[row + j] - 1] += 1.0;
          base += 1.0;
        }
      }
      if (base > 0.0) {
        for (double& c : cnt) c /= base;
      } else {
        std::fill(cnt.begin(), cnt.end(), 0.0);
      }
      std::sort(cnt.begin(), cnt.end(), std::greater<double>());
      for (int l = 0; l < state_.Ks[s]; ++l) acc.local_sorted_sum[s][l] += cnt[l];
    }
  }
  ++acc.iters;
}

AdaptiveResult GibbsSampler::finish_adaptive(const OccupancyAccumulator& acc) const {
  AdaptiveResult res;
  res.warm_state = state_;
  const double denom = std::max(acc.iters, 1);
  res.global_occupancy.resize(acc.global_sorted_sum.size());
  for (std::size_t k = 0; k < acc.global_sorted_sum.size(); ++k) {
    res.global_occupancy[k] = acc.global_sorted_sum[k] / denom;
  }
  int K_active = 0;
  for (double f : res.global_occupancy) {
    if (f >= cfg_.nonempty_threshold) ++K_active;
  }
  if (K_active == 0) {
    throw DegenerateFitError(
        "adaptive phase retained no global cluster at occupancy threshold " +
        std::to_string(cfg_.nonempty_threshold));
  }
  res.K_active = K_active;

  res.Ks_active.assign(data_.S, 1);
  if (cfg_.mode == Mode::osRPC && !acc.local_sorted_sum.empty()) {
    res.local_occupancy.resize(data_.S);
    for (int s = 0; s < data_.S; ++s) {
      res.local_occupancy[s].resize(acc.local_sorted_sum[s].size());
      int ks_active = 0;
      for (std::size_t l = 0; l < acc.local_sorted_sum[s].size(); ++l) {
        res.local_occupancy[s][l] = acc.local_sorted_sum[s][l] / denom;
        if (res.local_occupancy[s][l] >= cfg_.nonempty_threshold) ++ks_active;
      }
      res.Ks_active[s] = std::max(1, ks_active);
    }
  }
  return res;
}

FitCheckpoint GibbsSampler::make_checkpoint(int phase, int iter,
                                            const OccupancyAccumulator* acc,
                                            const ChainTrace* partial) const {
  FitCheckpoint ck;
  ck.phase = phase;
  ck.iter = iter;
  ck.K = state_.K;
  ck.Ks = state_.Ks;
  ck.state = state_;
  if (acc) ck.acc = *acc;
  if (partial) ck.partial = *partial;
  return ck;
}

AdaptiveResult GibbsSampler::adaptive_loop(int start_iter, OccupancyAccumulator acc,
                                           const RunHooks* hooks) {
  stopped_ = false;
  for (int iter = start_iter; iter <= cfg_.adaptive_iters; ++iter) {
    sweep(iter, 0);
    if (iter > cfg_.adaptive_burnin) accumulate_occupancy(acc);
    if (hooks) {
      if (hooks->log_every > 0 && hooks->on_log && iter % hooks->log_every == 0) {
        hooks->on_log(iter, loglik(), count_nonempty(cfg_.nonempty_threshold));
      }
      const bool stop = hooks->stop_after && hooks->stop_after(iter);
      if (hooks->on_checkpoint &&
          (stop || (hooks->checkpoint_every > 0 && iter % hooks->checkpoint_every == 0))) {
        hooks->on_checkpoint(make_checkpoint(0, iter, &acc, nullptr));
      }
      if (stop) {
        stopped_ = true;
        return AdaptiveResult{};
      }
    }
  }
  return finish_adaptive(acc);
}

AdaptiveResult GibbsSampler::run_adaptive(const RunHooks* hooks) {
  init_state(hyper_.K0, std::vector<int>(data_.S, hyper_.Ks), 0);
  return adaptive_loop(1, OccupancyAccumulator{}, hooks);
}

AdaptiveResult GibbsSampler::resume_adaptive(const FitCheckpoint& ck,
                                             const RunHooks* hooks) {
  set_state(ck.state);
  return adaptive_loop(ck.iter + 1, ck.acc, hooks);
}

TraceMeta GibbsSampler::make_meta(int K) const {
  TraceMeta meta;
  meta.n = data_.n;
  meta.p = data_.p;
  meta.S = data_.S;
  meta.K = K;
  meta.M = M_;
  meta.Ks = state_.Ks;
  meta.d = data_.d;
  meta.mode = cfg_.mode;
  meta.seed = cfg_.seed;
  meta.fixed_iters = cfg_.fixed_iters;
  meta.fixed_burnin = cfg_.fixed_burnin;
  meta.thin = cfg_.thin;
  for (int s = 1; s <= data_.S; ++s) {
    meta.column_labels.push_back("subpop" + std::to_string(s));
  }
  for (int k = 1; k <= K; ++k) {
    meta.column_labels.push_back("cluster" + std::to_string(k));
  }
  return meta;
}

ChainTrace GibbsSampler::fixed_loop(int start_iter, ChainTrace trace,
                                    const RunHooks* hooks) {
  stopped_ = false;
  for (int iter = start_iter; iter <= cfg_.fixed_iters; ++iter) {
    sweep(iter, 1);
    if (iter > cfg_.fixed_burnin && (iter - cfg_.fixed_burnin) % cfg_.thin == 0) {
      trace.draws.push_back(snapshot(iter));
    }
    if (hooks) {
      if (hooks->log_every > 0 && hooks->on_log && iter % hooks->log_every == 0) {
        hooks->on_log(iter, loglik(), count_nonempty(cfg_.nonempty_threshold));
      }
      const bool stop = hooks->stop_after && hooks->stop_after(iter);
      if (hooks->on_checkpoint &&
          (stop || (hooks->checkpoint_every > 0 && iter % hooks->checkpoint_every == 0))) {
        hooks->on_checkpoint(make_checkpoint(1, iter, nullptr, &trace));
      }
      if (stop) {
        stopped_ = true;
        return trace;
      }
    }
  }
  return trace;
}

ChainTrace GibbsSampler::run_fixed(int K, std::vector<int> Ks, const RunHooks* hooks) {
  init_state(K, std::move(Ks), 1);
  ChainTrace trace;
  trace.meta = make_meta(K);
  return fixed_loop(1, std::move(trace), hooks);
}

ChainTrace GibbsSampler::resume_fixed(const FitCheckpoint& ck, const RunHooks* hooks) {
  set_state(ck.state);
  ChainTrace trace = ck.partial;
  if (trace.meta.n == 0) trace.meta = make_meta(ck.K);
  return fixed_loop(ck.iter + 1, std::move(trace), hooks);
}

}  // namespace osrpc
