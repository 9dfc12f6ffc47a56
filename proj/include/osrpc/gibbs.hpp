#pragma once

#include <functional>
#include <vector>

#include "osrpc/dataset.hpp"
#include "osrpc/model.hpp"
#include "osrpc/rng.hpp"
#include "osrpc/trace.hpp"

namespace osrpc {

struct AdaptiveResult {
  int K_active = 0;
  std::vector<int> Ks_active;
  ModelState warm_state;
  // Post-burn-in averages of the sorted occupancy fractions (rank 1 first);
  // permutation-proof, so the random permutation sampler cannot smear them.
  std::vector<double> global_occupancy;
  std::vector<std::vector<double>> local_occupancy;
};

struct RunHooks {
  int log_every = 0;
  std::function<void(int iter, double loglik, int nonempty)> on_log;
  int checkpoint_every = 0;
  std::function<void(const FitCheckpoint&)> on_checkpoint;
  // Returning true stops after the current iteration (a checkpoint is
  // emitted first); used by `fit --stop-after`.
  std::function<bool(int iter)> stop_after;
};

// One MCMC chain over an immutable dataset. All randomness is derived from
// (seed, phase, iteration, step), so skipped steps never shift other steps'
// draws and a resume reproduces the uninterrupted run exactly.
class GibbsSampler {
 public:
  GibbsSampler(const CategoricalDataset& data, const Hyperparameters& hyper,
               const SamplerConfig& cfg);

  // Draws every block from its prior at the given sizes.
  void init_state(int K, std::vector<int> Ks, int phase);
  void set_state(const ModelState& st);

  // One full scan in the listed step order; osLCM pins G at 1 and skips the
  // local-side updates.
  void sweep(int iter, int phase);

  AdaptiveResult run_adaptive(const RunHooks* hooks = nullptr);
  AdaptiveResult resume_adaptive(const FitCheckpoint& ck,
                                 const RunHooks* hooks = nullptr);
  ChainTrace run_fixed(int K, std::vector<int> Ks,
                       const RunHooks* hooks = nullptr);
  ChainTrace resume_fixed(const FitCheckpoint& ck,
                          const RunHooks* hooks = nullptr);

  ModelState& state() { return state_; }
  const ModelState& state() const { return state_; }
  const CategoricalDataset& data() const { return data_; }
  const Hyperparameters& hyper() const { return hyper_; }
  const SamplerConfig& config() const { return cfg_; }
  int M() const { return M_; }
  bool stopped() const { return stopped_; }

  double loglik() const { return joint_loglik(state_, data_); }

  // Individual Gibbs steps, exposed for the conjugacy and property suites.
  void update_G(RngStream& rng);
  void update_C(RngStream& rng);
  void update_L(RngStream& rng);
  void update_pi(RngStream& rng);
  void update_lambda(RngStream& rng);
  void update_theta(RngStream& rng);
  void update_nu_beta(RngStream& rng);
  void update_probit_z(RngStream& rng);
  void update_probit_xi(RngStream& rng);
  void update_probit_delta(RngStream& rng);
  void apply_random_permutation(RngStream& rng, bool include_local);

  // Normalized global-assignment probabilities for one subject at the
  // current state (the step-2 multinomial probabilities).
  std::vector<double> assignment_probs(int subject) const;

  // Stream for a (phase, iteration, step) slot; step tags are stable.
  RngStream stream(int phase, int iter, int step) const;

  TraceDraw snapshot(int iter) const;

 private:
  int count_nonempty(double threshold) const;
  void accumulate_occupancy(OccupancyAccumulator& acc) const;
  AdaptiveResult finish_adaptive(const OccupancyAccumulator& acc) const;
  AdaptiveResult adaptive_loop(int start_iter, OccupancyAccumulator acc,
                               const RunHooks* hooks);
  ChainTrace fixed_loop(int start_iter, ChainTrace trace,
                        const RunHooks* hooks);
  FitCheckpoint make_checkpoint(int phase, int iter,
                                const OccupancyAccumulator* acc,
                                const ChainTrace* partial) const;
  TraceMeta make_meta(int K) const;

  const CategoricalDataset& data_;
  Hyperparameters hyper_;
  SamplerConfig cfg_;
  int M_ = 0;
  ModelState state_;
  bool stopped_ = false;

  // per-sweep scratch
  std::vector<double> logpi_;
  std::vector<double> logt0_t_;               // [cell][k]
  std::vector<std::vector<double>> lint1_t_;  // [s][cell][l]
  std::vector<double> outcome_logtab_;        // [s][k][m]
  std::vector<double> acc_;
  std::vector<int> cnt0_;
  std::vector<std::vector<int>> cnt1_;
};

}  // namespace osrpc
