#include "osrpc/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "osrpc/errors.hpp"
#include "osrpc/model.hpp"
#include "osrpc/special.hpp"

namespace osrpc {

using nlohmann::json;

SimilarityMatrix build_similarity(const ChainTrace& trace) {
  if (trace.draws.empty()) {
    throw InvalidParameterError("build_similarity: empty trace");
  }
  const int n = trace.meta.n;
  const int T = static_cast<int>(trace.draws.size());

  std::vector<std::uint16_t> cnt(static_cast<std::size_t>(n) * n, 0);
  std::vector<std::vector<int>> members(trace.meta.K + 1);
  for (const auto& dr : trace.draws) {
    for (auto& m : members) m.clear();
    for (int i = 0; i < n; ++i) members[dr.C[i]].push_back(i);
    for (const auto& grp : members) {
      for (std::size_t a = 0; a < grp.size(); ++a) {
        const std::size_t row = static_cast<std::size_t>(grp[a]) * n;
        for (std::size_t b = a + 1; b < grp.size(); ++b) ++cnt[row + grp[b]];
      }
    }
  }

  SimilarityMatrix sim;
  sim.n = n;
  sim.m.assign(static_cast<std::size_t>(n) * n, 0.0f);
  for (int i = 0; i < n; ++i) {
    sim.m[static_cast<std::size_t>(i) * n + i] = 1.0f;
    for (int j = i + 1; j < n; ++j) {
      const float v = static_cast<float>(cnt[static_cast<std::size_t>(i) * n + j]) / T;
      sim.m[static_cast<std::size_t>(i) * n + j] = v;
      sim.m[static_cast<std::size_t>(j) * n + i] = v;
    }
  }
  return sim;
}

namespace {

struct MergeRecord {
  int a = 0, b = 0;
  float height = 0.0f;
};

int uf_find(std::vector<int>& parent, int x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

}  // namespace

std::vector<int> complete_linkage_cut(const SimilarityMatrix& sim, int K) {
  const int n = sim.n;
  if (K < 1) throw InvalidParameterError("complete_linkage_cut: K must be >= 1");
  K = std::min(K, n);

  // Mutable distance matrix; merged clusters overwrite one slot via the
  // complete-linkage (max) Lance-Williams update.
  std::vector<float> D(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      D[static_cast<std::size_t>(i) * n + j] = (i == j) ? 0.0f : 1.0f - sim.at(i, j);
    }
  }
  std::vector<char> active(n, 1);
  std::vector<MergeRecord> merges;
  merges.reserve(n - 1);
  std::vector<int> chain;
  chain.reserve(n);

  int remaining = n;
  while (remaining > 1) {
    if (chain.empty()) {
      for (int i = 0; i < n; ++i) {
        if (active[i]) {
          chain.push_back(i);
          break;
        }
      }
    }
    for (;;) {
      const int a = chain.back();
      int nn = -1;
      float best = std::numeric_limits<float>::max();
      const std::size_t row = static_cast<std::size_t>(a) * n;
      // prefer the chain predecessor on ties so mutual-NN pairs terminate
      const int prev = chain.size() >= 2 ? chain[chain.size() - 2] : -1;
      for (int b = 0; b < n; ++b) {
        if (!active[b] || b == a) continue;
        const float d = D[row + b];
        if (d < best || (d == best && b == prev)) {
          best = d;
          nn = b;
        }
      }
      if (nn == prev && prev >= 0) {
        chain.pop_back();
        chain.pop_back();
        merges.push_back({a, prev, best});
        // merge into the smaller index slot
        const int keep = std::min(a, prev);
        const int drop = std::max(a, prev);
        const std::size_t rk = static_cast<std::size_t>(keep) * n;
        const std::size_t rd = static_cast<std::size_t>(drop) * n;
        for (int c = 0; c < n; ++c) {
          if (!active[c] || c == keep || c == drop) continue;
          const float d = std::max(D[rk + c], D[rd + c]);
          D[rk + c] = d;
          D[static_cast<std::size_t>(c) * n + keep] = d;
        }
        active[drop] = 0;
        --remaining;
        break;
      }
      chain.push_back(nn);
    }
  }

  // Cut: apply the n-K lowest merges (complete linkage is monotone, so this
  // equals cutting the dendrogram into K groups).
  std::vector<int> order(merges.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return merges[x].height < merges[y].height;
  });
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  for (int t = 0; t < n - K; ++t) {
    const MergeRecord& mr = merges[order[t]];
    parent[uf_find(parent, mr.a)] = uf_find(parent, mr.b);
  }

  // Label groups 1..K by decreasing size (ties by smallest member).
  std::vector<int> root(n);
  std::vector<int> size_of(n, 0);
  for (int i = 0; i < n; ++i) {
    root[i] = uf_find(parent, i);
    ++size_of[root[i]];
  }
  std::vector<int> roots;
  for (int i = 0; i < n; ++i) {
    if (root[i] == i && size_of[i] > 0) roots.push_back(i);
  }
  std::sort(roots.begin(), roots.end(), [&](int x, int y) {
    if (size_of[x] != size_of[y]) return size_of[x] > size_of[y];
    return x < y;
  });
  std::vector<int> label_of(n, 0);
  for (std::size_t t = 0; t < roots.size(); ++t) label_of[roots[t]] = static_cast<int>(t) + 1;
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = label_of[root[i]];
  return labels;
}

namespace {

// Permutation of 1..K maximizing sum_b A[sigma(b)][b]; exhaustive for K <= 6.
std::vector<int> best_label_map(const std::vector<int>& A, int K) {
  std::vector<int> sigma(K);
  std::iota(sigma.begin(), sigma.end(), 0);
  if (K <= 6) {
    std::vector<int> perm(sigma);
    std::vector<int> best(sigma);
    long best_score = -1;
    do {
      long score = 0;
      for (int b = 0; b < K; ++b) score += A[static_cast<std::size_t>(perm[b]) * K + b];
      if (score > best_score) {
        best_score = score;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
  }
  // greedy agreement maximization
  std::vector<char> used_a(K, 0), used_b(K, 0);
  std::vector<int> out(K, -1);
  for (int t = 0; t < K; ++t) {
    int best_a = -1, best_b = -1;
    long best_v = -1;
    for (int a = 0; a < K; ++a) {
      if (used_a[a]) continue;
      for (int b = 0; b < K; ++b) {
        if (used_b[b]) continue;
        const long v = A[static_cast<std::size_t>(a) * K + b];
        if (v > best_v) {
          best_v = v;
          best_a = a;
          best_b = b;
        }
      }
    }
    used_a[best_a] = 1;
    used_b[best_b] = 1;
    out[best_b] = best_a;
  }
  return out;
}

void permute_draw(TraceDraw& dr, const std::vector<int>& sigma, int S, int K, int D) {
  for (auto& c : dr.C) c = static_cast<std::uint16_t>(sigma[c - 1] + 1);
  std::vector<double> pi_new(K);
  for (int k = 0; k < K; ++k) pi_new[sigma[k]] = dr.pi[k];
  dr.pi = std::move(pi_new);
  std::vector<double> th_new(dr.theta0.size());
  for (int k = 0; k < K; ++k) {
    std::copy(dr.theta0.begin() + static_cast<std::size_t>(k) * D,
              dr.theta0.begin() + static_cast<std::size_t>(k + 1) * D,
              th_new.begin() + static_cast<std::size_t>(sigma[k]) * D);
  }
  dr.theta0 = std::move(th_new);
  std::vector<double> xi_new(dr.xi);
  for (int k = 0; k < K; ++k) xi_new[S + sigma[k]] = dr.xi[S + k];
  dr.xi = std::move(xi_new);
  const int n = static_cast<int>(dr.C.size());
  std::vector<float> cp(static_cast<std::size_t>(n) * K);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < K; ++k) {
      cp[static_cast<std::size_t>(i) * K + sigma[k]] =
          dr.cprob[static_cast<std::size_t>(i) * K + k];
    }
  }
  dr.cprob = std::move(cp);
}

bool is_identity(const std::vector<int>& sigma) {
  for (std::size_t k = 0; k < sigma.size(); ++k) {
    if (sigma[k] != static_cast<int>(k)) return false;
  }
  return true;
}

}  // namespace

void relabel_trace(ChainTrace& trace, const SimilarityMatrix& sim, int K_active) {
  if (K_active < 1) throw InvalidParameterError("relabel_trace: K_active must be >= 1");
  const int K = trace.meta.K;
  if (K_active != K) {
    throw InvalidParameterError("relabel_trace: K_active (" + std::to_string(K_active) +
                                ") must match the trace's cluster count (" +
                                std::to_string(K) + ")");
  }
  if (K == 1) return;
  const int n = trace.meta.n;
  const int D = trace.meta.D();
  const std::vector<int> ref = complete_linkage_cut(sim, K_active);

  std::vector<int> A(static_cast<std::size_t>(K) * K);
  for (auto& dr : trace.draws) {
    std::fill(A.begin(), A.end(), 0);
    for (int i = 0; i < n; ++i) {
      ++A[static_cast<std::size_t>(ref[i] - 1) * K + (dr.C[i] - 1)];
    }
    const std::vector<int> sigma = best_label_map(A, K);
    if (!is_identity(sigma)) permute_draw(dr, sigma, trace.meta.S, K, D);
  }
}

namespace {

double median_of(std::vector<double>& buf) {
  const std::size_t n = buf.size();
  const std::size_t mid = n / 2;
  std::nth_element(buf.begin(), buf.begin() + mid, buf.end());
  double hi = buf[mid];
  if (n % 2 == 1) return hi;
  std::nth_element(buf.begin(), buf.begin() + mid - 1, buf.begin() + mid);
  return 0.5 * (buf[mid - 1] + hi);
}

// Elementwise median over draws of a flattened block.
template <typename Get>
std::vector<double> block_median(const ChainTrace& trace, std::size_t len, Get get) {
  std::vector<double> out(len);
  std::vector<double> buf(trace.draws.size());
  for (std::size_t idx = 0; idx < len; ++idx) {
    for (std::size_t t = 0; t < trace.draws.size(); ++t) buf[t] = get(trace.draws[t], idx);
    out[idx] = median_of(buf);
  }
  return out;
}

void renormalize(std::vector<double>& v, std::size_t begin, std::size_t len) {
  double sum = 0.0;
  for (std::size_t r = 0; r < len; ++r) sum += v[begin + r];
  if (sum <= 0.0) {
    for (std::size_t r = 0; r < len; ++r) v[begin + r] = 1.0 / len;
    return;
  }
  for (std::size_t r = 0; r < len; ++r) v[begin + r] /= sum;
}

// Rebuilds a full model state from posterior medians (plug-in for DIC).
ModelState plugin_state(const ChainTrace& trace, const PosteriorSummary& sm) {
  const TraceMeta& meta = trace.meta;
  ModelState st;
  st.K = meta.K;
  st.Ks = meta.Ks;
  st.cell_offset = meta.cell_offsets();
  st.D = meta.D();
  st.pi = sm.pi_med;
  st.theta0 = sm.theta0_med;
  st.nu = sm.nu_med;
  st.beta.assign(meta.S, 1.0);
  st.probit.xi = sm.xi_med;
  st.probit.delta = sm.delta_med;
  st.probit.s0 = 1.0;
  st.C.assign(meta.n, 1);
  st.L.assign(static_cast<std::size_t>(meta.n) * meta.p, 1);

  st.lambda.resize(meta.S);
  st.theta1.resize(meta.S);
  if (meta.mode == Mode::osRPC) {
    std::size_t lam_off = 0, th_off = 0;
    for (int s = 0; s < meta.S; ++s) {
      st.lambda[s].assign(sm.lambda_med.begin() + lam_off,
                          sm.lambda_med.begin() + lam_off + meta.Ks[s]);
      lam_off += meta.Ks[s];
      const std::size_t tlen = static_cast<std::size_t>(meta.Ks[s]) * st.D;
      st.theta1[s].assign(sm.theta1_med.begin() + th_off,
                          sm.theta1_med.begin() + th_off + tlen);
      th_off += tlen;
    }
  } else {
    for (int s = 0; s < meta.S; ++s) {
      st.lambda[s] = {1.0};
      st.theta1[s].assign(st.D, 0.0);
      for (int j = 0; j < meta.p; ++j) {
        for (int r = 0; r < meta.d[j]; ++r) {
          st.theta1[s][st.cell_offset[j] + r] = 1.0 / meta.d[j];
        }
      }
    }
  }

  // majority-vote G
  st.G.assign(static_cast<std::size_t>(meta.n) * meta.p, 1);
  if (meta.mode == Mode::osRPC) {
    const int T = static_cast<int>(trace.draws.size());
    std::vector<int> ones(st.G.size(), 0);
    for (const auto& dr : trace.draws) {
      for (std::size_t idx = 0; idx < st.G.size(); ++idx) {
        ones[idx] += (dr.Gbits[idx >> 3] >> (idx & 7)) & 1;
      }
    }
    for (std::size_t idx = 0; idx < st.G.size(); ++idx) {
      st.G[idx] = (2 * ones[idx] >= T) ? 1 : 0;
    }
  }
  return st;
}

CategoricalDataset check_dataset(const ChainTrace& trace, const CategoricalDataset& data) {
  if (data.n != trace.meta.n || data.p != trace.meta.p || data.S != trace.meta.S) {
    throw InvalidParameterError("trace Meta does not match the dataset shape");
  }
  return data;
}

}  // namespace

PosteriorSummary summarize(const ChainTrace& trace, const CategoricalDataset& data,
                           int K_active) {
  if (trace.draws.empty()) throw InvalidParameterError("summarize: empty trace");
  check_dataset(trace, data);
  const TraceMeta& meta = trace.meta;
  const int K = meta.K;
  if (K_active != K) {
    throw InvalidParameterError("summarize: K_active must match the trace");
  }
  const int n = meta.n;
  const int p = meta.p;
  const int S = meta.S;
  const int D = meta.D();
  const std::vector<int> off = meta.cell_offsets();

  PosteriorSummary sm;
  sm.K = K;
  sm.Ks = meta.Ks;
  sm.mode = meta.mode;

  sm.pi_med = block_median(trace, K, [](const TraceDraw& d, std::size_t i) { return d.pi[i]; });
  renormalize(sm.pi_med, 0, K);

  sm.theta0_med = block_median(trace, static_cast<std::size_t>(K) * D,
                               [](const TraceDraw& d, std::size_t i) { return d.theta0[i]; });
  for (int k = 0; k < K; ++k) {
    for (int j = 0; j < p; ++j) {
      renormalize(sm.theta0_med, static_cast<std::size_t>(k) * D + off[j], meta.d[j]);
    }
  }

  sm.nu_med = block_median(trace, static_cast<std::size_t>(S) * p,
                           [](const TraceDraw& d, std::size_t i) { return d.nu[i]; });
  sm.xi_med = block_median(trace, S + K,
                           [](const TraceDraw& d, std::size_t i) { return d.xi[i]; });
  sm.delta_med = block_median(trace, meta.M - 1,
                              [](const TraceDraw& d, std::size_t i) { return d.delta[i]; });
  for (std::size_t m = 1; m < sm.delta_med.size(); ++m) {
    if (!(sm.delta_med[m] > sm.delta_med[m - 1])) {
      sm.delta_med[m] = sm.delta_med[m - 1] + 1e-12;
    }
  }

  if (meta.mode == Mode::osRPC) {
    sm.lambda_med = block_median(trace, meta.lambda_len(),
                                 [](const TraceDraw& d, std::size_t i) { return d.lambda[i]; });
    std::size_t lam_off = 0;
    for (int s = 0; s < S; ++s) {
      renormalize(sm.lambda_med, lam_off, meta.Ks[s]);
      lam_off += meta.Ks[s];
    }
    std::size_t tlen = 0;
    for (int s = 0; s < S; ++s) tlen += static_cast<std::size_t>(meta.Ks[s]) * D;
    sm.theta1_med = block_median(trace, tlen,
                                 [](const TraceDraw& d, std::size_t i) { return d.theta1[i]; });
    std::size_t th_off = 0;
    for (int s = 0; s < S; ++s) {
      for (int l = 0; l < meta.Ks[s]; ++l) {
        for (int j = 0; j < p; ++j) {
          renormalize(sm.theta1_med, th_off + static_cast<std::size_t>(l) * D + off[j],
                      meta.d[j]);
        }
      }
      th_off += static_cast<std::size_t>(meta.Ks[s]) * D;
    }
  }

  // hard assignments: highest posterior median assignment probability
  sm.C_hat.resize(n);
  {
    std::vector<double> buf(trace.draws.size());
    for (int i = 0; i < n; ++i) {
      int best_k = 0;
      double best_v = -1.0;
      for (int k = 0; k < K; ++k) {
        for (std::size_t t = 0; t < trace.draws.size(); ++t) {
          buf[t] = trace.draws[t].cprob[static_cast<std::size_t>(i) * K + k];
        }
        const double v = median_of(buf);
        if (v > best_v) {
          best_v = v;
          best_k = k;
        }
      }
      sm.C_hat[i] = best_k + 1;
    }
  }

  if (meta.mode == Mode::osRPC) {
    // local hard assignments from co-assignment frequencies
    sm.L_hat.assign(static_cast<std::size_t>(n) * p, 1);
    int maxKs = 1;
    for (int s = 0; s < S; ++s) maxKs = std::max(maxKs, meta.Ks[s]);
    if (maxKs > 1) {
      std::vector<std::uint16_t> cnt(static_cast<std::size_t>(n) * p * maxKs, 0);
      for (const auto& dr : trace.draws) {
        for (std::size_t idx = 0; idx < dr.L.size(); ++idx) {
          ++cnt[idx * maxKs + dr.L[idx] - 1];
        }
      }
      for (std::size_t idx = 0; idx < sm.L_hat.size(); ++idx) {
        int best_l = 0;
        int best_c = -1;
        for (int l = 0; l < maxKs; ++l) {
          if (cnt[idx * maxKs + l] > best_c) {
            best_c = cnt[idx * maxKs + l];
            best_l = l;
          }
        }
        sm.L_hat[idx] = static_cast<std::uint16_t>(best_l + 1);
      }
    }
  }

  // modal consumption level per cluster and variable
  sm.modal_patterns.assign(K, std::vector<int>(p, 1));
  for (int k = 0; k < K; ++k) {
    for (int j = 0; j < p; ++j) {
      int best_r = 0;
      double best_v = -1.0;
      for (int r = 0; r < meta.d[j]; ++r) {
        const double v = sm.theta0_med[static_cast<std::size_t>(k) * D + off[j] + r];
        if (v > best_v) {
          best_v = v;
          best_r = r;
        }
      }
      sm.modal_patterns[k][j] = best_r + 1;
    }
  }

  // probit category probabilities per (subpop, cluster)
  sm.outcome_prob.assign(S, std::vector<std::vector<double>>(
                                K, std::vector<double>(meta.M, 0.0)));
  for (int s = 0; s < S; ++s) {
    for (int k = 0; k < K; ++k) {
      const double mu = sm.xi_med[s] + sm.xi_med[S + k];
      double prev = 0.0;
      for (int m = 1; m < meta.M; ++m) {
        const double cdf = normal_cdf(sm.delta_med[m - 1] - mu);
        sm.outcome_prob[s][k][m - 1] = std::max(cdf - prev, 0.0);
        prev = cdf;
      }
      sm.outcome_prob[s][k][meta.M - 1] = std::max(1.0 - prev, 0.0);
    }
  }

  sm.dic_variant = "observed-data deviance, posterior-mean deviance with posterior-median plug-in";
  sm.dic = compute_dic(trace, data);
  return sm;
}

double compute_dic(const ChainTrace& trace, const CategoricalDataset& data) {
  if (trace.draws.empty()) throw InvalidParameterError("compute_dic: empty trace");
  check_dataset(trace, data);
  double mean_ll = 0.0;
  for (const auto& dr : trace.draws) mean_ll += dr.loglik;
  mean_ll /= static_cast<double>(trace.draws.size());

  // plug-in log likelihood at the posterior medians
  PosteriorSummary sm;
  {
    // reuse summarize's median machinery only for the blocks joint_loglik needs
    const TraceMeta& meta = trace.meta;
    const int K = meta.K;
    const int D = meta.D();
    const std::vector<int> off = meta.cell_offsets();
    sm.K = K;
    sm.Ks = meta.Ks;
    sm.mode = meta.mode;
    sm.pi_med = block_median(trace, K, [](const TraceDraw& d, std::size_t i) { return d.pi[i]; });
    renormalize(sm.pi_med, 0, K);
    sm.theta0_med = block_median(trace, static_cast<std::size_t>(K) * D,
                                 [](const TraceDraw& d, std::size_t i) { return d.theta0[i]; });
    for (int k = 0; k < K; ++k) {
      for (int j = 0; j < meta.p; ++j) {
        renormalize(sm.theta0_med, static_cast<std::size_t>(k) * D + off[j], meta.d[j]);
      }
    }
    sm.nu_med = block_median(trace, static_cast<std::size_t>(meta.S) * meta.p,
                             [](const TraceDraw& d, std::size_t i) { return d.nu[i]; });
    sm.xi_med = block_median(trace, meta.S + K,
                             [](const TraceDraw& d, std::size_t i) { return d.xi[i]; });
    sm.delta_med = block_median(trace, meta.M - 1,
                                [](const TraceDraw& d, std::size_t i) { return d.delta[i]; });
    for (std::size_t m = 1; m < sm.delta_med.size(); ++m) {
      if (!(sm.delta_med[m] > sm.delta_med[m - 1])) {
        sm.delta_med[m] = sm.delta_med[m - 1] + 1e-12;
      }
    }
    if (meta.mode == Mode::osRPC) {
      sm.lambda_med = block_median(trace, meta.lambda_len(),
                                   [](const TraceDraw& d, std::size_t i) { return d.lambda[i]; });
      std::size_t lam_off = 0;
      for (int s = 0; s < meta.S; ++s) {
        renormalize(sm.lambda_med, lam_off, meta.Ks[s]);
        lam_off += meta.Ks[s];
      }
      std::size_t tlen = 0;
      for (int s = 0; s < meta.S; ++s) tlen += static_cast<std::size_t>(meta.Ks[s]) * D;
      sm.theta1_med = block_median(trace, tlen,
                                   [](const TraceDraw& d, std::size_t i) { return d.theta1[i]; });
      std::size_t th_off = 0;
      for (int s = 0; s < meta.S; ++s) {
        for (int l = 0; l < meta.Ks[s]; ++l) {
          for (int j = 0; j < meta.p; ++j) {
            renormalize(sm.theta1_med, th_off + static_cast<std::size_t>(l) * D + off[j],
                        meta.d[j]);
          }
        }
        th_off += static_cast<std::size_t>(meta.Ks[s]) * D;
      }
    }
  }
  const ModelState plug = plugin_state(trace, sm);
  const double plug_ll = joint_loglik(plug, data);
  if (!std::isfinite(plug_ll)) {
    throw NumericError("compute_dic: non-finite plug-in likelihood");
  }
  return -4.0 * mean_ll + 2.0 * plug_ll;
}

MetricBundle evaluate(const PosteriorSummary& summary, const SimulationTruth& truth,
                      const ChainTrace& trace, const CategoricalDataset& data) {
  check_dataset(trace, data);
  const int n = data.n;
  const int K = summary.K;
  const int T = static_cast<int>(truth.true_outcome_prob.size());
  const int M = trace.meta.M;
  if (static_cast<int>(truth.true_C.size()) != n) {
    throw InvalidParameterError("evaluate: truth subject count mismatch");
  }
  if (T == 0 || static_cast<int>(truth.true_outcome_prob[0].size()) != data.S ||
      static_cast<int>(truth.true_outcome_prob[0][0].size()) != M) {
    throw InvalidParameterError("evaluate: truth outcome shape mismatch");
  }

  MetricBundle mb;
  mb.k_pred = K;
  mb.dic = summary.dic;

  // best injective map pattern -> cluster (exhaustive for K <= 8)
  std::vector<long> A(static_cast<std::size_t>(T) * K, 0);
  std::vector<long> true_count(T, 0);
  for (int i = 0; i < n; ++i) {
    const int t = truth.true_C[i] - 1;
    ++true_count[t];
    ++A[static_cast<std::size_t>(t) * K + summary.C_hat[i] - 1];
  }
  std::vector<int> assign(T, -1);
  if (K <= 8) {
    std::vector<int> cur(T, -1);
    std::vector<char> used(K, 0);
    long best = -1;
    // depth-first over injective assignments
    std::vector<int> stack{0};
    std::function<void(int, long)> rec = [&](int t, long score) {
      if (t == T) {
        if (score > best) {
          best = score;
          assign = cur;
        }
        return;
      }
      for (int k = 0; k < K; ++k) {
        if (used[k]) continue;
        used[k] = 1;
        cur[t] = k;
        rec(t + 1, score + A[static_cast<std::size_t>(t) * K + k]);
        used[k] = 0;
      }
    };
    if (K >= T) {
      rec(0, 0);
    } else {
      // fewer clusters than patterns: greedy fallback
      assign.assign(T, -1);
    }
  }
  if (assign.empty() || assign[0] < 0) {
    std::vector<char> used(K, 0);
    assign.assign(T, -1);
    for (int step = 0; step < std::min(T, K); ++step) {
      long best_v = -1;
      int bt = -1, bk = -1;
      for (int t = 0; t < T; ++t) {
        if (assign[t] >= 0) continue;
        for (int k = 0; k < K; ++k) {
          if (used[k]) continue;
          if (A[static_cast<std::size_t>(t) * K + k] > best_v) {
            best_v = A[static_cast<std::size_t>(t) * K + k];
            bt = t;
            bk = k;
          }
        }
      }
      assign[bt] = bk;
      used[bk] = 1;
    }
  }

  mb.pattern_classification.resize(T);
  for (int t = 0; t < T; ++t) {
    const long agree = assign[t] >= 0 ? A[static_cast<std::size_t>(t) * K + assign[t]] : 0;
    mb.pattern_classification[t] =
        true_count[t] > 0 ? static_cast<double>(agree) / true_count[t] : 0.0;
  }

  // outcome probability recovery
  double se = 0.0;
  int mismatch = 0;
  for (int i = 0; i < n; ++i) {
    const int s = data.subpop[i] - 1;
    const auto& model_p = summary.outcome_prob[s][summary.C_hat[i] - 1];
    const auto& true_p = truth.true_outcome_prob[truth.true_C[i] - 1][s];
    int model_arg = 0, true_arg = 0;
    for (int m = 0; m < M; ++m) {
      const double diff = model_p[m] - true_p[m];
      se += diff * diff;
      if (model_p[m] > model_p[model_arg]) model_arg = m;
      if (true_p[m] > true_p[true_arg]) true_arg = m;
    }
    if (model_arg != true_arg) ++mismatch;
  }
  mb.p_y_mse = se / (static_cast<double>(n) * M);
  mb.y_ord = static_cast<double>(mismatch) / n;

  if (summary.mode == Mode::osRPC) {
    const int S = data.S;
    const int p = data.p;
    double nse = 0.0;
    for (int s = 0; s < S; ++s) {
      for (int j = 0; j < p; ++j) {
        const double diff =
            summary.nu_med[static_cast<std::size_t>(s) * p + j] - truth.nu_truth(s, j);
        nse += diff * diff;
      }
    }
    mb.nu_mse = nse / (static_cast<double>(S) * p);
  }
  return mb;
}

// --- exports -------------------------------------------------------------

void write_summary_json(const PosteriorSummary& summary, const TraceMeta& meta,
                        const std::string& path) {
  json j;
  j["mode"] = to_string(summary.mode);
  j["K"] = summary.K;
  j["Ks"] = summary.Ks;
  j["pi"] = summary.pi_med;
  j["theta0"] = summary.theta0_med;
  if (summary.mode == Mode::osRPC) {
    j["theta1"] = summary.theta1_med;
    j["lambda"] = summary.lambda_med;
    j["L_hat"] = summary.L_hat;
  }
  j["nu"] = summary.nu_med;
  j["xi"] = summary.xi_med;
  j["delta"] = summary.delta_med;
  j["C_hat"] = summary.C_hat;
  j["modal_patterns"] = summary.modal_patterns;
  j["dic"] = summary.dic;
  j["dic_variant"] = summary.dic_variant;
  j["outcome_prob"] = summary.outcome_prob;
  j["column_labels"] = meta.column_labels;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

void write_modal_csv(const PosteriorSummary& summary, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << "variable";
  for (int k = 1; k <= summary.K; ++k) out << ",cluster" << k;
  out << "\n";
  const int p = summary.modal_patterns.empty() ? 0
                : static_cast<int>(summary.modal_patterns[0].size());
  for (int j = 0; j < p; ++j) {
    out << "v" << (j + 1);
    for (int k = 0; k < summary.K; ++k) out << ',' << summary.modal_patterns[k][j];
    out << "\n";
  }
}

void write_nu_csv(const PosteriorSummary& summary, const TraceMeta& meta,
                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << "variable";
  for (int s = 1; s <= meta.S; ++s) out << ",subpop" << s;
  out << "\n";
  char buf[64];
  for (int j = 0; j < meta.p; ++j) {
    out << "v" << (j + 1);
    for (int s = 0; s < meta.S; ++s) {
      std::snprintf(buf, sizeof(buf), "%.10g",
                    summary.nu_med[static_cast<std::size_t>(s) * meta.p + j]);
      out << ',' << buf;
    }
    out << "\n";
  }
}

void write_metrics_json(const TaggedMetrics& tagged, const std::string& path) {
  json j;
  j["case"] = tagged.sim_case;
  j["mode"] = tagged.mode;
  j["replicate"] = tagged.replicate;
  j["k_pred"] = tagged.metrics.k_pred;
  j["dic"] = tagged.metrics.dic;
  j["p_y_mse"] = tagged.metrics.p_y_mse;
  j["y_ord"] = tagged.metrics.y_ord;
  j["pattern_classification"] = tagged.metrics.pattern_classification;
  if (tagged.metrics.nu_mse) {
    j["nu_mse"] = *tagged.metrics.nu_mse;
  } else {
    j["nu_mse"] = nullptr;
  }
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

TaggedMetrics read_metrics_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  TaggedMetrics t;
  try {
    t.sim_case = j.at("case").get<std::string>();
    t.mode = j.at("mode").get<std::string>();
    t.replicate = j.at("replicate").get<int>();
    t.metrics.k_pred = j.at("k_pred").get<int>();
    t.metrics.dic = j.at("dic").get<double>();
    t.metrics.p_y_mse = j.at("p_y_mse").get<double>();
    t.metrics.y_ord = j.at("y_ord").get<double>();
    t.metrics.pattern_classification =
        j.at("pattern_classification").get<std::vector<double>>();
    if (!j.at("nu_mse").is_null()) t.metrics.nu_mse = j.at("nu_mse").get<double>();
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return t;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

void write_compare_tables(const std::vector<TaggedMetrics>& all,
                          const std::string& table_path,
                          const std::string& detail_path) {
  if (all.empty()) throw InvalidParameterError("compare: no metric files");
  int T = 0;
  for (const auto& t : all) {
    T = std::max(T, static_cast<int>(t.metrics.pattern_classification.size()));
  }

  // fixed column order matching the report layout
  const std::vector<std::pair<std::string, std::string>> cols = {
      {"oslcm", "A"}, {"osrpc", "A"}, {"oslcm", "B"}, {"osrpc", "B"}};
  std::vector<std::vector<const TaggedMetrics*>> grouped(cols.size());
  for (const auto& t : all) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (t.mode == cols[c].first && t.sim_case == cols[c].second) {
        grouped[c].push_back(&t);
      }
    }
  }

  std::ofstream out(table_path);
  if (!out) throw ParseError("cannot write '" + table_path + "'");
  out << "metric";
  std::vector<std::size_t> used;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (grouped[c].empty()) continue;
    used.push_back(c);
    out << ',' << (cols[c].first == "oslcm" ? "osLCM" : "osRPC") << '-' << cols[c].second;
  }
  out << "\n";

  auto agg = [&](std::size_t c, auto field) {
    double sum = 0.0;
    int cnt = 0;
    for (const TaggedMetrics* t : grouped[c]) {
      sum += field(*t);
      ++cnt;
    }
    return cnt ? sum / cnt : 0.0;
  };

  out << "K_pred";
  for (std::size_t c : used) {
    // modal K over replicates
    std::vector<int> ks;
    for (const TaggedMetrics* t : grouped[c]) ks.push_back(t->metrics.k_pred);
    std::sort(ks.begin(), ks.end());
    int best = ks[0], best_cnt = 0, cur = ks[0], cur_cnt = 0;
    for (int k : ks) {
      if (k == cur) {
        ++cur_cnt;
      } else {
        cur = k;
        cur_cnt = 1;
      }
      if (cur_cnt > best_cnt) {
        best_cnt = cur_cnt;
        best = cur;
      }
    }
    out << ',' << best;
  }
  out << "\n";

  out << "DIC";
  for (std::size_t c : used) out << ',' << fmt(agg(c, [](const TaggedMetrics& t) { return t.metrics.dic; }));
  out << "\n";
  out << "P(Y)_MSE";
  for (std::size_t c : used) out << ',' << fmt(agg(c, [](const TaggedMetrics& t) { return t.metrics.p_y_mse; }));
  out << "\n";
  out << "Y_ord";
  for (std::size_t c : used) out << ',' << fmt(agg(c, [](const TaggedMetrics& t) { return t.metrics.y_ord; }));
  out << "\n";
  for (int t = 0; t < T; ++t) {
    out << "Pattern " << (t + 1) << " Classification";
    for (std::size_t c : used) {
      out << ',' << fmt(agg(c, [t](const TaggedMetrics& tm) {
        return t < static_cast<int>(tm.metrics.pattern_classification.size())
                   ? tm.metrics.pattern_classification[t]
                   : 0.0;
      }));
    }
    out << "\n";
  }
  out << "nu_MSE";
  for (std::size_t c : used) {
    bool has = !grouped[c].empty() && grouped[c][0]->metrics.nu_mse.has_value();
    if (!has) {
      out << ",-";
    } else {
      out << ',' << fmt(agg(c, [](const TaggedMetrics& t) { return t.metrics.nu_mse.value_or(0.0); }));
    }
  }
  out << "\n";

  std::ofstream det(detail_path);
  if (!det) throw ParseError("cannot write '" + detail_path + "'");
  det << "case,mode,replicate,k_pred,dic,p_y_mse,y_ord";
  for (int t = 1; t <= T; ++t) det << ",class" << t;
  det << ",nu_mse\n";
  for (const auto& t : all) {
    det << t.sim_case << ',' << t.mode << ',' << t.replicate << ',' << t.metrics.k_pred
        << ',' << fmt(t.metrics.dic) << ',' << fmt(t.metrics.p_y_mse) << ','
        << fmt(t.metrics.y_ord);
    for (int c = 0; c < T; ++c) {
      det << ',' << (c < static_cast<int>(t.metrics.pattern_classification.size())
                         ? fmt(t.metrics.pattern_classification[c])
                         : std::string("-"));
    }
    det << ',' << (t.metrics.nu_mse ? fmt(*t.metrics.nu_mse) : std::string("-")) << "\n";
  }
}

}  // namespace osrpc
