#pragma once

#include <optional>
#include <string>
#include <vector>

#include "osrpc/dataset.hpp"
#include "osrpc/simulate.hpp"
#include "osrpc/trace.hpp"

namespace osrpc {

// Pairwise co-assignment frequencies over the retained draws.
struct SimilarityMatrix {
  int n = 0;
  std::vector<float> m;  // n*n, symmetric, unit diagonal

  float at(int i, int j) const { return m[static_cast<std::size_t>(i) * n + j]; }
};

SimilarityMatrix build_similarity(const ChainTrace& trace);

// Complete-linkage agglomerative clustering of 1 - similarity, cut into K
// groups; group labels are 1..K ordered by decreasing size.
std::vector<int> complete_linkage_cut(const SimilarityMatrix& sim, int K);

// Aligns every draw's global labels with the reference classes from the
// similarity matrix; permutes C, pi, theta0, the cluster block of xi, and
// the assignment-probability columns consistently.
void relabel_trace(ChainTrace& trace, const SimilarityMatrix& sim, int K_active);

struct PosteriorSummary {
  int K = 0;
  std::vector<int> Ks;
  Mode mode = Mode::osRPC;

  std::vector<double> pi_med;
  std::vector<double> theta0_med;  // [k][j][r], rows renormalized
  std::vector<double> theta1_med;  // subpop blocks, rows renormalized
  std::vector<double> lambda_med;  // subpop blocks, renormalized
  std::vector<double> nu_med;      // [s][j]
  std::vector<double> xi_med;
  std::vector<double> delta_med;

  std::vector<int> C_hat;            // 1-based hard assignments
  std::vector<std::uint16_t> L_hat;  // n*p, 1-based (osRPC only)
  std::vector<std::vector<int>> modal_patterns;  // [k][j], modal level
  double dic = 0.0;
  std::string dic_variant;
  // Probit category probabilities per (subpop, cluster)
  std::vector<std::vector<std::vector<double>>> outcome_prob;
};

// DIC = -4 E[log L] + 2 log L(plug-in), observed-data likelihood with the
// posterior-median plug-in (majority-vote G).
double compute_dic(const ChainTrace& trace, const CategoricalDataset& data);

PosteriorSummary summarize(const ChainTrace& trace,
                           const CategoricalDataset& data, int K_active);

struct MetricBundle {
  int k_pred = 0;
  double dic = 0.0;
  double p_y_mse = 0.0;
  double y_ord = 0.0;
  std::vector<double> pattern_classification;  // per true pattern
  std::optional<double> nu_mse;                // osRPC only
};

MetricBundle evaluate(const PosteriorSummary& summary,
                      const SimulationTruth& truth,
                      const ChainTrace& trace,
                      const CategoricalDataset& data);

// --- file exports ------------------------------------------------------

void write_summary_json(const PosteriorSummary& summary, const TraceMeta& meta,
                        const std::string& path);

// Modal-pattern matrix: rows = variables, columns = clusters.
void write_modal_csv(const PosteriorSummary& summary, const std::string& path);

// nu heatmap: rows = variables, columns = subpopulations.
void write_nu_csv(const PosteriorSummary& summary, const TraceMeta& meta,
                  const std::string& path);

struct TaggedMetrics {
  std::string sim_case;  // "A" / "B"
  std::string mode;      // "oslcm" / "osrpc"
  int replicate = 0;
  MetricBundle metrics;
};

void write_metrics_json(const TaggedMetrics& tagged, const std::string& path);
TaggedMetrics read_metrics_json(const std::string& path);

// Aggregates replicate metrics into a table-shaped CSV (rows = metrics,
// columns = model x case) plus a per-replicate detail file.
void write_compare_tables(const std::vector<TaggedMetrics>& all,
                          const std::string& table_path,
                          const std::string& detail_path);

}  // namespace osrpc
