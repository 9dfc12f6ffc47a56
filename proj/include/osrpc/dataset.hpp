#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "osrpc/linalg.hpp"

namespace osrpc {

// n subjects by p categorical exposures with per-variable level counts,
// a subpopulation index, and an ordinal outcome. Immutable after
// construction/validation; safe to share across chains.
struct CategoricalDataset {
  int n = 0;  // subjects
  int p = 0;  // exposure variables
  int S = 0;  // subpopulations
  int M = 0;  // ordinal outcome levels

  std::vector<std::uint8_t> x;  // n*p, level codes 1..d[j]
  std::vector<int> d;           // p, per-variable level counts (>= 2)
  std::vector<int> subpop;      // n, 1..S
  std::vector<int> y;           // n, 1..M
  std::vector<std::string> subject_ids;
  std::vector<std::string> subpop_labels;  // size S when known

  std::uint8_t level(int i, int j) const {
    return x[static_cast<std::size_t>(i) * p + j];
  }
  int max_level() const;

  // Throws InvalidParameterError describing the first violated invariant.
  void validate() const;
};

struct CsvSchema {
  std::string id_column = "id";
  std::string subpop_column = "subpop";
  std::string outcome_column = "outcome";
  // Empty means: every remaining column is an exposure, in header order.
  std::vector<std::string> exposure_columns;
  // Optional overrides; 0 means infer from the maximum observed code.
  std::vector<int> level_counts;
  int outcome_levels = 0;
};

// Reads `id, subpop, outcome, v1..vp` style CSV. Blank cells and
// out-of-range codes are hard errors addressed by row and column.
CategoricalDataset load_csv(const std::string& path,
                            const CsvSchema& schema = CsvSchema());

void write_csv(const CategoricalDataset& data, const std::string& path);

// Cell-means design: a subpopulation one-hot block followed by a global
// cluster one-hot block, no intercept.
struct DesignMatrix {
  Matrix W;  // n x (S + K)
  int S = 0;
  int K = 0;
  std::vector<int> subpop_index;   // n, 0-based
  std::vector<int> cluster_index;  // n, 0-based
  std::vector<std::string> column_labels;

  int q() const { return S + K; }
  // Row-i linear predictor under coefficient vector xi, with the cluster
  // column overridden to `k` (0-based); k < 0 keeps the assigned cluster.
  double predictor(int i, const std::vector<double>& xi, int k = -1) const {
    return xi[subpop_index[i]] + xi[S + (k < 0 ? cluster_index[i] : k)];
  }
};

// C holds 1-based global cluster assignments in 1..K.
DesignMatrix build_design_matrix(const CategoricalDataset& data,
                                 const std::vector<int>& C, int K);

}  // namespace osrpc
