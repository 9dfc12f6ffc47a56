#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "osrpc/model.hpp"

namespace osrpc {

// One thinned post-burn-in draw. Parameter blocks are flattened with the
// layouts documented in docs/trace-format.md: theta0 is [k][j][r] over the
// cell offsets implied by d; theta1 and lambda concatenate subpopulation
// blocks in order; C, L and levels are 1-based; G is bit-packed row-major.
struct TraceDraw {
  int iter = 0;
  double loglik = 0.0;
  std::vector<double> pi;
  std::vector<double> theta0;
  std::vector<double> theta1;
  std::vector<double> lambda;
  std::vector<double> nu;
  std::vector<double> beta;
  std::vector<double> xi;
  std::vector<double> delta;
  std::vector<std::uint16_t> C;
  std::vector<std::uint8_t> L;
  std::vector<std::uint8_t> Gbits;
  std::vector<float> cprob;  // n x K assignment probabilities
};

struct TraceMeta {
  int n = 0, p = 0, S = 0, K = 0, M = 0;
  std::vector<int> Ks;
  std::vector<int> d;
  Mode mode = Mode::osRPC;
  std::uint64_t seed = 0;
  int fixed_iters = 0, fixed_burnin = 0, thin = 0;
  std::vector<std::string> column_labels;  // design columns for xi

  int D() const {
    int t = 0;
    for (int dj : d) t += dj;
    return t;
  }
  std::vector<int> cell_offsets() const {
    std::vector<int> off(d.size() + 1, 0);
    for (std::size_t j = 0; j < d.size(); ++j) off[j + 1] = off[j] + d[j];
    return off;
  }
  int lambda_len() const {
    int t = 0;
    for (int k : Ks) t += k;
    return t;
  }
};

struct ChainTrace {
  TraceMeta meta;
  std::vector<TraceDraw> draws;

  bool g_bit(const TraceDraw& dr, int i, int j) const {
    const std::size_t idx = static_cast<std::size_t>(i) * meta.p + j;
    return (dr.Gbits[idx >> 3] >> (idx & 7)) & 1;
  }
};

// JSON-lines trace file: one header line, one line per draw. Large integer
// blocks are base64 of raw little-endian values (documented in the header
// line itself).
void write_trace(const ChainTrace& trace, const std::string& path);
ChainTrace read_trace(const std::string& path);

// Occupancy accumulators carried across an adaptive-phase resume.
struct OccupancyAccumulator {
  int iters = 0;
  std::vector<double> global_sorted_sum;
  std::vector<std::vector<double>> local_sorted_sum;  // [s][rank]
};

// Everything needed to continue an interrupted fit deterministically.
struct FitCheckpoint {
  int phase = 0;  // 0 adaptive, 1 fixed
  int iter = 0;
  int K = 0;
  std::vector<int> Ks;
  ModelState state;
  OccupancyAccumulator acc;  // adaptive phase only
  ChainTrace partial;        // fixed phase only
};

void write_checkpoint(const FitCheckpoint& ck, const std::string& path);
FitCheckpoint read_checkpoint(const std::string& path);

std::string base64_encode(const std::uint8_t* data, std::size_t len);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace osrpc
