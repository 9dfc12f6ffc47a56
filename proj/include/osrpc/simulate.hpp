#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "osrpc/dataset.hpp"
#include "osrpc/rng.hpp"

namespace osrpc {

enum class SimCase { GlobalOnly, GlobalLocalHybrid };  // case A / case B

std::string to_string(SimCase c);
SimCase sim_case_from_string(const std::string& s);

// favored level per (variable, subpopulation), both 1-based. Variables that
// appear here are generated from the subpopulation's local pattern in case B.
using LocalPatternSpec = std::map<int, std::map<int, int>>;

struct SimulationConfig {
  SimCase sim_case = SimCase::GlobalOnly;
  int n_per_subpop = 1200;
  int n_subpops = 4;
  int p = 50;
  int d = 4;
  int n_replicates = 500;
  std::uint64_t seed = 0;
  int M = 3;
  // Share of the non-top outcome mass assigned to the lowest category.
  double low_category_split = 0.5;
  // Pr(y = M) ranges per global pattern; subpopulations spread evenly inside.
  std::array<std::pair<double, double>, 3> risk_ranges = {
      {{0.97, 0.99}, {0.14, 0.22}, {0.46, 0.58}}};
  // Case B only; empty means use default_local_spec().
  LocalPatternSpec local_spec;

  void validate() const;
};

struct SimulationTruth {
  std::vector<int> true_C;  // n, 1..3
  // [pattern][variable][level]
  std::vector<std::vector<std::vector<double>>> true_theta0;
  // [variable][subpop], 1 = global, 0 = local
  std::vector<std::vector<int>> true_G;
  LocalPatternSpec true_local_patterns;
  // [pattern][subpop][category]
  std::vector<std::vector<std::vector<double>>> true_outcome_prob;

  // Implied global/local probability per (subpop, variable): 1 if global.
  double nu_truth(int s, int j) const {  // 0-based args
    return true_G[j][s] ? 1.0 : 0.0;
  }
};

constexpr int kSimPatterns = 3;
constexpr double kFavoredProb = 0.85;

// The three global pattern favored levels, 1-based variable index.
// Levels above d are clamped to d.
int pattern_favored_level(int pattern, int j, int p, int d);

// Variables 41..50 (scaled as the top fifth of p) deviate in every
// subpopulation; subpopulation s favors level ((s-1) mod d) + 1.
LocalPatternSpec default_local_spec(const SimulationConfig& cfg);

std::pair<CategoricalDataset, SimulationTruth> simulate(
    const SimulationConfig& cfg, RngStream& rng);

void write_truth_json(const SimulationTruth& truth, const std::string& path);
SimulationTruth load_truth_json(const std::string& path);

LocalPatternSpec load_local_spec_json(const std::string& path);

}  // namespace osrpc
