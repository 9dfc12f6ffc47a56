#include "osrpc/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "osrpc/errors.hpp"

namespace osrpc {

using nlohmann::json;

std::string to_string(SimCase c) {
  return c == SimCase::GlobalOnly ? "A" : "B";
}

SimCase sim_case_from_string(const std::string& s) {
  if (s == "A" || s == "a" || s == "global") return SimCase::GlobalOnly;
  if (s == "B" || s == "b" || s == "hybrid") return SimCase::GlobalLocalHybrid;
  throw InvalidParameterError("unknown simulation case '" + s +
                              "' (expected A or B)");
}

void SimulationConfig::validate() const {
  if (n_per_subpop <= 0 || n_subpops <= 0 || p <= 0 || n_replicates <= 0) {
    throw InvalidParameterError("simulation config: counts must be positive");
  }
  if (d < 2 || d > 255) {
    throw InvalidParameterError("simulation config: d must be in 2..255");
  }
  if (M < 2) {
    throw InvalidParameterError("simulation config: M must be at least 2");
  }
  if (!(low_category_split >= 0.0 && low_category_split <= 1.0)) {
    throw InvalidParameterError("simulation config: split must be in [0,1]");
  }
  for (const auto& [lo, hi] : risk_ranges) {
    if (!(lo > 0.0 && hi < 1.0 && lo <= hi)) {
      throw InvalidParameterError("simulation config: risk ranges must satisfy 0 < lo <= hi < 1");
    }
  }
}

int pattern_favored_level(int pattern, int j, int p, int d) {
  // Breaks at the same fractions of p as the reference sizes (p=50):
  // pattern 1: first half -> 3, rest -> 1
  // pattern 2: first fifth -> 2, rest -> 5 clamped to d
  // pattern 3: first fifth -> 1, next two fifths -> 2, rest -> 3
  const int fifth = std::max(1, p / 5);
  const int half = std::max(1, p / 2);
  int level = 1;
  switch (pattern) {
    case 1:
      level = (j <= half) ? 3 : 1;
      break;
    case 2:
      level = (j <= fifth) ? 2 : 5;
      break;
    case 3:
      if (j <= fifth) {
        level = 1;
      } else if (j <= 3 * fifth) {
        level = 2;
      } else {
        level = 3;
      }
      break;
    default:
      throw InvalidParameterError("pattern must be 1..3");
  }
  return std::min(level, d);
}

LocalPatternSpec default_local_spec(const SimulationConfig& cfg) {
  LocalPatternSpec spec;
  const int fifth = std::max(1, cfg.p / 5);
  for (int j = cfg.p - fifth + 1; j <= cfg.p; ++j) {
    for (int s = 1; s <= cfg.n_subpops; ++s) {
      spec[j][s] = ((s - 1) % cfg.d) + 1;
    }
  }
  return spec;
}

namespace {

// Categorical draw from the favored-level table: kFavoredProb on `favored`,
// the rest shared evenly. Single uniform, exact cell probabilities.
int draw_level(int favored, int d, RngStream& rng) {
  const double u = rng.uniform();
  if (u < kFavoredProb || d == 1) return favored;
  const double rest = (1.0 - kFavoredProb) / (d - 1);
  int idx = static_cast<int>((u - kFavoredProb) / rest);
  if (idx > d - 2) idx = d - 2;
  // skip the favored level when counting through the others
  return (idx + 1 <= favored - 1) ? idx + 1 : idx + 2;
}

}  // namespace

std::pair<CategoricalDataset, SimulationTruth> simulate(
    const SimulationConfig& cfg, RngStream& rng) {
  cfg.validate();
  const int S = cfg.n_subpops;
  const int n = cfg.n_per_subpop * S;
  const int p = cfg.p;
  const int d = cfg.d;

  LocalPatternSpec local = cfg.local_spec;
  if (cfg.sim_case == SimCase::GlobalLocalHybrid && local.empty()) {
    local = default_local_spec(cfg);
  }
  if (cfg.sim_case == SimCase::GlobalOnly) local.clear();
  for (const auto& [j, by_s] : local) {
    if (j < 1 || j > p) {
      throw InvalidParameterError("local spec: variable " + std::to_string(j) +
                                  " outside 1.." + std::to_string(p));
    }
    for (const auto& [s, lvl] : by_s) {
      if (s < 1 || s > S || lvl < 1 || lvl > d) {
        throw InvalidParameterError("local spec: bad (subpop, level) for variable " +
                                    std::to_string(j));
      }
    }
  }

  SimulationTruth truth;
  truth.true_local_patterns = local;

  truth.true_theta0.assign(kSimPatterns,
                           std::vector<std::vector<double>>(
                               p, std::vector<double>(d, 0.0)));
  for (int t = 0; t < kSimPatterns; ++t) {
    for (int j = 0; j < p; ++j) {
      const int fav = pattern_favored_level(t + 1, j + 1, p, d);
      const double rest = (1.0 - kFavoredProb) / (d - 1);
      for (int r = 0; r < d; ++r) {
        truth.true_theta0[t][j][r] = (r + 1 == fav) ? kFavoredProb : rest;
      }
    }
  }

  truth.true_G.assign(p, std::vector<int>(S, 1));
  for (const auto& [j, by_s] : local) {
    for (const auto& [s, lvl] : by_s) truth.true_G[j - 1][s - 1] = 0;
  }

  truth.true_outcome_prob.assign(
      kSimPatterns,
      std::vector<std::vector<double>>(S, std::vector<double>(cfg.M, 0.0)));
  for (int t = 0; t < kSimPatterns; ++t) {
    const auto [lo, hi] = cfg.risk_ranges[t];
    for (int s = 0; s < S; ++s) {
      const double frac = (S > 1) ? static_cast<double>(s) / (S - 1) : 0.5;
      const double r = lo + frac * (hi - lo);
      auto& prob = truth.true_outcome_prob[t][s];
      prob[cfg.M - 1] = r;
      if (cfg.M == 2) {
        prob[0] = 1.0 - r;
      } else {
        // split the remaining mass between the two lowest categories;
        // middle categories (M > 3) receive nothing by default
        prob[0] = (1.0 - r) * cfg.low_category_split;
        prob[1] = (1.0 - r) * (1.0 - cfg.low_category_split);
      }
    }
  }

  CategoricalDataset data;
  data.n = n;
  data.p = p;
  data.S = S;
  data.M = cfg.M;
  data.d.assign(p, d);
  data.x.resize(static_cast<std::size_t>(n) * p);
  data.subpop.resize(n);
  data.y.resize(n);
  data.subject_ids.resize(n);
  for (int s = 1; s <= S; ++s) data.subpop_labels.push_back(std::to_string(s));

  truth.true_C.resize(n);
  for (int i = 0; i < n; ++i) {
    const int s = i / cfg.n_per_subpop + 1;  // equal-size blocks
    data.subpop[i] = s;
    data.subject_ids[i] = "s" + std::to_string(i + 1);
    const int pattern = static_cast<int>(rng.below(kSimPatterns)) + 1;
    truth.true_C[i] = pattern;

    for (int j = 1; j <= p; ++j) {
      int fav;
      auto jt = local.find(j);
      if (jt != local.end() && jt->second.count(s)) {
        fav = jt->second.at(s);
      } else {
        fav = pattern_favored_level(pattern, j, p, d);
      }
      data.x[static_cast<std::size_t>(i) * p + (j - 1)] =
          static_cast<std::uint8_t>(draw_level(fav, d, rng));
    }

    const auto& prob = truth.true_outcome_prob[pattern - 1][s - 1];
    const double u = rng.uniform();
    double acc = 0.0;
    int yi = cfg.M;
    for (int m = 0; m < cfg.M; ++m) {
      acc += prob[m];
      if (u < acc) {
        yi = m + 1;
        break;
      }
    }
    data.y[i] = yi;
  }

  data.validate();
  return {std::move(data), std::move(truth)};
}

namespace {

json local_spec_to_json(const LocalPatternSpec& spec) {
  json j = json::object();
  for (const auto& [var, by_s] : spec) {
    json inner = json::object();
    for (const auto& [s, lvl] : by_s) inner[std::to_string(s)] = lvl;
    j[std::to_string(var)] = std::move(inner);
  }
  return j;
}

LocalPatternSpec local_spec_from_json(const json& j) {
  LocalPatternSpec spec;
  for (const auto& [var, inner] : j.items()) {
    for (const auto& [s, lvl] : inner.items()) {
      spec[std::stoi(var)][std::stoi(s)] = lvl.get<int>();
    }
  }
  return spec;
}

}  // namespace

void write_truth_json(const SimulationTruth& truth, const std::string& path) {
  json j;
  j["true_C"] = truth.true_C;
  j["true_theta0"] = truth.true_theta0;
  j["true_G"] = truth.true_G;
  j["true_local_patterns"] = local_spec_to_json(truth.true_local_patterns);
  j["true_outcome_prob"] = truth.true_outcome_prob;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

SimulationTruth load_truth_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  SimulationTruth truth;
  try {
    truth.true_C = j.at("true_C").get<std::vector<int>>();
    truth.true_theta0 =
        j.at("true_theta0")
            .get<std::vector<std::vector<std::vector<double>>>>();
    truth.true_G = j.at("true_G").get<std::vector<std::vector<int>>>();
    truth.true_local_patterns =
        local_spec_from_json(j.at("true_local_patterns"));
    truth.true_outcome_prob =
        j.at("true_outcome_prob")
            .get<std::vector<std::vector<std::vector<double>>>>();
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return truth;
}

LocalPatternSpec load_local_spec_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return local_spec_from_json(j);
}

}  // namespace osrpc
