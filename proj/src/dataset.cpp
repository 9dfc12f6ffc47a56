#include "osrpc/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "osrpc/errors.hpp"

namespace osrpc {

int CategoricalDataset::max_level() const {
  int m = 0;
  for (int dj : d) m = std::max(m, dj);
  return m;
}

void CategoricalDataset::validate() const {
  if (n <= 0 || p <= 0 || S <= 0) {
    throw InvalidParameterError("dataset: n, p, S must all be positive");
  }
  if (M < 2) {
    throw InvalidParameterError("dataset: outcome needs M >= 2 levels, got " +
                                std::to_string(M));
  }
  if (static_cast<int>(d.size()) != p ||
      static_cast<int>(subpop.size()) != n ||
      static_cast<int>(y.size()) != n ||
      x.size() != static_cast<std::size_t>(n) * p) {
    throw InvalidParameterError("dataset: field sizes inconsistent with n, p");
  }
  for (int j = 0; j < p; ++j) {
    if (d[j] < 2) {
      throw InvalidParameterError("dataset: variable " + std::to_string(j + 1) +
                                  " needs at least 2 levels");
    }
  }
  std::vector<int> seen(S, 0);
  for (int i = 0; i < n; ++i) {
    if (subpop[i] < 1 || subpop[i] > S) {
      throw InvalidParameterError("dataset: subject " + std::to_string(i + 1) +
                                  " has subpopulation " +
                                  std::to_string(subpop[i]) +
                                  " outside 1.." + std::to_string(S));
    }
    seen[subpop[i] - 1] = 1;
    if (y[i] < 1 || y[i] > M) {
      throw InvalidParameterError("dataset: subject " + std::to_string(i + 1) +
                                  " has outcome " + std::to_string(y[i]) +
                                  " outside 1.." + std::to_string(M));
    }
    for (int j = 0; j < p; ++j) {
      const int code = level(i, j);
      if (code < 1 || code > d[j]) {
        throw InvalidParameterError(
            "dataset: subject " + std::to_string(i + 1) + ", variable " +
            std::to_string(j + 1) + " has code " + std::to_string(code) +
            " outside 1.." + std::to_string(d[j]));
      }
    }
  }
  for (int s = 0; s < S; ++s) {
    if (!seen[s]) {
      throw InvalidParameterError("dataset: subpopulation " +
                                  std::to_string(s + 1) + " has no subjects");
    }
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // trim surrounding whitespace
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

int parse_code(const std::string& cell, int row, const std::string& col) {
  if (cell.empty()) {
    throw ParseError("row " + std::to_string(row) + ", column '" + col +
                     "': missing cell");
  }
  try {
    std::size_t pos = 0;
    const int v = std::stoi(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ParseError("row " + std::to_string(row) + ", column '" + col +
                     "': cannot parse '" + cell + "' as an integer code");
  }
}

}  // namespace

CategoricalDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  const std::vector<std::string> header = split_csv_line(line);

  auto find_col = [&](const std::string& name) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return static_cast<int>(c);
    }
    throw ParseError(path + ": header is missing column '" + name + "'");
  };

  const int id_c = find_col(schema.id_column);
  const int sp_c = find_col(schema.subpop_column);
  const int y_c = find_col(schema.outcome_column);

  std::vector<int> expo_cols;
  std::vector<std::string> expo_names;
  if (schema.exposure_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      const int ci = static_cast<int>(c);
      if (ci != id_c && ci != sp_c && ci != y_c) {
        expo_cols.push_back(ci);
        expo_names.push_back(header[c]);
      }
    }
  } else {
    for (const auto& name : schema.exposure_columns) {
      expo_cols.push_back(find_col(name));
      expo_names.push_back(name);
    }
  }
  const int p = static_cast<int>(expo_cols.size());
  if (p == 0) throw ParseError(path + ": no exposure columns");

  CategoricalDataset data;
  data.p = p;

  // Subpopulation labels map to indices 1..S in order of first appearance
  // for integer-coded files (code order), otherwise alphabetically later.
  std::map<std::string, int> subpop_ids;
  bool subpop_numeric = true;

  std::vector<std::string> raw_subpops;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) < static_cast<int>(header.size())) {
      throw ParseError("row " + std::to_string(row) + ": expected " +
                       std::to_string(header.size()) + " cells, found " +
                       std::to_string(cells.size()));
    }
    data.subject_ids.push_back(cells[id_c]);
    raw_subpops.push_back(cells[sp_c]);
    if (cells[sp_c].empty()) {
      throw ParseError("row " + std::to_string(row) + ", column '" +
                       schema.subpop_column + "': missing cell");
    }
    if (subpop_numeric) {
      try {
        std::size_t pos = 0;
        (void)std::stoi(cells[sp_c], &pos);
        if (pos != cells[sp_c].size()) subpop_numeric = false;
      } catch (const std::exception&) {
        subpop_numeric = false;
      }
    }
    data.y.push_back(parse_code(cells[y_c], row, schema.outcome_column));
    for (int j = 0; j < p; ++j) {
      const int code = parse_code(cells[expo_cols[j]], row, expo_names[j]);
      if (code < 1 || code > 255) {
        throw ParseError("row " + std::to_string(row) + ", column '" +
                         expo_names[j] + "': code " + std::to_string(code) +
                         " out of range (levels are 1-based)");
      }
      data.x.push_back(static_cast<std::uint8_t>(code));
    }
  }
  data.n = static_cast<int>(data.y.size());
  if (data.n == 0) throw ParseError(path + ": no data rows");

  if (subpop_numeric) {
    int S = 0;
    data.subpop.reserve(data.n);
    for (int i = 0; i < data.n; ++i) {
      const int v = parse_code(raw_subpops[i], i + 2, schema.subpop_column);
      if (v < 1) {
        throw ParseError("row " + std::to_string(i + 2) + ", column '" +
                         schema.subpop_column + "': unknown subpopulation label '" +
                         raw_subpops[i] + "' (integer labels are 1-based)");
      }
      data.subpop.push_back(v);
      S = std::max(S, v);
    }
    data.S = S;
    for (int s = 1; s <= S; ++s) data.subpop_labels.push_back(std::to_string(s));
  } else {
    for (const auto& lbl : raw_subpops) subpop_ids.emplace(lbl, 0);
    int next = 1;
    for (auto& [lbl, idx] : subpop_ids) idx = next++;  // alphabetical
    data.S = static_cast<int>(subpop_ids.size());
    data.subpop_labels.resize(data.S);
    for (const auto& [lbl, idx] : subpop_ids) data.subpop_labels[idx - 1] = lbl;
    data.subpop.reserve(data.n);
    for (const auto& lbl : raw_subpops) data.subpop.push_back(subpop_ids[lbl]);
  }

  // Level counts: max observed code unless the schema overrides.
  data.d.assign(p, 0);
  for (int i = 0; i < data.n; ++i) {
    for (int j = 0; j < p; ++j) {
      data.d[j] = std::max(data.d[j], static_cast<int>(data.level(i, j)));
    }
  }
  for (int j = 0; j < p; ++j) data.d[j] = std::max(data.d[j], 2);
  if (!schema.level_counts.empty()) {
    if (static_cast<int>(schema.level_counts.size()) != p) {
      throw ParseError(path + ": schema level_counts size " +
                       std::to_string(schema.level_counts.size()) +
                       " does not match " + std::to_string(p) + " exposures");
    }
    for (int j = 0; j < p; ++j) {
      if (schema.level_counts[j] < data.d[j]) {
        throw ParseError("column '" + expo_names[j] + "': observed code " +
                         std::to_string(data.d[j]) +
                         " exceeds schema level count " +
                         std::to_string(schema.level_counts[j]));
      }
      data.d[j] = schema.level_counts[j];
    }
  }

  int M = 0;
  for (int i = 0; i < data.n; ++i) M = std::max(M, data.y[i]);
  data.M = std::max(M, 2);
  if (schema.outcome_levels > 0) {
    if (schema.outcome_levels < M) {
      throw ParseError(path + ": observed outcome " + std::to_string(M) +
                       " exceeds schema outcome_levels " +
                       std::to_string(schema.outcome_levels));
    }
    data.M = schema.outcome_levels;
  }

  try {
    data.validate();
  } catch (const InvalidParameterError& e) {
    throw ParseError(path + ": " + e.what());
  }
  return data;
}

void write_csv(const CategoricalDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << "id,subpop,outcome";
  for (int j = 1; j <= data.p; ++j) out << ",v" << j;
  out << "\n";
  for (int i = 0; i < data.n; ++i) {
    out << (i < static_cast<int>(data.subject_ids.size())
                ? data.subject_ids[i]
                : "s" + std::to_string(i + 1));
    out << ',' << data.subpop[i] << ',' << data.y[i];
    for (int j = 0; j < data.p; ++j) {
      out << ',' << static_cast<int>(data.level(i, j));
    }
    out << "\n";
  }
}

DesignMatrix build_design_matrix(const CategoricalDataset& data,
                                 const std::vector<int>& C, int K) {
  if (K <= 0) {
    throw InvalidParameterError(
        "build_design_matrix: need at least one global cluster (K = " +
        std::to_string(K) + ")");
  }
  if (static_cast<int>(C.size()) != data.n) {
    throw InvalidParameterError("build_design_matrix: C size mismatch");
  }
  DesignMatrix dm;
  dm.S = data.S;
  dm.K = K;
  dm.W = Matrix(data.n, data.S + K);
  dm.subpop_index.resize(data.n);
  dm.cluster_index.resize(data.n);
  for (int i = 0; i < data.n; ++i) {
    if (C[i] < 1 || C[i] > K) {
      throw InvalidParameterError("build_design_matrix: subject " +
                                  std::to_string(i + 1) + " assigned to " +
                                  std::to_string(C[i]) + " outside 1.." +
                                  std::to_string(K));
    }
    dm.subpop_index[i] = data.subpop[i] - 1;
    dm.cluster_index[i] = C[i] - 1;
    dm.W(i, dm.subpop_index[i]) = 1.0;
    dm.W(i, data.S + dm.cluster_index[i]) = 1.0;
  }
  for (int s = 1; s <= data.S; ++s) {
    dm.column_labels.push_back("subpop" + std::to_string(s));
  }
  for (int k = 1; k <= K; ++k) {
    dm.column_labels.push_back("cluster" + std::to_string(k));
  }
  return dm;
}

}  // namespace osrpc
