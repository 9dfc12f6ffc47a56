#include "osrpc/trace.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "osrpc/errors.hpp"

namespace osrpc {

using nlohmann::json;

namespace {
constexpr char kB64Chars[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const std::uint8_t* data, std::size_t len) {
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    std::uint32_t v = data[i] << 16;
    if (i + 1 < len) v |= data[i + 1] << 8;
    if (i + 2 < len) v |= data[i + 2];
    out.push_back(kB64Chars[(v >> 18) & 63]);
    out.push_back(kB64Chars[(v >> 12) & 63]);
    out.push_back(i + 1 < len ? kB64Chars[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < len ? kB64Chars[v & 63] : '=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  static int rev[256];
  static bool init = false;
  if (!init) {
    for (int i = 0; i < 256; ++i) rev[i] = -1;
    for (int i = 0; i < 64; ++i) rev[static_cast<unsigned char>(kB64Chars[i])] = i;
    init = true;
  }
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  std::uint32_t v = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    const int dec = rev[static_cast<unsigned char>(c)];
    if (dec < 0) throw ParseError("base64: invalid character");
    v = (v << 6) | static_cast<std::uint32_t>(dec);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((v >> bits) & 0xFF));
    }
  }
  return out;
}

namespace {

template <typename T>
std::string encode_block(const std::vector<T>& v) {
  return base64_encode(reinterpret_cast<const std::uint8_t*>(v.data()),
                       v.size() * sizeof(T));
}

template <typename T>
std::vector<T> decode_block(const std::string& text) {
  const std::vector<std::uint8_t> raw = base64_decode(text);
  if (raw.size() % sizeof(T) != 0) throw ParseError("trace: block size mismatch");
  std::vector<T> out(raw.size() / sizeof(T));
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

json meta_to_json(const TraceMeta& m) {
  return json{{"n", m.n},
              {"p", m.p},
              {"S", m.S},
              {"K", m.K},
              {"M", m.M},
              {"Ks", m.Ks},
              {"d", m.d},
              {"mode", to_string(m.mode)},
              {"seed", m.seed},
              {"fixed_iters", m.fixed_iters},
              {"fixed_burnin", m.fixed_burnin},
              {"thin", m.thin},
              {"column_labels", m.column_labels}};
}

TraceMeta meta_from_json(const json& j) {
  TraceMeta m;
  m.n = j.at("n").get<int>();
  m.p = j.at("p").get<int>();
  m.S = j.at("S").get<int>();
  m.K = j.at("K").get<int>();
  m.M = j.at("M").get<int>();
  m.Ks = j.at("Ks").get<std::vector<int>>();
  m.d = j.at("d").get<std::vector<int>>();
  m.mode = mode_from_string(j.at("mode").get<std::string>());
  m.seed = j.at("seed").get<std::uint64_t>();
  m.fixed_iters = j.at("fixed_iters").get<int>();
  m.fixed_burnin = j.at("fixed_burnin").get<int>();
  m.thin = j.at("thin").get<int>();
  m.column_labels = j.at("column_labels").get<std::vector<std::string>>();
  return m;
}

json draw_to_json(const TraceDraw& dr) {
  json j;
  j["type"] = "draw";
  j["iter"] = dr.iter;
  j["loglik"] = dr.loglik;
  j["pi"] = dr.pi;
  j["theta0"] = dr.theta0;
  j["theta1"] = dr.theta1;
  j["lambda"] = dr.lambda;
  j["nu"] = dr.nu;
  j["beta"] = dr.beta;
  j["xi"] = dr.xi;
  j["delta"] = dr.delta;
  j["C"] = encode_block(dr.C);
  j["L"] = encode_block(dr.L);
  j["G"] = encode_block(dr.Gbits);
  j["cprob"] = encode_block(dr.cprob);
  return j;
}

TraceDraw draw_from_json(const json& j) {
  TraceDraw dr;
  dr.iter = j.at("iter").get<int>();
  dr.loglik = j.at("loglik").get<double>();
  dr.pi = j.at("pi").get<std::vector<double>>();
  dr.theta0 = j.at("theta0").get<std::vector<double>>();
  dr.theta1 = j.at("theta1").get<std::vector<double>>();
  dr.lambda = j.at("lambda").get<std::vector<double>>();
  dr.nu = j.at("nu").get<std::vector<double>>();
  dr.beta = j.at("beta").get<std::vector<double>>();
  dr.xi = j.at("xi").get<std::vector<double>>();
  dr.delta = j.at("delta").get<std::vector<double>>();
  dr.C = decode_block<std::uint16_t>(j.at("C").get<std::string>());
  dr.L = decode_block<std::uint8_t>(j.at("L").get<std::string>());
  dr.Gbits = decode_block<std::uint8_t>(j.at("G").get<std::string>());
  dr.cprob = decode_block<float>(j.at("cprob").get<std::string>());
  return dr;
}

}  // namespace

void write_trace(const ChainTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  json header = meta_to_json(trace.meta);
  header["type"] = "header";
  header["format"] = "osrpc-trace-v1";
  header["encoding"] =
      json{{"C", "u16le+base64"}, {"L", "u8+base64"}, {"G", "bitpack+base64"},
           {"cprob", "f32le+base64"}};
  header["layout"] =
      json{{"theta0", "[k][j][r] over cell offsets from d"},
           {"theta1", "subpopulation blocks of [l][j][r]"},
           {"lambda", "subpopulation blocks"},
           {"nu", "[s][j]"},
           {"cprob", "[i][k]"}};
  out << header.dump() << "\n";
  for (const auto& dr : trace.draws) out << draw_to_json(dr).dump() << "\n";
}

ChainTrace read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  ChainTrace trace;
  std::string line;
  bool have_header = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const std::string type = j.value("type", "");
    try {
      if (type == "header") {
        trace.meta = meta_from_json(j);
        have_header = true;
      } else if (type == "draw") {
        trace.draws.push_back(draw_from_json(j));
      } else {
        throw ParseError("unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw ParseError(path + ": missing trace header");
  return trace;
}

namespace {

json state_to_json(const ModelState& st) {
  json j;
  j["K"] = st.K;
  j["Ks"] = st.Ks;
  j["C"] = st.C;
  j["L"] = encode_block(st.L);
  j["G"] = encode_block(st.G);
  j["pi"] = st.pi;
  j["lambda"] = st.lambda;
  j["theta0"] = st.theta0;
  j["theta1"] = st.theta1;
  j["nu"] = st.nu;
  j["beta"] = st.beta;
  j["z"] = st.probit.z;
  j["xi"] = st.probit.xi;
  j["delta"] = st.probit.delta;
  j["s0"] = st.probit.s0;
  j["cell_offset"] = st.cell_offset;
  j["D"] = st.D;
  return j;
}

ModelState state_from_json(const json& j) {
  ModelState st;
  st.K = j.at("K").get<int>();
  st.Ks = j.at("Ks").get<std::vector<int>>();
  st.C = j.at("C").get<std::vector<int>>();
  st.L = decode_block<std::uint16_t>(j.at("L").get<std::string>());
  {
    const auto g = decode_block<std::uint8_t>(j.at("G").get<std::string>());
    st.G.assign(g.begin(), g.end());
  }
  st.pi = j.at("pi").get<std::vector<double>>();
  st.lambda = j.at("lambda").get<std::vector<std::vector<double>>>();
  st.theta0 = j.at("theta0").get<std::vector<double>>();
  st.theta1 = j.at("theta1").get<std::vector<std::vector<double>>>();
  st.nu = j.at("nu").get<std::vector<double>>();
  st.beta = j.at("beta").get<std::vector<double>>();
  st.probit.z = j.at("z").get<std::vector<double>>();
  st.probit.xi = j.at("xi").get<std::vector<double>>();
  st.probit.delta = j.at("delta").get<std::vector<double>>();
  st.probit.s0 = j.at("s0").get<double>();
  st.cell_offset = j.at("cell_offset").get<std::vector<int>>();
  st.D = j.at("D").get<int>();
  return st;
}

}  // namespace

void write_checkpoint(const FitCheckpoint& ck, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  json j;
  j["type"] = "checkpoint";
  j["format"] = "osrpc-checkpoint-v1";
  j["phase"] = ck.phase;
  j["iter"] = ck.iter;
  j["K"] = ck.K;
  j["Ks"] = ck.Ks;
  j["state"] = state_to_json(ck.state);
  j["acc"] = json{{"iters", ck.acc.iters},
                  {"global", ck.acc.global_sorted_sum},
                  {"local", ck.acc.local_sorted_sum}};
  json partial;
  partial["meta"] = meta_to_json(ck.partial.meta);
  partial["has_meta"] = ck.partial.meta.n > 0;
  json draws = json::array();
  for (const auto& dr : ck.partial.draws) draws.push_back(draw_to_json(dr));
  partial["draws"] = std::move(draws);
  j["partial"] = std::move(partial);
  out << j.dump() << "\n";
}

FitCheckpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  FitCheckpoint ck;
  try {
    ck.phase = j.at("phase").get<int>();
    ck.iter = j.at("iter").get<int>();
    ck.K = j.at("K").get<int>();
    ck.Ks = j.at("Ks").get<std::vector<int>>();
    ck.state = state_from_json(j.at("state"));
    ck.acc.iters = j.at("acc").at("iters").get<int>();
    ck.acc.global_sorted_sum = j.at("acc").at("global").get<std::vector<double>>();
    ck.acc.local_sorted_sum =
        j.at("acc").at("local").get<std::vector<std::vector<double>>>();
    if (j.at("partial").at("has_meta").get<bool>()) {
      ck.partial.meta = meta_from_json(j.at("partial").at("meta"));
    }
    for (const auto& dj : j.at("partial").at("draws")) {
      ck.partial.draws.push_back(draw_from_json(dj));
    }
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return ck;
}

}  // namespace osrpc
