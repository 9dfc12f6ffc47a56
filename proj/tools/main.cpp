#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "osrpc/dataset.hpp"
#include "osrpc/errors.hpp"
#include "osrpc/gibbs.hpp"
#include "osrpc/model.hpp"
#include "osrpc/postprocess.hpp"
#include "osrpc/simulate.hpp"
#include "osrpc/trace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace osrpc;

namespace {

constexpr std::uint64_t kReplicateTag = 11;
constexpr std::uint64_t kChainTag = 12;

// exit codes: 0 ok, 1 unexpected, 2 parse/config, 3 numeric, 4 degenerate fit
constexpr int kExitParse = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitDegenerate = 4;

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return j;
}

// JSON config supplies any value the command line left at its default.
template <typename T>
void apply_cfg(const json& cfg, const CLI::Option* opt, const char* key, T& out) {
  if (opt != nullptr && opt->count() > 0) return;  // explicit flag wins
  if (cfg.contains(key)) out = cfg.at(key).get<T>();
}

struct SamplerFlags {
  SamplerConfig cfg;
  Hyperparameters hyper;
  CLI::Option* o_adaptive = nullptr;
  CLI::Option* o_adaptive_burnin = nullptr;
  CLI::Option* o_fixed = nullptr;
  CLI::Option* o_burnin = nullptr;
  CLI::Option* o_thin = nullptr;
  CLI::Option* o_threshold = nullptr;
  CLI::Option* o_permute = nullptr;
  CLI::Option* o_k0 = nullptr;
  CLI::Option* o_ks = nullptr;
  CLI::Option* o_alpha = nullptr;
  CLI::Option* o_eta = nullptr;
  CLI::Option* o_abeta = nullptr;
  CLI::Option* o_bbeta = nullptr;
  CLI::Option* o_mu0 = nullptr;
  CLI::Option* o_sigma0 = nullptr;
  CLI::Option* o_s0 = nullptr;

  void add(CLI::App* app) {
    o_adaptive = app->add_option("--adaptive-iters", cfg.adaptive_iters,
                                 "Adaptive sampler iterations");
    o_adaptive_burnin = app->add_option("--adaptive-burnin", cfg.adaptive_burnin,
                                        "Adaptive burn-in (default: half the iterations)");
    o_fixed = app->add_option("--fixed-iters", cfg.fixed_iters, "Fixed sampler iterations");
    o_burnin = app->add_option("--burnin", cfg.fixed_burnin, "Fixed-phase burn-in");
    o_thin = app->add_option("--thin", cfg.thin, "Thinning interval");
    o_threshold = app->add_option("--threshold", cfg.nonempty_threshold,
                                  "Nonempty cluster occupancy threshold");
    o_permute = app->add_option("--permute-every", cfg.permute_every,
                                "Random permutation interval (0 disables)");
    o_k0 = app->add_option("--k0", hyper.K0, "Overfitted global cluster count");
    o_ks = app->add_option("--ks", hyper.Ks, "Overfitted local cluster count");
    o_alpha = app->add_option("--alpha", hyper.alpha, "Mixture Dirichlet concentration");
    o_eta = app->add_option("--eta", hyper.eta, "Pattern Dirichlet concentration");
    o_abeta = app->add_option("--a-beta", hyper.a_beta, "Gamma shape for beta^(s)");
    o_bbeta = app->add_option("--b-beta", hyper.b_beta, "Gamma rate for beta^(s)");
    o_mu0 = app->add_option("--mu0", hyper.mu0, "Prior mean for regression coefficients");
    o_sigma0 = app->add_option("--sigma0", hyper.sigma0, "Prior variance scale for xi");
    o_s0 = app->add_option("--s0", hyper.s0, "Probit scale constant");
  }

  void merge(const json& cj) {
    apply_cfg(cj, o_adaptive, "adaptive_iters", cfg.adaptive_iters);
    apply_cfg(cj, o_adaptive_burnin, "adaptive_burnin", cfg.adaptive_burnin);
    apply_cfg(cj, o_fixed, "fixed_iters", cfg.fixed_iters);
    apply_cfg(cj, o_burnin, "fixed_burnin", cfg.fixed_burnin);
    apply_cfg(cj, o_thin, "thin", cfg.thin);
    apply_cfg(cj, o_threshold, "nonempty_threshold", cfg.nonempty_threshold);
    apply_cfg(cj, o_permute, "permute_every", cfg.permute_every);
    apply_cfg(cj, o_k0, "K0", hyper.K0);
    apply_cfg(cj, o_ks, "Ks", hyper.Ks);
    apply_cfg(cj, o_alpha, "alpha", hyper.alpha);
    apply_cfg(cj, o_eta, "eta", hyper.eta);
    apply_cfg(cj, o_abeta, "a_beta", hyper.a_beta);
    apply_cfg(cj, o_bbeta, "b_beta", hyper.b_beta);
    apply_cfg(cj, o_mu0, "mu0", hyper.mu0);
    apply_cfg(cj, o_sigma0, "sigma0", hyper.sigma0);
    apply_cfg(cj, o_s0, "s0", hyper.s0);
    // adaptive burn-in tracks the adaptive length unless given explicitly
    if ((o_adaptive_burnin == nullptr || o_adaptive_burnin->count() == 0) &&
        !cj.contains("adaptive_burnin")) {
      cfg.adaptive_burnin = cfg.adaptive_iters / 2;
    }
  }
};

int run_simulate(const std::string& config_path, SimulationConfig sim,
                 const std::string& case_str, std::uint64_t seed,
                 const std::string& out_dir, const std::string& local_spec_path,
                 const CLI::Option* o_case, const CLI::Option* o_reps,
                 const CLI::Option* o_nps, const CLI::Option* o_subpops,
                 const CLI::Option* o_p, const CLI::Option* o_d) {
  json cj;
  if (!config_path.empty()) cj = load_config_file(config_path);
  std::string case_eff = case_str;
  apply_cfg(cj, o_case, "case", case_eff);
  sim.sim_case = sim_case_from_string(case_eff);
  apply_cfg(cj, o_reps, "replicates", sim.n_replicates);
  apply_cfg(cj, o_nps, "n_per_subpop", sim.n_per_subpop);
  apply_cfg(cj, o_subpops, "n_subpops", sim.n_subpops);
  apply_cfg(cj, o_p, "p", sim.p);
  apply_cfg(cj, o_d, "d", sim.d);
  if (!local_spec_path.empty()) sim.local_spec = load_local_spec_json(local_spec_path);
  sim.seed = seed;
  sim.validate();

  fs::create_directories(out_dir);
  const std::string tag = to_string(sim.sim_case);
  for (int rep = 1; rep <= sim.n_replicates; ++rep) {
    RngStream rng(derive_seed(seed, {kReplicateTag, static_cast<std::uint64_t>(rep),
                                     static_cast<std::uint64_t>(sim.sim_case)}),
                  0);
    auto [data, truth] = simulate(sim, rng);
    const std::string stem = "rep" + std::to_string(rep) + "_" + tag;
    write_csv(data, (fs::path(out_dir) / (stem + ".csv")).string());
    write_truth_json(truth, (fs::path(out_dir) / (stem + ".truth.json")).string());
  }
  std::cout << "wrote " << sim.n_replicates << " replicate(s) to " << out_dir << "\n";
  return 0;
}

struct FitPaths {
  std::string trace;
  std::string log;
  std::string adaptive;
  std::string checkpoint;
};

FitPaths fit_paths(const std::string& out_dir, const std::string& stem,
                   const std::string& mode, int chain, int n_chains) {
  const std::string suffix =
      n_chains > 1 ? "_chain" + std::to_string(chain) : std::string();
  FitPaths p;
  p.trace = (fs::path(out_dir) / (stem + "_" + mode + suffix + "_trace.jsonl")).string();
  p.log = (fs::path(out_dir) / (stem + "_" + mode + suffix + "_fit_log.csv")).string();
  p.adaptive = (fs::path(out_dir) / (stem + "_" + mode + suffix + "_adaptive.json")).string();
  p.checkpoint = (fs::path(out_dir) / (stem + "_" + mode + suffix + "_checkpoint.json")).string();
  return p;
}

int fit_one_chain(const CategoricalDataset& data, const Hyperparameters& hyper,
                  SamplerConfig cfg, const FitPaths& paths, int log_every,
                  int checkpoint_every, int stop_after, const std::string& resume) {
  GibbsSampler engine(data, hyper, cfg);

  std::ofstream log(paths.log, resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw ParseError("cannot write '" + paths.log + "'");
  if (resume.empty()) log << "phase,iter,loglik,nonempty_k\n";

  int current_phase = 0;
  RunHooks hooks;
  hooks.log_every = log_every;
  hooks.on_log = [&](int iter, double ll, int nz) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d,%d,%.10g,%d", current_phase, iter, ll, nz);
    log << buf << "\n";
    log.flush();
  };
  hooks.checkpoint_every = checkpoint_every;
  hooks.on_checkpoint = [&](const FitCheckpoint& ck) {
    write_checkpoint(ck, paths.checkpoint);
  };
  if (stop_after > 0) {
    hooks.stop_after = [&, stop_after](int iter) {
      const int done = current_phase == 0 ? iter : cfg.adaptive_iters + iter;
      return done >= stop_after;
    };
  }

  AdaptiveResult ar;
  std::optional<FitCheckpoint> ck;
  if (!resume.empty()) ck = read_checkpoint(resume);

  if (!ck || ck->phase == 0) {
    current_phase = 0;
    ar = ck ? engine.resume_adaptive(*ck, &hooks) : engine.run_adaptive(&hooks);
    if (engine.stopped()) {
      std::cout << "stopped during adaptive phase; checkpoint at " << paths.checkpoint << "\n";
      return 0;
    }
    json aj;
    aj["K_active"] = ar.K_active;
    aj["Ks_active"] = ar.Ks_active;
    aj["global_occupancy"] = ar.global_occupancy;
    aj["local_occupancy"] = ar.local_occupancy;
    std::ofstream out(paths.adaptive);
    out << aj.dump(2) << "\n";
  }

  current_phase = 1;
  ChainTrace trace;
  if (ck && ck->phase == 1) {
    trace = engine.resume_fixed(*ck, &hooks);
  } else {
    trace = engine.run_fixed(ar.K_active, ar.Ks_active, &hooks);
  }
  if (engine.stopped()) {
    std::cout << "stopped during fixed phase; checkpoint at " << paths.checkpoint << "\n";
    return 0;
  }
  write_trace(trace, paths.trace);
  std::cout << "K_active=" << trace.meta.K << " trace=" << paths.trace << " ("
            << trace.draws.size() << " draws)\n";
  return 0;
}

int run_fit(const std::string& config_path, const std::string& input,
            const std::string& mode_str, std::uint64_t seed, const std::string& out_dir,
            SamplerFlags& sf, int chains, int jobs, int log_every, int checkpoint_every,
            int stop_after, const std::string& resume, const CLI::Option* o_mode) {
  json cj;
  if (!config_path.empty()) cj = load_config_file(config_path);
  std::string mode_eff = mode_str;
  apply_cfg(cj, o_mode, "mode", mode_eff);
  sf.merge(cj);
  sf.cfg.mode = mode_from_string(mode_eff);
  sf.cfg.seed = seed;
  sf.cfg.validate();
  sf.hyper.validate();

  const CategoricalDataset data = load_csv(input);
  fs::create_directories(out_dir);
  const std::string stem = fs::path(input).stem().string();

  if (chains < 1) throw InvalidParameterError("--chains must be >= 1");
  std::vector<int> codes(chains, 0);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int c = next.fetch_add(1);
      if (c >= chains) return;
      SamplerConfig cc = sf.cfg;
      if (chains > 1) {
        cc.seed = derive_seed(seed, {kChainTag, static_cast<std::uint64_t>(c + 1)});
      }
      const FitPaths paths = fit_paths(out_dir, stem, mode_eff, c + 1, chains);
      try {
        codes[c] = fit_one_chain(data, sf.hyper, cc, paths, log_every, checkpoint_every,
                                 stop_after, resume);
      } catch (const DegenerateFitError& e) {
        std::cerr << "chain " << (c + 1) << ": " << e.what() << "\n";
        codes[c] = kExitDegenerate;
      }
    }
  };
  const int nw = std::max(1, std::min(jobs, chains));
  std::vector<std::thread> pool;
  for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (int c : codes) {
    if (c != 0) return c;
  }
  return 0;
}

int run_summarize(const std::string& trace_path, const std::string& data_path,
                  const std::string& truth_path, const std::string& out_dir,
                  std::string case_tag, int replicate) {
  const ChainTrace raw = read_trace(trace_path);
  const CategoricalDataset data = load_csv(data_path);
  fs::create_directories(out_dir);

  ChainTrace trace = raw;
  const SimilarityMatrix sim = build_similarity(trace);
  relabel_trace(trace, sim, trace.meta.K);
  const PosteriorSummary summary = summarize(trace, data, trace.meta.K);

  const std::string stem = fs::path(trace_path).stem().string();
  write_summary_json(summary, trace.meta,
                     (fs::path(out_dir) / (stem + "_summary.json")).string());
  write_modal_csv(summary, (fs::path(out_dir) / (stem + "_modal.csv")).string());
  write_nu_csv(summary, trace.meta, (fs::path(out_dir) / (stem + "_nu.csv")).string());

  if (!truth_path.empty()) {
    const SimulationTruth truth = load_truth_json(truth_path);
    const MetricBundle mb = evaluate(summary, truth, trace, data);
    TaggedMetrics tagged;
    tagged.sim_case = case_tag;
    tagged.mode = to_string(trace.meta.mode);
    tagged.replicate = replicate;
    tagged.metrics = mb;
    write_metrics_json(tagged, (fs::path(out_dir) / (stem + "_metrics.json")).string());
  }
  std::cout << "summary written for " << stem << " (K=" << summary.K
            << ", DIC=" << summary.dic << ")\n";
  return 0;
}

int run_compare(const std::string& in_dir, const std::vector<std::string>& inputs,
                const std::string& out_dir) {
  std::vector<std::string> files = inputs;
  if (!in_dir.empty()) {
    for (const auto& entry : fs::directory_iterator(in_dir)) {
      const std::string name = entry.path().filename().string();
      if (name.size() > 13 && name.substr(name.size() - 13) == "_metrics.json") {
        files.push_back(entry.path().string());
      }
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ParseError("compare: no metrics files found");
  std::vector<TaggedMetrics> all;
  for (const auto& f : files) all.push_back(read_metrics_json(f));
  fs::create_directories(out_dir);
  write_compare_tables(all, (fs::path(out_dir) / "comparison_table.csv").string(),
                       (fs::path(out_dir) / "comparison_detail.csv").string());
  std::cout << "aggregated " << all.size() << " metric file(s) into " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Overfitted-mixture profile clustering with an ordinal probit outcome"};
  app.require_subcommand(1);

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Generate replicate datasets with ground truth");
  SimulationConfig sim;
  std::string sim_case = "A";
  std::uint64_t sim_seed = 0;
  std::string sim_out = "sim_out";
  std::string sim_config;
  std::string sim_local_spec;
  auto* o_case = sim_cmd->add_option("--case", sim_case, "Simulation case (A or B)");
  auto* o_reps = sim_cmd->add_option("--replicates", sim.n_replicates, "Replicate count");
  auto* o_nps = sim_cmd->add_option("--n-per-subpop", sim.n_per_subpop, "Subjects per subpopulation");
  auto* o_subpops = sim_cmd->add_option("--subpops", sim.n_subpops, "Subpopulation count");
  auto* o_p = sim_cmd->add_option("--p", sim.p, "Exposure variable count");
  auto* o_d = sim_cmd->add_option("--d", sim.d, "Levels per exposure");
  sim_cmd->add_option("--split", sim.low_category_split,
                      "Share of non-top outcome mass on the lowest category");
  sim_cmd->add_option("--local-spec", sim_local_spec, "JSON local-pattern specification");
  sim_cmd->add_option("--seed", sim_seed, "Root seed")->required();
  sim_cmd->add_option("--out", sim_out, "Output directory");
  sim_cmd->add_option("--config", sim_config, "JSON config file");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Run the adaptive + fixed samplers on a dataset");
  std::string fit_input, fit_mode = "osrpc", fit_out = "fit_out", fit_config, fit_resume;
  std::uint64_t fit_seed = 0;
  int fit_chains = 1, fit_jobs = 1, fit_log_every = 50, fit_ckpt_every = 0, fit_stop_after = 0;
  SamplerFlags sf;
  fit_cmd->add_option("--input", fit_input, "Input CSV")->required();
  auto* o_mode = fit_cmd->add_option("--mode", fit_mode, "Model: osrpc or oslcm");
  fit_cmd->add_option("--seed", fit_seed, "Root seed")->required();
  fit_cmd->add_option("--out", fit_out, "Output directory");
  fit_cmd->add_option("--config", fit_config, "JSON config file");
  fit_cmd->add_option("--chains", fit_chains, "Independent chains");
  fit_cmd->add_option("--jobs", fit_jobs, "Worker threads for chains");
  fit_cmd->add_option("--log-every", fit_log_every, "Fit-log interval (iterations)");
  fit_cmd->add_option("--checkpoint-every", fit_ckpt_every, "Checkpoint interval (0 = off)");
  fit_cmd->add_option("--stop-after", fit_stop_after,
                      "Stop after this many total iterations (writes a checkpoint)");
  fit_cmd->add_option("--resume", fit_resume, "Resume from a checkpoint file");
  sf.add(fit_cmd);

  // summarize
  auto* sum_cmd = app.add_subcommand("summarize", "Post-process a trace into summaries");
  std::string sum_trace, sum_data, sum_truth, sum_out = "summary_out", sum_case = "A";
  int sum_replicate = 0;
  sum_cmd->add_option("--trace", sum_trace, "Trace file from fit")->required();
  sum_cmd->add_option("--data", sum_data, "Dataset CSV used in the fit")->required();
  sum_cmd->add_option("--truth", sum_truth, "Simulation truth JSON (enables metrics)");
  sum_cmd->add_option("--case", sum_case, "Case tag for the metrics file");
  sum_cmd->add_option("--replicate", sum_replicate, "Replicate tag for the metrics file");
  sum_cmd->add_option("--out", sum_out, "Output directory");

  // compare
  auto* cmp_cmd = app.add_subcommand("compare", "Aggregate replicate metrics into a table");
  std::string cmp_in, cmp_out = "compare_out";
  std::vector<std::string> cmp_inputs;
  cmp_cmd->add_option("--in", cmp_in, "Directory containing *_metrics.json files");
  cmp_cmd->add_option("--inputs", cmp_inputs, "Explicit metrics files");
  cmp_cmd->add_option("--out", cmp_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : kExitParse;
  }

  try {
    if (sim_cmd->parsed()) {
      return run_simulate(sim_config, sim, sim_case, sim_seed, sim_out, sim_local_spec,
                          o_case, o_reps, o_nps, o_subpops, o_p, o_d);
    }
    if (fit_cmd->parsed()) {
      return run_fit(fit_config, fit_input, fit_mode, fit_seed, fit_out, sf, fit_chains,
                     fit_jobs, fit_log_every, fit_ckpt_every, fit_stop_after, fit_resume,
                     o_mode);
    }
    if (sum_cmd->parsed()) {
      return run_summarize(sum_trace, sum_data, sum_truth, sum_out, sum_case, sum_replicate);
    }
    if (cmp_cmd->parsed()) {
      return run_compare(cmp_in, cmp_inputs, cmp_out);
    }
  } catch (const DegenerateFitError& e) {
    std::cerr << "degenerate fit: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const DecompositionError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  } catch (const InvalidParameterError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitParse;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
