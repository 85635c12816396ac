#pragma once

// JSON-configured solver sweeps. A sweep is the grid of (eta, seed) cells;
// each cell writes its iteration log as CSV, and the sweep writes a summary
// of trailing-window exploitability per eta plus a manifest holding the fully
// resolved configuration, so the manifest itself can be run again.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "mfg/core.hpp"
#include "mfg/dp.hpp"
#include "mfg/env.hpp"
#include "mfg/eval.hpp"
#include "mfg/rl.hpp"
#include "mfg/sim.hpp"
#include "mfg/solvers.hpp"
#include "mfg/taxi.hpp"

#ifndef MFG_VERSION
#define MFG_VERSION "unknown"
#endif

namespace mfg::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kBuiltinEnvs[] = {"lr", "toy_lr", "rps", "sis", "taxi"};
inline constexpr const char* kSolvers[] = {"exact", "boltzmann", "relent", "boltzmann_dqn"};
inline constexpr const char* kCsvHeader = "iteration,exploitability,mf_distance_prev,mf_distance_final,eta,elapsed_s";

struct PriorDescentSpec {
  std::size_t outer = 50;
  std::size_t inner = 100;
  std::optional<double> eta0;
  double c = 1.0;
};

struct TaxiSpec {
  std::string map{kDefaultTaxiMap};
  std::size_t horizon = 100;
};

struct ExperimentConfig {
  std::string env = "lr";
  std::string solver = "exact";
  std::vector<double> eta_grid;
  bool fp_policy = false;
  bool fp_meanfield = false;
  std::string prior = "uniform";
  std::optional<PriorDescentSpec> prior_descent;
  std::vector<std::uint64_t> seeds = {0};
  std::size_t iterations = 1000;
  std::string tie = "first_optimal";
  std::size_t window = 10;
  double convergence_tol = 1e-10;
  bool stop_on_convergence = false;
  ParticleConfig particles;
  rl::DqnHyperparams dqn;
  std::size_t eval_episodes = 500;
  TaxiSpec taxi;
  std::string output_dir = "results";
  std::size_t workers = 1;
  fs::path base_dir;  // relative file references resolve against this
};

// Parsing ------------------------------------------------------------------

namespace detail {

inline void flatten(const json& j, std::vector<double>& out) {
  if (j.is_array()) {
    for (const auto& x : j) flatten(x, out);
  } else {
    out.push_back(j.get<double>());
  }
}

inline std::vector<double> flat_numbers(const json& j, const std::string& key) {
  std::vector<double> out;
  if (!j.contains(key)) return out;
  try {
    flatten(j.at(key), out);
  } catch (const json::exception&) {
    throw ConfigError("'" + key + "' must be a (nested) array of numbers");
  }
  return out;
}

inline bool is_nonneg_int(const json& v) { return v.is_number_integer() && v.get<std::int64_t>() >= 0; }

inline fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace detail

/// Custom tabular game with rewards and transitions affine in mu_t.
inline EnvironmentSpec load_custom_environment(const fs::path& path) {
  json j = detail::read_json(path);
  AffineModel m;
  try {
    m.horizon = j.at("horizon").get<std::size_t>();
    m.num_states = j.at("num_states").get<std::size_t>();
    m.num_actions = j.at("num_actions").get<std::size_t>();
  } catch (const json::exception&) {
    throw ConfigError(path.string() + ": horizon, num_states and num_actions are required integers");
  }
  m.initial_dist = detail::flat_numbers(j, "initial_dist");
  m.reward_const = detail::flat_numbers(j, "reward_const");
  m.reward_linear = detail::flat_numbers(j, "reward_linear");
  m.trans_const = detail::flat_numbers(j, "trans_const");
  m.trans_linear = detail::flat_numbers(j, "trans_linear");
  return make_affine(j.value("name", path.stem().string()), std::move(m));
}

inline Policy load_policy(const fs::path& path) {
  json j = detail::read_json(path);
  try {
    const auto T = j.at("horizon").get<std::size_t>();
    const auto S = j.at("num_states").get<std::size_t>();
    const auto A = j.at("num_actions").get<std::size_t>();
    return Policy(T, S, A, detail::flat_numbers(j, "probs"));
  } catch (const json::exception&) {
    throw ConfigError(path.string() + ": policy needs horizon, num_states, num_actions and probs");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline bool is_builtin_env(const std::string& name) {
  return std::find(std::begin(kBuiltinEnvs), std::end(kBuiltinEnvs), name) != std::end(kBuiltinEnvs);
}

inline EnvironmentSpec make_tabular_environment(const ExperimentConfig& cfg) {
  if (cfg.env == "lr") return make_lr();
  if (cfg.env == "toy_lr") return make_toy_lr();
  if (cfg.env == "rps") return make_rps();
  if (cfg.env == "sis") return make_sis();
  if (cfg.env.rfind("custom:", 0) == 0) return load_custom_environment(detail::resolve(cfg.base_dir, cfg.env.substr(7)));
  throw ConfigError("environment '" + cfg.env + "' is not tabular");
}

/// Every problem found in a config document; empty means valid.
inline std::vector<std::string> check_config(const json& j, const fs::path& base_dir = {}) {
  std::vector<std::string> problems;
  if (!j.is_object()) return {"config must be a JSON object"};
  static const std::set<std::string> known = {
      "env",   "solver",     "eta_grid",  "fp_policy", "fp_meanfield",  "prior",         "prior_descent",
      "seeds", "iterations", "tie",       "window",    "convergence_tol", "stop_on_convergence", "particles",
      "dqn",   "eval_episodes", "taxi",   "output_dir", "workers"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) problems.push_back("unknown key '" + key + "'");

  auto type_check = [&](const char* key, bool ok, const char* what) {
    if (j.contains(key) && !ok) problems.push_back(std::string("'") + key + "' must be " + what);
  };
  auto is_count = [&](const char* key) { return j.contains(key) && detail::is_nonneg_int(j[key]); };

  const std::string env = j.value("env", std::string("lr"));
  type_check("env", j.contains("env") && j["env"].is_string(), "a string");
  if (j.contains("env") && j["env"].is_string()) {
    if (env.rfind("custom:", 0) == 0) {
      const auto path = detail::resolve(base_dir, env.substr(7));
      if (!fs::exists(path)) {
        problems.push_back("env: file not found: " + path.string());
      } else {
        try {
          load_custom_environment(path);
        } catch (const std::exception& e) {
          problems.push_back(std::string("env: ") + e.what());
        }
      }
    } else if (!is_builtin_env(env)) {
      problems.push_back("env: unknown environment '" + env + "'");
    }
  }

  const std::string solver = j.value("solver", std::string("exact"));
  type_check("solver", j.contains("solver") && j["solver"].is_string(), "a string");
  if (std::find(std::begin(kSolvers), std::end(kSolvers), solver) == std::end(kSolvers))
    problems.push_back("solver: unknown solver '" + solver + "'");
  if (env == "taxi" && solver != "boltzmann_dqn")
    problems.push_back("solver: taxi is only supported by boltzmann_dqn");

  const bool has_pd = j.contains("prior_descent") && !j["prior_descent"].is_null();
  if (j.contains("eta_grid")) {
    const auto& g = j["eta_grid"];
    bool ok = g.is_array();
    if (ok)
      for (const auto& x : g) ok = ok && x.is_number() && x.get<double>() >= 0.0 && std::isfinite(x.get<double>());
    if (!ok) problems.push_back("eta_grid must be an array of nonnegative numbers");
  }
  const bool grid_empty = !j.contains("eta_grid") || (j["eta_grid"].is_array() && j["eta_grid"].empty());
  const bool pd_eta0 = has_pd && j["prior_descent"].is_object() && j["prior_descent"].contains("eta0");
  if (solver != "exact" && grid_empty && !pd_eta0) problems.push_back("eta_grid is required for solver " + solver);
  if (solver == "exact" && !grid_empty) problems.push_back("eta_grid must be absent for solver exact");

  if (has_pd) {
    const auto& pd = j["prior_descent"];
    if (!pd.is_object()) {
      problems.push_back("prior_descent must be an object");
    } else {
      if (solver != "boltzmann" && solver != "relent")
        problems.push_back("prior_descent requires solver boltzmann or relent");
      for (const char* k : {"outer", "inner"})
        if (pd.contains(k) && !(detail::is_nonneg_int(pd[k]) && pd[k].get<std::size_t>() >= 1))
          problems.push_back(std::string("prior_descent.") + k + " must be an integer >= 1");
      if (pd.contains("c") && !(pd["c"].is_number() && pd["c"].get<double>() >= 1.0))
        problems.push_back("prior_descent.c must be a number >= 1");
      if (pd.contains("eta0") && !(pd["eta0"].is_number() && pd["eta0"].get<double>() > 0.0))
        problems.push_back("prior_descent.eta0 must be positive");
      for (const auto& [k, _] : pd.items())
        if (k != "outer" && k != "inner" && k != "eta0" && k != "c")
          problems.push_back("prior_descent: unknown key '" + k + "'");
    }
  }
  if (has_pd && !grid_empty && j["eta_grid"].is_array())
    for (const auto& x : j["eta_grid"])
      if (x.is_number() && !(x.get<double>() > 0.0)) problems.push_back("prior_descent needs positive eta0 values");

  type_check("fp_policy", j.contains("fp_policy") && j["fp_policy"].is_boolean(), "a boolean");
  type_check("fp_meanfield", j.contains("fp_meanfield") && j["fp_meanfield"].is_boolean(), "a boolean");
  type_check("stop_on_convergence", j.contains("stop_on_convergence") && j["stop_on_convergence"].is_boolean(),
             "a boolean");
  if (solver == "boltzmann_dqn" && (j.value("fp_policy", false) || j.value("fp_meanfield", false)))
    problems.push_back("fictitious play is not combined with boltzmann_dqn");

  if (j.contains("prior")) {
    if (!j["prior"].is_string()) {
      problems.push_back("prior must be \"uniform\" or \"from_file:<path>\"");
    } else {
      const auto prior = j["prior"].get<std::string>();
      if (prior.rfind("from_file:", 0) == 0) {
        const auto path = detail::resolve(base_dir, prior.substr(10));
        if (!fs::exists(path)) problems.push_back("prior: file not found: " + path.string());
        if (env == "taxi") problems.push_back("prior: taxi supports only the uniform prior");
      } else if (prior != "uniform") {
        problems.push_back("prior must be \"uniform\" or \"from_file:<path>\"");
      }
    }
  }

  if (j.contains("seeds")) {
    const auto& s = j["seeds"];
    bool ok = s.is_array();
    if (ok)
      for (const auto& x : s) ok = ok && detail::is_nonneg_int(x);
    if (!ok) problems.push_back("seeds must be an array of nonnegative integers");
    else if (s.empty()) problems.push_back("seeds must not be empty");
  }
  if (j.contains("iterations") && !(is_count("iterations") && j["iterations"].get<std::size_t>() >= 1))
    problems.push_back("iterations must be an integer >= 1");
  if (j.contains("window") && !(is_count("window") && j["window"].get<std::size_t>() >= 1))
    problems.push_back("window must be an integer >= 1");
  if (j.contains("workers") && !(is_count("workers") && j["workers"].get<std::size_t>() >= 1))
    problems.push_back("workers must be an integer >= 1");
  if (j.contains("eval_episodes") && !(is_count("eval_episodes") && j["eval_episodes"].get<std::size_t>() >= 1))
    problems.push_back("eval_episodes must be an integer >= 1");
  if (j.contains("tie") && !(j["tie"] == "first_optimal" || j["tie"] == "uniform_over_optimal"))
    problems.push_back("tie must be \"first_optimal\" or \"uniform_over_optimal\"");
  if (j.contains("convergence_tol") && !(j["convergence_tol"].is_number() && j["convergence_tol"].get<double>() >= 0))
    problems.push_back("convergence_tol must be a number >= 0");
  type_check("output_dir", j.contains("output_dir") && j["output_dir"].is_string(), "a string");

  if (j.contains("particles")) {
    const auto& p = j["particles"];
    if (!p.is_object()) {
      problems.push_back("particles must be an object {K, M}");
    } else {
      for (const auto& [k, v] : p.items()) {
        if (k != "K" && k != "M") problems.push_back("particles: unknown key '" + k + "'");
        else if (!(detail::is_nonneg_int(v) && v.get<std::size_t>() >= 1))
          problems.push_back("particles." + k + " must be an integer >= 1");
      }
    }
  }
  if (j.contains("dqn")) {
    if (!j["dqn"].is_object()) {
      problems.push_back("dqn must be an object");
    } else {
      const json defaults = rl::DqnHyperparams{};
      for (const auto& [k, _] : j["dqn"].items())
        if (!defaults.contains(k)) problems.push_back("dqn: unknown key '" + k + "'");
      try {
        j["dqn"].get<rl::DqnHyperparams>().validate();
      } catch (const std::exception& e) {
        problems.push_back(std::string("dqn: ") + e.what());
      }
    }
  }
  if (j.contains("taxi")) {
    const auto& t = j["taxi"];
    if (!t.is_object()) {
      problems.push_back("taxi must be an object {map, horizon}");
    } else {
      try {
        TaxiParams params;
        params.horizon = t.value("horizon", std::size_t{100});
        make_taxi(t.value("map", std::string(kDefaultTaxiMap)), params);
        if (params.horizon < 1) problems.push_back("taxi.horizon must be >= 1");
      } catch (const std::exception& e) {
        problems.push_back(std::string("taxi: ") + e.what());
      }
    }
  }
  return problems;
}

/// Parses and validates; throws ConfigError listing every problem.
inline ExperimentConfig parse_config(const json& doc, const fs::path& base_dir = {}) {
  // A manifest written by run() carries the resolved config under "config".
  const json& j = doc.is_object() && doc.contains("config") && doc.contains("cells") ? doc["config"] : doc;
  auto problems = check_config(j, base_dir);
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
  ExperimentConfig c;
  c.base_dir = base_dir;
  c.env = j.value("env", c.env);
  c.solver = j.value("solver", c.solver);
  c.eta_grid = j.value("eta_grid", c.eta_grid);
  c.fp_policy = j.value("fp_policy", c.fp_policy);
  c.fp_meanfield = j.value("fp_meanfield", c.fp_meanfield);
  c.prior = j.value("prior", c.prior);
  if (j.contains("prior_descent") && !j["prior_descent"].is_null()) {
    const auto& pd = j["prior_descent"];
    PriorDescentSpec s;
    s.outer = pd.value("outer", s.outer);
    s.inner = pd.value("inner", s.inner);
    s.c = pd.value("c", s.c);
    if (pd.contains("eta0")) s.eta0 = pd["eta0"].get<double>();
    c.prior_descent = s;
    if (c.eta_grid.empty()) c.eta_grid = {*s.eta0};
  }
  c.seeds = j.value("seeds", c.seeds);
  c.iterations = j.value("iterations", c.iterations);
  c.tie = j.value("tie", c.tie);
  c.window = j.value("window", c.window);
  c.convergence_tol = j.value("convergence_tol", c.convergence_tol);
  c.stop_on_convergence = j.value("stop_on_convergence", c.stop_on_convergence);
  if (j.contains("particles")) {
    c.particles.num_meanfields = j["particles"].value("K", c.particles.num_meanfields);
    c.particles.num_particles = j["particles"].value("M", c.particles.num_particles);
  }
  if (j.contains("dqn")) c.dqn = j["dqn"].get<rl::DqnHyperparams>();
  c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
  if (j.contains("taxi")) {
    c.taxi.map = j["taxi"].value("map", c.taxi.map);
    c.taxi.horizon = j["taxi"].value("horizon", c.taxi.horizon);
  }
  c.output_dir = j.value("output_dir", c.output_dir);
  c.workers = j.value("workers", c.workers);
  return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
  return parse_config(detail::read_json(path), fs::absolute(path).parent_path());
}

/// The fully resolved config; running it again reproduces the sweep.
inline json to_json(const ExperimentConfig& c) {
  auto abs_ref = [&](const std::string& ref, const std::string& prefix) {
    if (ref.rfind(prefix, 0) != 0) return ref;
    return prefix + fs::absolute(detail::resolve(c.base_dir, ref.substr(prefix.size()))).lexically_normal().string();
  };
  json j = {{"env", abs_ref(c.env, "custom:")},
            {"solver", c.solver},
            {"fp_policy", c.fp_policy},
            {"fp_meanfield", c.fp_meanfield},
            {"prior", abs_ref(c.prior, "from_file:")},
            {"seeds", c.seeds},
            {"iterations", c.iterations},
            {"tie", c.tie},
            {"window", c.window},
            {"convergence_tol", c.convergence_tol},
            {"stop_on_convergence", c.stop_on_convergence},
            {"particles", {{"K", c.particles.num_meanfields}, {"M", c.particles.num_particles}}},
            {"dqn", c.dqn},
            {"eval_episodes", c.eval_episodes},
            {"taxi", {{"map", c.taxi.map}, {"horizon", c.taxi.horizon}}},
            {"output_dir", c.output_dir},
            {"workers", c.workers}};
  if (c.solver != "exact") j["eta_grid"] = c.eta_grid;
  if (c.prior_descent) {
    j["prior_descent"] = {{"outer", c.prior_descent->outer}, {"inner", c.prior_descent->inner}, {"c", c.prior_descent->c}};
    if (c.prior_descent->eta0) j["prior_descent"]["eta0"] = *c.prior_descent->eta0;
  }
  return j;
}

// Running --------------------------------------------------------------------

struct CellResult {
  double eta = 0.0;
  std::uint64_t seed = 0;
  std::string file;
  bool ok = false;
  std::string error;
  std::vector<IterationRecord> records;
  WindowStats trailing;
  bool converged = false;
  std::optional<std::size_t> limit_cycle_period;
};

struct SweepResult {
  std::vector<CellResult> cells;
  fs::path output_dir;
  std::optional<double> prior_exploitability;

  bool all_ok() const {
    return std::all_of(cells.begin(), cells.end(), [](const CellResult& c) { return c.ok; });
  }
};

inline std::string format_eta(double eta) {
  std::ostringstream s;
  s << std::setprecision(6) << eta;
  return s.str();
}

inline std::string cell_file_name(double eta, std::uint64_t seed) {
  return "cell_eta" + format_eta(eta) + "_seed" + std::to_string(seed) + ".csv";
}

inline void write_cell_csv(const fs::path& path, const std::vector<IterationRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kCsvHeader << '\n' << std::setprecision(17);
  for (const auto& r : records)
    out << r.index << ',' << r.exploitability << ',' << r.mf_distance_prev << ',' << r.mf_distance_final << ','
        << r.eta << ',' << r.elapsed_s << '\n';
}

namespace detail {

inline Policy tabular_prior(const ExperimentConfig& cfg, const EnvironmentSpec& env) {
  if (cfg.prior.rfind("from_file:", 0) == 0) {
    Policy p = load_policy(resolve(cfg.base_dir, cfg.prior.substr(10)));
    if (p.horizon() != env.horizon || p.num_states() != env.num_states || p.num_actions() != env.num_actions)
      throw ConfigError("prior: shape does not match environment " + env.name);
    return p;
  }
  return Policy::uniform(env.horizon, env.num_states, env.num_actions);
}

inline CellResult run_tabular_cell(const ExperimentConfig& cfg, const EnvironmentSpec& env, const Policy& prior,
                                   double eta, std::uint64_t seed) {
  CellResult cell;
  SolverConfig sc;
  sc.max_iterations = cfg.iterations;
  sc.tie = cfg.tie == "uniform_over_optimal" ? TieRule::UniformOverOptimal : TieRule::FirstOptimal;
  sc.fp_average_policy = cfg.fp_policy;
  sc.fp_average_meanfield = cfg.fp_meanfield;
  sc.prior = prior;
  sc.convergence_tol = cfg.convergence_tol;
  sc.stop_on_convergence = cfg.stop_on_convergence;
  sc.seed = seed;
  sc.window = cfg.window;
  // Temperature zero in a softmax sweep is the exact iteration.
  if (cfg.solver == "exact" || eta == 0.0) {
    sc.mode = SolverMode::Exact;
  } else {
    sc.mode = cfg.solver == "relent" ? SolverMode::RelEnt : SolverMode::Boltzmann;
    sc.eta = eta;
  }
  IterationLog log;
  if (cfg.prior_descent) {
    PriorDescentConfig pd;
    pd.outer_iterations = cfg.prior_descent->outer;
    pd.inner_iterations = cfg.prior_descent->inner;
    pd.eta0 = eta;
    pd.c = cfg.prior_descent->c;
    pd.base = sc;
    log = prior_descent(env, pd);
  } else {
    log = solve(env, sc);
  }
  cell.records = std::move(log.records);
  cell.trailing = log.trailing;
  cell.converged = log.converged;
  cell.limit_cycle_period = log.limit_cycle_period;
  return cell;
}

template <SampledModel Model>
CellResult run_dqn_cell(const ExperimentConfig& cfg, const Model& model, rl::PolicyFn<typename Model::State> prior,
                        double eta, std::uint64_t seed, std::ostream* progress) {
  rl::DqnIterationConfig dc;
  dc.eta = eta;
  dc.iterations = cfg.iterations;
  dc.particles = cfg.particles;
  dc.dqn = cfg.dqn;
  dc.eval_episodes = cfg.eval_episodes;
  dc.seed = seed;
  dc.window = cfg.window;
  static std::mutex progress_mutex;
  auto on_record = [&](const IterationRecord& r) {
    if (!progress) return;
    std::lock_guard lock(progress_mutex);
    *progress << "eta=" << format_eta(eta) << " seed=" << seed << " iteration " << r.index
              << " exploitability " << r.exploitability << '\n';
  };
  auto res = rl::boltzmann_dqn_iteration(model, dc, std::move(prior), on_record);
  CellResult cell;
  cell.records = std::move(res.log.records);
  cell.trailing = res.log.trailing;
  return cell;
}

}  // namespace detail

/// Runs every (eta, seed) cell on cfg.workers threads, then writes the
/// summary and manifest. Cell failures are recorded and do not stop the sweep.
inline SweepResult run(const ExperimentConfig& cfg, std::ostream* progress = nullptr) {
  SweepResult sweep;
  sweep.output_dir = cfg.output_dir;

  const bool dqn = cfg.solver == "boltzmann_dqn";
  const bool taxi = cfg.env == "taxi";
  std::optional<EnvironmentSpec> env;
  std::optional<Policy> prior;
  if (!taxi) {
    env = make_tabular_environment(cfg);
    prior = detail::tabular_prior(cfg, *env);
    sweep.prior_exploitability = exploitability_exact(*env, *prior).value;
  }
  fs::create_directories(sweep.output_dir);
  TaxiParams taxi_params;
  taxi_params.horizon = cfg.taxi.horizon;

  const std::vector<double> etas = cfg.solver == "exact" ? std::vector<double>{0.0} : cfg.eta_grid;
  for (double eta : etas)
    for (auto seed : cfg.seeds) {
      CellResult c;
      c.eta = eta;
      c.seed = seed;
      c.file = cell_file_name(eta, seed);
      sweep.cells.push_back(c);
    }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < sweep.cells.size(); i = next++) {
      CellResult& slot = sweep.cells[i];
      try {
        CellResult r;
        if (taxi) {
          const auto model = make_taxi(cfg.taxi.map, taxi_params);
          r = detail::run_dqn_cell(cfg, model, rl::uniform_policy<TaxiState>(model.num_actions()), slot.eta,
                                   slot.seed, progress);
        } else if (dqn) {
          const TabularModel model(*env);
          r = detail::run_dqn_cell(cfg, model, rl::table_policy(*prior), slot.eta, slot.seed, progress);
        } else {
          r = detail::run_tabular_cell(cfg, *env, *prior, slot.eta, slot.seed);
        }
        write_cell_csv(sweep.output_dir / slot.file, r.records);
        r.eta = slot.eta;
        r.seed = slot.seed;
        r.file = slot.file;
        r.ok = true;
        slot = std::move(r);
      } catch (const std::exception& e) {
        slot.ok = false;
        slot.error = e.what();
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(cfg.workers, sweep.cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  // Summary: trailing-window statistics averaged over the successful seeds of each eta.
  std::ofstream summary(sweep.output_dir / "summary.csv");
  if (!summary) throw std::runtime_error("cannot write summary.csv");
  summary << "eta,seeds,failed,window,min_exploitability,mean_exploitability,max_exploitability,"
             "final_exploitability,converged\n"
          << std::setprecision(17);
  for (double eta : etas) {
    std::size_t ok = 0, failed = 0, converged = 0;
    double mn = 0.0, mean = 0.0, mx = 0.0, fin = 0.0;
    for (const auto& c : sweep.cells) {
      if (c.eta != eta) continue;
      if (!c.ok) {
        ++failed;
        continue;
      }
      ++ok;
      converged += c.converged;
      mn += c.trailing.min;
      mean += c.trailing.mean;
      mx += c.trailing.max;
      fin += c.records.back().exploitability;
    }
    summary << format_eta(eta) << ',' << ok << ',' << failed << ',' << cfg.window << ',';
    if (ok) {
      const double n = static_cast<double>(ok);
      summary << mn / n << ',' << mean / n << ',' << mx / n << ',' << fin / n << ',' << converged << '\n';
    } else {
      summary << ",,,," << converged << '\n';
    }
  }

  json cells = json::array();
  for (const auto& c : sweep.cells) {
    json jc = {{"eta", c.eta}, {"seed", c.seed}, {"file", c.file}, {"status", c.ok ? "ok" : "failed"}};
    if (!c.ok) jc["error"] = c.error;
    if (c.ok) {
      jc["iterations"] = c.records.size();
      jc["converged"] = c.converged;
      jc["limit_cycle_period"] = c.limit_cycle_period ? json(*c.limit_cycle_period) : json(nullptr);
    }
    cells.push_back(jc);
  }
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::ostringstream stamp;
  stamp << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
  json manifest = {{"tool", "mfg"}, {"version", MFG_VERSION}, {"created", stamp.str()},
                   {"config", to_json(cfg)}, {"cells", cells}};
  if (sweep.prior_exploitability) manifest["prior_exploitability"] = *sweep.prior_exploitability;
  std::ofstream(sweep.output_dir / "manifest.json") << manifest.dump(2) << '\n';
  return sweep;
}

}  // namespace mfg::experiment
