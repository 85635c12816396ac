#pragma once

// Fixed-point iterations mu -> Psi(Phi(mu)) on tabular games:
//   exact      Phi = greedy policy of Q*
//   boltzmann  Phi = softmax of Q* / eta weighted by the prior
//   relent     Phi = softmax of the soft Q / eta weighted by the prior
// with optional fictitious-play averaging of policies and/or mean fields,
// and prior descent as an outer loop re-anchoring the prior.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mfg/core.hpp"
#include "mfg/dp.hpp"
#include "mfg/env.hpp"
#include "mfg/eval.hpp"

namespace mfg {

enum class SolverMode { Exact, Boltzmann, RelEnt };

inline const char* to_string(SolverMode m) {
  switch (m) {
    case SolverMode::Exact: return "exact";
    case SolverMode::Boltzmann: return "boltzmann";
    case SolverMode::RelEnt: return "relent";
  }
  return "?";
}

struct SolverConfig {
  std::size_t max_iterations = 1000;
  SolverMode mode = SolverMode::Exact;
  std::optional<double> eta;  // required unless mode == Exact
  TieRule tie = TieRule::FirstOptimal;
  bool fp_average_policy = false;
  bool fp_average_meanfield = false;
  std::optional<Policy> prior;                  // uniform when absent
  std::optional<MeanField> initial_meanfield;   // Psi(prior) when absent
  double convergence_tol = 1e-10;               // on successive d_M
  bool stop_on_convergence = false;             // fixed budget unless set
  std::uint64_t seed = 0;                       // recorded only; the tabular path is deterministic
  std::size_t window = 10;                      // trailing exploitability statistics
  std::size_t history = 64;                     // retained mean-field snapshots
  std::size_t max_period = 8;                   // longest limit cycle looked for
  double cycle_tol = 1e-9;
  std::size_t max_table_cells = kDefaultMaxTableCells;

  void validate() const {
    if (max_iterations < 1) throw ConfigError("solver: max_iterations must be >= 1");
    if (!(convergence_tol >= 0.0)) throw ConfigError("solver: convergence_tol must be >= 0");
    if (mode == SolverMode::Exact && eta) throw ConfigError("solver: exact mode takes no temperature");
    if (mode != SolverMode::Exact && (!eta || !(*eta > 0.0)))
      throw ConfigError(std::string("solver: ") + to_string(mode) + " mode needs a positive temperature");
    if (window < 1) throw ConfigError("solver: window must be >= 1");
  }
};

struct IterationRecord {
  std::size_t index = 0;
  std::size_t outer = 0;
  double exploitability = 0.0;
  double mf_distance_prev = 0.0;   // d_M(mu^{k+1}, mu^k)
  double mf_distance_final = 0.0;  // d_M(mu^{k+1}, final mean field)
  double eta = 0.0;                // 0 for exact iteration
  double elapsed_s = 0.0;
};

struct WindowStats {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

struct IterationLog {
  std::vector<IterationRecord> records;
  Policy final_policy;
  MeanField final_meanfield;
  bool converged = false;
  std::optional<std::size_t> limit_cycle_period;
  std::deque<MeanField> history;  // trailing mean fields mu^{k+1}, oldest first
  WindowStats trailing;
};

inline WindowStats trailing_stats(const std::vector<IterationRecord>& records, std::size_t window) {
  WindowStats w;
  if (records.empty()) return w;
  const std::size_t n = std::min(window, records.size());
  w.min = std::numeric_limits<double>::infinity();
  w.max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (std::size_t i = records.size() - n; i < records.size(); ++i) {
    const double e = records[i].exploitability;
    w.min = std::min(w.min, e);
    w.max = std::max(w.max, e);
    sum += e;
  }
  w.mean = sum / static_cast<double>(n);
  return w;
}

/// Smallest p <= max_period with d_M(mu^k, mu^{k-p}) < tol over the last
/// max_period retained snapshots; nullopt if none.
inline std::optional<std::size_t> detect_limit_cycle(const std::deque<MeanField>& history, std::size_t max_period,
                                                     double tol = 1e-9) {
  if (max_period < 1) throw ArgumentError("detect_limit_cycle: max_period must be >= 1");
  if (history.size() < 2 * max_period)
    throw ArgumentError("detect_limit_cycle: need at least 2 * max_period snapshots");
  const std::size_t n = history.size();
  for (std::size_t p = 1; p <= max_period; ++p) {
    bool periodic = true;
    for (std::size_t k = n - max_period; k < n && periodic; ++k)
      periodic = meanfield_distance(history[k], history[k - p]) < tol;
    if (periodic) return p;
  }
  return std::nullopt;
}

inline std::optional<std::size_t> detect_limit_cycle(const IterationLog& log, std::size_t max_period,
                                                     double tol = 1e-9) {
  return detect_limit_cycle(log.history, max_period, tol);
}

namespace detail {

inline Policy select_policy(const EnvironmentSpec& env, const SolverConfig& cfg, const MeanField& mu,
                            const Policy& prior) {
  switch (cfg.mode) {
    case SolverMode::Exact: return greedy_policy(optimal_q(env, mu, 1.0, cfg.max_table_cells), cfg.tie);
    case SolverMode::Boltzmann: {
      const Temperature eta(*cfg.eta);
      return boltzmann_policy(optimal_q(env, mu, 1.0, cfg.max_table_cells), eta, prior);
    }
    case SolverMode::RelEnt: {
      const Temperature eta(*cfg.eta);
      return boltzmann_policy(soft_q(env, mu, eta, prior, cfg.max_table_cells), eta, prior);
    }
  }
  throw ConfigError("solver: unknown mode");
}

inline IterationLog iterate(const EnvironmentSpec& env, const SolverConfig& cfg) {
  cfg.validate();
  check_capacity(env, cfg.max_table_cells);
  const Policy prior = cfg.prior ? *cfg.prior : Policy::uniform(env.horizon, env.num_states, env.num_actions);
  if (!prior.same_shape(Policy::uniform(env.horizon, env.num_states, env.num_actions)))
    throw DimensionError("solver: prior shape does not match environment");
  if (cfg.mode != SolverMode::Exact) require_prior(prior);

  const auto start = std::chrono::steady_clock::now();
  MeanField mu = cfg.initial_meanfield ? *cfg.initial_meanfield : induced_mean_field(env, prior, cfg.max_table_cells);
  if (mu.horizon() != env.horizon || mu.num_states() != env.num_states)
    throw DimensionError("solver: initial mean field shape does not match environment");

  IterationLog log;
  std::vector<MeanField> all;  // mu^{k+1} for every iteration, for mf_distance_final
  Policy prev_policy;
  for (std::size_t k = 0; k < cfg.max_iterations; ++k) {
    Policy pi = select_policy(env, cfg, mu, prior);
    if (cfg.fp_average_policy && k > 0) pi = mix(pi, prev_policy, 1.0 / static_cast<double>(k + 1));

    MeanField induced = induced_mean_field(env, pi, cfg.max_table_cells);
    const double exploitability = exploitability_at(env, induced, pi).value;
    MeanField next = cfg.fp_average_meanfield && k > 0 ? mix(induced, mu, 1.0 / static_cast<double>(k + 1))
                                                       : std::move(induced);

    IterationRecord rec;
    rec.index = k;
    rec.exploitability = exploitability;
    rec.mf_distance_prev = meanfield_distance(next, mu);
    rec.eta = cfg.eta.value_or(0.0);
    rec.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.records.push_back(rec);

    all.push_back(next);
    log.history.push_back(next);
    if (log.history.size() > cfg.history) log.history.pop_front();
    mu = std::move(next);
    prev_policy = std::move(pi);
    if (cfg.stop_on_convergence && rec.mf_distance_prev < cfg.convergence_tol) break;
  }

  log.final_policy = std::move(prev_policy);
  log.final_meanfield = mu;
  for (std::size_t k = 0; k < log.records.size(); ++k)
    log.records[k].mf_distance_final = meanfield_distance(all[k], log.final_meanfield);
  log.converged = log.records.back().mf_distance_prev < cfg.convergence_tol;
  if (log.converged) {
    log.limit_cycle_period = 1;
  } else {
    const std::size_t max_period = std::min(cfg.max_period, log.history.size() / 2);
    if (max_period >= 1) log.limit_cycle_period = detect_limit_cycle(log.history, max_period, cfg.cycle_tol);
  }
  log.trailing = trailing_stats(log.records, cfg.window);
  return log;
}

}  // namespace detail

/// Exact fixed point iteration with greedy policies.
inline IterationLog exact_fpi(const EnvironmentSpec& env, SolverConfig cfg) {
  if (cfg.mode != SolverMode::Exact) throw ConfigError("exact_fpi: mode must be exact");
  return detail::iterate(env, cfg);
}

/// Boltzmann (softmax over Q*) or RelEnt (softmax over soft Q) iteration.
inline IterationLog boltzmann_iteration(const EnvironmentSpec& env, SolverConfig cfg) {
  if (cfg.mode == SolverMode::Exact) throw ConfigError("boltzmann_iteration: mode must be boltzmann or relent");
  return detail::iterate(env, cfg);
}

/// Dispatches on cfg.mode.
inline IterationLog solve(const EnvironmentSpec& env, const SolverConfig& cfg) { return detail::iterate(env, cfg); }

struct PriorDescentConfig {
  std::size_t outer_iterations = 50;
  std::size_t inner_iterations = 100;
  double eta0 = 1.0;
  double c = 1.0;  // eta_{i+1} = eta_i * c
  SolverConfig base;  // mode must be boltzmann or relent; eta and max_iterations are overridden

  void validate() const {
    if (outer_iterations < 1) throw ConfigError("prior descent: outer_iterations must be >= 1");
    if (inner_iterations < 1) throw ConfigError("prior descent: inner_iterations must be >= 1");
    if (!(eta0 > 0.0)) throw ConfigError("prior descent: eta0 must be positive");
    if (!(c >= 1.0)) throw ConfigError("prior descent: c must be >= 1");
    if (base.mode == SolverMode::Exact) throw ConfigError("prior descent: mode must be boltzmann or relent");
  }
};

/// Entries of a policy promoted to prior are floored here so the next
/// prior stays strictly positive after underflow at low temperature.
inline constexpr double kMinPriorMass = 1e-300;

inline Policy as_prior(const Policy& pi) {
  std::vector<double> flat(pi.flat().begin(), pi.flat().end());
  for (double& x : flat) x = std::max(x, kMinPriorMass);
  for (std::size_t off = 0; off < flat.size(); off += pi.num_actions()) {
    double sum = 0.0;
    for (std::size_t a = 0; a < pi.num_actions(); ++a) sum += flat[off + a];
    for (std::size_t a = 0; a < pi.num_actions(); ++a) flat[off + a] /= sum;
  }
  return Policy(pi.horizon(), pi.num_states(), pi.num_actions(), std::move(flat));
}

/// Runs the inner iteration, replaces the prior by its final policy and
/// multiplies the temperature by c, `outer_iterations` times. Records carry
/// their outer index; trailing statistics refer to the last outer iteration.
inline IterationLog prior_descent(const EnvironmentSpec& env, const PriorDescentConfig& cfg) {
  cfg.validate();
  Policy prior = cfg.base.prior ? *cfg.base.prior : Policy::uniform(env.horizon, env.num_states, env.num_actions);
  double eta = cfg.eta0;
  IterationLog out;
  double elapsed_offset = 0.0;
  for (std::size_t i = 0; i < cfg.outer_iterations; ++i) {
    SolverConfig inner = cfg.base;
    inner.eta = eta;
    inner.prior = prior;
    inner.max_iterations = cfg.inner_iterations;
    if (i > 0) inner.initial_meanfield.reset();
    IterationLog log = boltzmann_iteration(env, inner);
    for (auto rec : log.records) {
      rec.outer = i;
      rec.index = out.records.size();
      rec.elapsed_s += elapsed_offset;
      out.records.push_back(rec);
    }
    elapsed_offset = out.records.back().elapsed_s;
    out.trailing = log.trailing;
    out.converged = log.converged;
    out.limit_cycle_period = log.limit_cycle_period;
    out.history = std::move(log.history);
    out.final_meanfield = std::move(log.final_meanfield);
    out.final_policy = std::move(log.final_policy);
    prior = as_prior(out.final_policy);
    eta *= cfg.c;
  }
  return out;
}

}  // namespace mfg
