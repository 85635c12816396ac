#pragma once

// Exploitability: how much a single agent gains by deviating from pi in the
// MDP induced by pi's own mean field. Zero exactly at a mean field equilibrium.

#include <optional>

#include "mfg/core.hpp"
#include "mfg/dp.hpp"
#include "mfg/env.hpp"

namespace mfg {

enum class EvalMethod { Exact, Stochastic };

struct ExploitabilityReport {
  double value = 0.0;
  double best_response_value = 0.0;
  double policy_value = 0.0;
  EvalMethod method = EvalMethod::Exact;
  std::optional<double> std_error;
};

/// Exploitability of pi against a mean field the caller already knows to be Psi(pi).
inline ExploitabilityReport exploitability_at(const EnvironmentSpec& env, const MeanField& induced, const Policy& pi) {
  ExploitabilityReport r;
  r.best_response_value = best_response_value(env, induced);
  r.policy_value = objective_value(env, induced, pi);
  r.value = r.best_response_value - r.policy_value;
  return r;
}

inline ExploitabilityReport exploitability_exact(const EnvironmentSpec& env, const Policy& pi,
                                                 std::size_t max_cells = kDefaultMaxTableCells) {
  check_capacity(env, max_cells);
  return exploitability_at(env, induced_mean_field(env, pi, max_cells), pi);
}

}  // namespace mfg
