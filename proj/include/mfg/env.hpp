#pragma once

// Finite mean field game models: horizon, state/action sets, initial
// distribution and mean-field dependent transition kernel and reward.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfg/core.hpp"

namespace mfg {

/// p(. | s, a, mu_t) as a dense row over next states.
using TransitionFn = std::function<std::vector<double>(std::size_t s, std::size_t a, std::span<const double> mu_t)>;
/// r(s, a, mu_t).
using RewardFn = std::function<double(std::size_t s, std::size_t a, std::span<const double> mu_t)>;

struct EnvironmentSpec {
  std::string name;
  std::size_t horizon = 0;
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  ProbVec initial_dist;
  TransitionFn transition;
  RewardFn reward;
  std::vector<std::string> state_labels;
  std::vector<std::string> action_labels;
  // Upper bound on |r| over all valid inputs.
  double reward_bound = 0.0;

  std::vector<double> transition_row(std::size_t s, std::size_t a, std::span<const double> mu_t) const {
    auto row = transition(s, a, mu_t);
    if (row.size() != num_states) throw DimensionError(name + ": transition row has wrong length");
    return row;
  }

  std::size_t table_cells() const { return horizon * num_states * num_actions; }
};

/// Throws ConfigError unless the shape is consistent and the kernel yields
/// valid distributions at every probed mean-field row.
inline void validate_environment(const EnvironmentSpec& env, std::span<const std::vector<double>> probes) {
  if (env.horizon == 0 || env.num_states == 0 || env.num_actions == 0)
    throw ConfigError(env.name + ": empty dimension");
  if (env.initial_dist.size() != env.num_states) throw ConfigError(env.name + ": initial distribution length");
  if (!env.transition || !env.reward) throw ConfigError(env.name + ": missing transition or reward");
  for (const auto& mu : probes) {
    if (mu.size() != env.num_states) throw ConfigError(env.name + ": probe length");
    for (std::size_t s = 0; s < env.num_states; ++s)
      for (std::size_t a = 0; a < env.num_actions; ++a) {
        auto row = env.transition(s, a, mu);
        if (row.size() != env.num_states) throw ConfigError(env.name + ": transition row length");
        double sum = 0.0;
        for (double p : row) {
          if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError(env.name + ": invalid transition probability");
          sum += p;
        }
        if (std::abs(sum - 1.0) > kSimplexTolerance) throw ConfigError(env.name + ": transition row does not sum to 1");
        if (!std::isfinite(env.reward(s, a, mu))) throw ConfigError(env.name + ": non-finite reward");
      }
  }
}

namespace detail {

// Next state is the chosen action, offset past the start state(s).
inline TransitionFn pick_next_state(std::size_t num_states, std::size_t offset) {
  return [num_states, offset](std::size_t, std::size_t a, std::span<const double>) {
    std::vector<double> row(num_states, 0.0);
    row[a + offset] = 1.0;
    return row;
  };
}

inline EnvironmentSpec left_right(std::string name, double left_weight, double right_weight) {
  enum : std::size_t { C = 0, L = 1, R = 2 };
  EnvironmentSpec env;
  env.name = std::move(name);
  env.horizon = 2;
  env.num_states = 3;
  env.num_actions = 2;
  env.initial_dist = ProbVec::dirac(3, C);
  env.transition = pick_next_state(3, 1);
  env.reward = [left_weight, right_weight](std::size_t s, std::size_t, std::span<const double> mu) {
    if (s == L) return -left_weight * mu[L];
    if (s == R) return -right_weight * mu[R];
    return 0.0;
  };
  env.state_labels = {"C", "L", "R"};
  env.action_labels = {"L", "R"};
  env.reward_bound = std::max(left_weight, right_weight);
  return env;
}

}  // namespace detail

/// Left-right crowd aversion where crowding on the right costs twice as much.
inline EnvironmentSpec make_lr() { return detail::left_right("lr", 1.0, 2.0); }

/// Symmetric left-right game: every MFE splits the population evenly.
inline EnvironmentSpec make_toy_lr() { return detail::left_right("toy_lr", 1.0, 1.0); }

/// Rock-paper-scissors with asymmetric payoffs so that uniform play is not an equilibrium.
inline EnvironmentSpec make_rps() {
  enum : std::size_t { Start = 0, R = 1, P = 2, S = 3 };
  EnvironmentSpec env;
  env.name = "rps";
  env.horizon = 2;
  env.num_states = 4;
  env.num_actions = 3;
  env.initial_dist = ProbVec::dirac(4, Start);
  env.transition = detail::pick_next_state(4, 1);
  env.reward = [](std::size_t s, std::size_t, std::span<const double> mu) {
    switch (s) {
      case R: return 2.0 * mu[S] - 1.0 * mu[P];
      case P: return 4.0 * mu[R] - 2.0 * mu[S];
      case S: return 6.0 * mu[P] - 3.0 * mu[R];
      default: return 0.0;
    }
  };
  env.state_labels = {"0", "R", "P", "S"};
  env.action_labels = {"R", "P", "S"};
  env.reward_bound = 6.0;
  return env;
}

/// Susceptible-infected-susceptible epidemic with optional social distancing.
inline EnvironmentSpec make_sis() {
  enum : std::size_t { S = 0, I = 1 };
  enum : std::size_t { Up = 0, Distance = 1 };
  constexpr double kRecovery = 0.3;
  constexpr double kInfectionScale = 0.9 * 0.9;
  EnvironmentSpec env;
  env.name = "sis";
  env.horizon = 50;
  env.num_states = 2;
  env.num_actions = 2;
  env.initial_dist = ProbVec(std::vector<double>{0.4, 0.6});
  env.transition = [=](std::size_t s, std::size_t a, std::span<const double> mu) {
    if (s == I) return std::vector<double>{kRecovery, 1.0 - kRecovery};
    if (a == Distance) return std::vector<double>{1.0, 0.0};
    const double p_inf = kInfectionScale * mu[I];
    return std::vector<double>{1.0 - p_inf, p_inf};
  };
  env.reward = [](std::size_t s, std::size_t a, std::span<const double>) {
    return -(s == I ? 1.0 : 0.0) - (a == Distance ? 0.5 : 0.0);
  };
  env.state_labels = {"S", "I"};
  env.action_labels = {"U", "D"};
  env.reward_bound = 1.5;
  return env;
}

/// Tabular model whose reward and transition rows are affine in mu_t:
///   r(s,a,mu) = r0[s][a] + sum_x r1[s][a][x] mu(x)
///   p(s'|s,a,mu) = p0[s][a][s'] + sum_x p1[s][a][s'][x] mu(x)
struct AffineModel {
  std::size_t horizon = 0;
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<double> initial_dist;
  std::vector<double> reward_const;   // [s][a]
  std::vector<double> reward_linear;  // [s][a][x]
  std::vector<double> trans_const;    // [s][a][s']
  std::vector<double> trans_linear;   // [s][a][s'][x]
};

inline EnvironmentSpec make_affine(std::string name, AffineModel m) {
  const std::size_t S = m.num_states, A = m.num_actions;
  if (m.horizon == 0 || S == 0 || A == 0) throw ConfigError(name + ": empty dimension");
  if (m.initial_dist.size() != S) throw ConfigError(name + ": initial distribution length");
  if (m.reward_const.size() != S * A) throw ConfigError(name + ": reward constant table must be |S|*|A|");
  if (m.trans_const.size() != S * A * S) throw ConfigError(name + ": transition constant table must be |S|*|A|*|S|");
  if (m.reward_linear.empty()) m.reward_linear.assign(S * A * S, 0.0);
  if (m.trans_linear.empty()) m.trans_linear.assign(S * A * S * S, 0.0);
  if (m.reward_linear.size() != S * A * S) throw ConfigError(name + ": reward linear table must be |S|*|A|*|S|");
  if (m.trans_linear.size() != S * A * S * S)
    throw ConfigError(name + ": transition linear table must be |S|*|A|*|S|*|S|");

  EnvironmentSpec env;
  env.name = std::move(name);
  env.horizon = m.horizon;
  env.num_states = S;
  env.num_actions = A;
  try {
    env.initial_dist = ProbVec(m.initial_dist);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(env.name + ": " + e.what());
  }
  // On the simplex |r0 + r1 . mu| <= |r0| + max_x |r1[x]|.
  double bound = 0.0;
  for (std::size_t sa = 0; sa < S * A; ++sa) {
    double lin = 0.0;
    for (std::size_t x = 0; x < S; ++x) lin = std::max(lin, std::abs(m.reward_linear[sa * S + x]));
    bound = std::max(bound, std::abs(m.reward_const[sa]) + lin);
  }
  env.reward_bound = bound;

  auto model = std::make_shared<const AffineModel>(std::move(m));
  env.reward = [model](std::size_t s, std::size_t a, std::span<const double> mu) {
    const std::size_t S = model->num_states;
    const std::size_t sa = s * model->num_actions + a;
    double r = model->reward_const[sa];
    for (std::size_t x = 0; x < S; ++x) r += model->reward_linear[sa * S + x] * mu[x];
    return r;
  };
  env.transition = [model](std::size_t s, std::size_t a, std::span<const double> mu) {
    const std::size_t S = model->num_states;
    const std::size_t sa = s * model->num_actions + a;
    std::vector<double> row(S);
    for (std::size_t n = 0; n < S; ++n) {
      double p = model->trans_const[sa * S + n];
      for (std::size_t x = 0; x < S; ++x) p += model->trans_linear[(sa * S + n) * S + x] * mu[x];
      row[n] = p;
    }
    return row;
  };

  // Affine rows are valid on the whole simplex iff they are valid at its vertices.
  std::vector<std::vector<double>> vertices;
  for (std::size_t x = 0; x < S; ++x) vertices.push_back(ProbVec::dirac(S, x).vector());
  validate_environment(env, vertices);
  return env;
}

}  // namespace mfg
