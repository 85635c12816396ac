#pragma once

// Backward induction on the MDP induced by a frozen mean field, plus the
// forward operator Psi mapping a policy to the mean field it induces.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mfg/core.hpp"
#include "mfg/env.hpp"

namespace mfg {

/// Dense DP is refused above this many (t, s, a) cells.
inline constexpr std::size_t kDefaultMaxTableCells = 1'000'000;

/// Actions whose value is within this distance of the row maximum count as optimal.
inline constexpr double kArgmaxTolerance = 1e-10;

enum class QKind { Optimal, Soft, Policy };

enum class TieRule { FirstOptimal, UniformOverOptimal };

struct QTable {
  std::size_t horizon = 0;
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  QKind kind = QKind::Optimal;
  std::vector<double> values;  // [t][s][a]

  double operator()(std::size_t t, std::size_t s, std::size_t a) const {
    return values[(t * num_states + s) * num_actions + a];
  }
  double& operator()(std::size_t t, std::size_t s, std::size_t a) {
    return values[(t * num_states + s) * num_actions + a];
  }
  std::span<const double> row(std::size_t t, std::size_t s) const {
    return std::span<const double>(values).subspan((t * num_states + s) * num_actions, num_actions);
  }
};

inline void check_capacity(const EnvironmentSpec& env, std::size_t max_cells = kDefaultMaxTableCells) {
  if (env.table_cells() > max_cells)
    throw CapacityError(env.name + ": " + std::to_string(env.table_cells()) +
                        " table cells exceed the exact-DP cap; use particle simulation and DQN instead");
}

namespace detail {

inline void check_meanfield(const EnvironmentSpec& env, const MeanField& mu) {
  if (mu.horizon() != env.horizon || mu.num_states() != env.num_states)
    throw DimensionError(env.name + ": mean field shape does not match environment");
}

inline void check_policy(const EnvironmentSpec& env, const Policy& pi) {
  if (pi.horizon() != env.horizon || pi.num_states() != env.num_states || pi.num_actions() != env.num_actions)
    throw DimensionError(env.name + ": policy shape does not match environment");
}

inline QTable reward_table(const EnvironmentSpec& env, const MeanField& mu, QKind kind) {
  QTable q{env.horizon, env.num_states, env.num_actions, kind, std::vector<double>(env.table_cells())};
  for (std::size_t t = 0; t < env.horizon; ++t)
    for (std::size_t s = 0; s < env.num_states; ++s)
      for (std::size_t a = 0; a < env.num_actions; ++a) q(t, s, a) = env.reward(s, a, mu.row(t));
  return q;
}

// Shared backward sweep: Q(t,s,a) = r + discount * sum_s' p(s'|s,a,mu_t) V(t+1, s'),
// where V(t+1, .) is produced by `state_value` from the already finished slice.
template <class StateValue>
void backward_sweep(const EnvironmentSpec& env, const MeanField& mu, QTable& q, double discount,
                    StateValue&& state_value) {
  std::vector<double> next_value(env.num_states);
  for (std::size_t t = env.horizon - 1; t-- > 0;) {
    for (std::size_t s = 0; s < env.num_states; ++s) next_value[s] = state_value(t + 1, s);
    for (std::size_t s = 0; s < env.num_states; ++s)
      for (std::size_t a = 0; a < env.num_actions; ++a) {
        const auto row = env.transition_row(s, a, mu.row(t));
        double cont = 0.0;
        for (std::size_t n = 0; n < env.num_states; ++n) cont += row[n] * next_value[n];
        q(t, s, a) += discount * cont;
      }
  }
}

inline double row_max(std::span<const double> row) { return *std::max_element(row.begin(), row.end()); }

// eta * log sum_a w_a exp(v_a / eta), shifted by the row maximum.
inline double smooth_max(std::span<const double> values, std::span<const double> weights, double eta) {
  const double m = row_max(values);
  double acc = 0.0;
  for (std::size_t a = 0; a < values.size(); ++a) acc += weights[a] * std::exp((values[a] - m) / eta);
  return m + eta * std::log(acc);
}

}  // namespace detail

/// Q*(mu, t, s, a) by backward induction; the last slice is the reward.
/// `discount` < 1 gives the discounted finite-horizon values a DQN targets.
inline QTable optimal_q(const EnvironmentSpec& env, const MeanField& mu, double discount = 1.0,
                        std::size_t max_cells = kDefaultMaxTableCells) {
  detail::check_meanfield(env, mu);
  check_capacity(env, max_cells);
  QTable q = detail::reward_table(env, mu, QKind::Optimal);
  detail::backward_sweep(env, mu, q, discount, [&](std::size_t t, std::size_t s) { return detail::row_max(q.row(t, s)); });
  return q;
}

/// Soft action values of the relative-entropy objective with prior q.
inline QTable soft_q(const EnvironmentSpec& env, const MeanField& mu, Temperature eta, const Policy& prior,
                     std::size_t max_cells = kDefaultMaxTableCells) {
  detail::check_meanfield(env, mu);
  detail::check_policy(env, prior);
  require_prior(prior);
  check_capacity(env, max_cells);
  QTable q = detail::reward_table(env, mu, QKind::Soft);
  detail::backward_sweep(env, mu, q, 1.0, [&](std::size_t t, std::size_t s) {
    return detail::smooth_max(q.row(t, s), prior.row(t, s), eta.value());
  });
  return q;
}

/// Q^pi(mu, t, s, a): policy evaluation in the induced MDP.
inline QTable policy_q(const EnvironmentSpec& env, const MeanField& mu, const Policy& pi,
                       std::size_t max_cells = kDefaultMaxTableCells) {
  detail::check_meanfield(env, mu);
  detail::check_policy(env, pi);
  check_capacity(env, max_cells);
  QTable q = detail::reward_table(env, mu, QKind::Policy);
  detail::backward_sweep(env, mu, q, 1.0, [&](std::size_t t, std::size_t s) {
    const auto qs = q.row(t, s);
    const auto ps = pi.row(t, s);
    double v = 0.0;
    for (std::size_t a = 0; a < qs.size(); ++a) v += ps[a] * qs[a];
    return v;
  });
  return q;
}

inline Policy greedy_policy(const QTable& q, TieRule tie) {
  std::vector<double> flat(q.values.size(), 0.0);
  for (std::size_t t = 0; t < q.horizon; ++t)
    for (std::size_t s = 0; s < q.num_states; ++s) {
      const auto row = q.row(t, s);
      const double m = detail::row_max(row);
      double* out = flat.data() + (t * q.num_states + s) * q.num_actions;
      if (tie == TieRule::FirstOptimal) {
        for (std::size_t a = 0; a < row.size(); ++a)
          if (row[a] >= m - kArgmaxTolerance) {
            out[a] = 1.0;
            break;
          }
      } else {
        std::size_t count = 0;
        for (double v : row) count += v >= m - kArgmaxTolerance;
        for (std::size_t a = 0; a < row.size(); ++a)
          if (row[a] >= m - kArgmaxTolerance) out[a] = 1.0 / static_cast<double>(count);
      }
    }
  return Policy(q.horizon, q.num_states, q.num_actions, std::move(flat));
}

/// pi(a|s) proportional to prior(a|s) exp(Q(t,s,a) / eta). At very low eta
/// the exponentials underflow towards the greedy policy instead of NaN.
inline Policy boltzmann_policy(const QTable& q, Temperature eta, const Policy& prior) {
  if (prior.horizon() != q.horizon || prior.num_states() != q.num_states || prior.num_actions() != q.num_actions)
    throw DimensionError("boltzmann_policy: prior shape does not match Q table");
  require_prior(prior);
  std::vector<double> flat(q.values.size());
  for (std::size_t t = 0; t < q.horizon; ++t)
    for (std::size_t s = 0; s < q.num_states; ++s) {
      const auto row = q.row(t, s);
      const auto pr = prior.row(t, s);
      const double m = detail::row_max(row);
      double* out = flat.data() + (t * q.num_states + s) * q.num_actions;
      double sum = 0.0;
      for (std::size_t a = 0; a < row.size(); ++a) sum += out[a] = pr[a] * std::exp((row[a] - m) / eta.value());
      for (std::size_t a = 0; a < row.size(); ++a) out[a] /= sum;
    }
  return Policy(q.horizon, q.num_states, q.num_actions, std::move(flat));
}

/// Psi(pi): mu_0 is the initial distribution, then one-step pushforwards.
inline MeanField induced_mean_field(const EnvironmentSpec& env, const Policy& pi,
                                    std::size_t max_cells = kDefaultMaxTableCells) {
  detail::check_policy(env, pi);
  check_capacity(env, max_cells);
  const std::size_t S = env.num_states;
  std::vector<double> flat(env.horizon * S, 0.0);
  std::copy(env.initial_dist.entries().begin(), env.initial_dist.entries().end(), flat.begin());
  for (std::size_t t = 0; t + 1 < env.horizon; ++t) {
    std::span<const double> cur(flat.data() + t * S, S);
    double* nxt = flat.data() + (t + 1) * S;
    for (std::size_t s = 0; s < S; ++s) {
      if (cur[s] == 0.0) continue;
      for (std::size_t a = 0; a < env.num_actions; ++a) {
        const double w = cur[s] * pi(t, s, a);
        if (w == 0.0) continue;
        const auto row = env.transition_row(s, a, cur);
        for (std::size_t n = 0; n < S; ++n) nxt[n] += w * row[n];
      }
    }
  }
  return MeanField(env.horizon, S, std::move(flat));
}

/// J^mu(pi) = sum_s mu_0(s) sum_a pi_0(a|s) Q^pi(0, s, a).
inline double objective_value(const EnvironmentSpec& env, const MeanField& mu, const Policy& pi) {
  const QTable q = policy_q(env, mu, pi);
  double j = 0.0;
  for (std::size_t s = 0; s < env.num_states; ++s)
    for (std::size_t a = 0; a < env.num_actions; ++a) j += env.initial_dist[s] * pi(0, s, a) * q(0, s, a);
  return j;
}

/// max_pi J^mu(pi) = sum_s mu_0(s) max_a Q*(0, s, a).
inline double best_response_value(const EnvironmentSpec& env, const MeanField& mu) {
  const QTable q = optimal_q(env, mu);
  double j = 0.0;
  for (std::size_t s = 0; s < env.num_states; ++s) j += env.initial_dist[s] * detail::row_max(q.row(0, s));
  return j;
}

/// Expected return minus eta * KL(pi || prior) along the agent's own state
/// visitation in the MDP induced by mu.
inline double regularized_objective(const EnvironmentSpec& env, const MeanField& mu, const Policy& pi,
                                    Temperature eta, const Policy& prior) {
  detail::check_meanfield(env, mu);
  detail::check_policy(env, pi);
  detail::check_policy(env, prior);
  require_prior(prior);
  check_capacity(env);
  const std::size_t S = env.num_states;
  std::vector<double> visit(env.initial_dist.vector());
  std::vector<double> next(S);
  double j = 0.0;
  for (std::size_t t = 0; t < env.horizon; ++t) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      if (visit[s] == 0.0) continue;
      for (std::size_t a = 0; a < env.num_actions; ++a) {
        const double p = pi(t, s, a);
        if (p == 0.0) continue;
        const double w = visit[s] * p;
        j += w * (env.reward(s, a, mu.row(t)) - eta.value() * std::log(p / prior(t, s, a)));
        if (t + 1 < env.horizon) {
          const auto row = env.transition_row(s, a, mu.row(t));
          for (std::size_t n = 0; n < S; ++n) next[n] += w * row[n];
        }
      }
    }
    visit.swap(next);
  }
  return j;
}

/// Temperature above which the Boltzmann and RelEnt MFE operators are
/// contractions: |A| (|A| - 1) K_Q K_Psi q_max^2 / (2 q_min^2).
inline double contractivity_threshold(double k_q, double k_psi, std::size_t num_actions, double q_max, double q_min) {
  if (!(k_q >= 0.0) || !(k_psi >= 0.0)) throw ArgumentError("contractivity_threshold: Lipschitz constants must be >= 0");
  if (num_actions == 0) throw ArgumentError("contractivity_threshold: need at least one action");
  if (!(q_max > 0.0) || !(q_min > 0.0) || q_min > q_max)
    throw ArgumentError("contractivity_threshold: need 0 < q_min <= q_max");
  const double a = static_cast<double>(num_actions);
  const double ratio = q_max / q_min;
  return a * (a - 1.0) * k_q * k_psi * ratio * ratio / 2.0;
}

}  // namespace mfg
