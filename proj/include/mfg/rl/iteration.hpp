#pragma once

// Boltzmann DQN iteration: DQN on the current mean field, a prior-weighted
// softmax of the network's action values, then a particle estimate of the
// mean field that policy induces. Temperature 0 means the greedy policy of
// the network. Exploitability is exact on tabular models and estimated by
// Monte Carlo otherwise, using the DQN trained on the policy's own mean
// field as the best response.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "mfg/core.hpp"
#include "mfg/dp.hpp"
#include "mfg/eval.hpp"
#include "mfg/model.hpp"
#include "mfg/random.hpp"
#include "mfg/rl/dqn.hpp"
#include "mfg/sim.hpp"
#include "mfg/solvers.hpp"

namespace mfg::rl {

/// Writes pi_t(. | s) into probs.
template <class State>
using PolicyFn = std::function<void(std::size_t t, const State& s, std::span<double> probs)>;

template <class State>
PolicyFn<State> uniform_policy(std::size_t num_actions) {
  return [num_actions](std::size_t, const State&, std::span<double> probs) {
    for (double& p : probs) p = 1.0 / static_cast<double>(num_actions);
  };
}

inline PolicyFn<std::size_t> table_policy(const Policy& pi) {
  return [pi](std::size_t t, const std::size_t& s, std::span<double> probs) {
    auto row = pi.row(t, s);
    std::copy(row.begin(), row.end(), probs.begin());
  };
}

template <class State>
ActionSampler<State> sampler(PolicyFn<State> pi, std::size_t num_actions) {
  return [pi = std::move(pi), num_actions](std::size_t t, const State& s, Rng& rng) {
    std::vector<double> probs(num_actions);
    pi(t, s, probs);
    return sample_index(probs, rng);
  };
}

/// prior * exp((q - max q) / eta), normalized; eta == 0 puts all mass on the first maximizer.
inline void boltzmann_row(std::span<const double> q, std::span<const double> prior, double eta, std::span<double> out) {
  if (eta == 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    out[first_argmax(q)] = 1.0;
    return;
  }
  const double m = *std::max_element(q.begin(), q.end());
  double sum = 0.0;
  for (std::size_t a = 0; a < q.size(); ++a) {
    out[a] = prior[a] * std::exp((q[a] - m) / eta);
    sum += out[a];
  }
  for (double& p : out) p /= sum;
}

template <SampledModel Model>
PolicyFn<typename Model::State> network_policy(const Model& model, const QFunction& q, double eta,
                                               PolicyFn<typename Model::State> prior) {
  return [&model, q, eta, prior = std::move(prior)](std::size_t t, const typename Model::State& s,
                                                     std::span<double> probs) {
    const auto values = q.values(model, s, t);
    std::vector<double> pr(values.size());
    prior(t, s, pr);
    boltzmann_row(values, pr, eta, probs);
  };
}

inline Policy materialize(const TabularModel& model, const PolicyFn<std::size_t>& pi) {
  const auto& env = model.spec();
  std::vector<double> flat(env.table_cells());
  for (std::size_t t = 0; t < env.horizon; ++t)
    for (std::size_t s = 0; s < env.num_states; ++s)
      pi(t, s, std::span<double>(flat).subspan((t * env.num_states + s) * env.num_actions, env.num_actions));
  return Policy(env.horizon, env.num_states, env.num_actions, std::move(flat));
}

/// Function approximation is only offered for the unregularized Bellman
/// equation; fitting the soft action-value function with a network is
/// numerically unstable, so relent mode is refused rather than downgraded.
inline void soft_q_network_guard(SolverMode mode) {
  if (mode == SolverMode::RelEnt)
    throw ConfigError(
        "relent mode cannot be combined with DQN: fitting the soft action-value function with a network is "
        "numerically problematic; use boltzmann mode, or relent with the tabular solvers");
}

/// Monte-Carlo exploitability of pi on its (already simulated) mean field mu
/// against the greedy policy of best_response.
template <SampledModel Model>
ExploitabilityReport exploitability_against(const Model& model, const MeanField& mu, const QFunction& best_response,
                                            const PolicyFn<typename Model::State>& pi, std::size_t episodes,
                                            std::uint64_t seed, MeanField* simulated = nullptr) {
  const std::size_t A = model.num_actions();
  auto greedy = network_policy(model, best_response, 0.0, uniform_policy<typename Model::State>(A));
  auto br = evaluate_policy_stochastic(model, mu, sampler(greedy, A), episodes, derive_seed(seed, {12}));
  auto pv = evaluate_policy_stochastic(model, mu, sampler(pi, A), episodes, derive_seed(seed, {13}));
  ExploitabilityReport r;
  r.method = EvalMethod::Stochastic;
  r.best_response_value = br.mean;
  r.policy_value = pv.mean;
  r.value = br.mean - pv.mean;
  r.std_error = std::sqrt(br.std_error * br.std_error + pv.std_error * pv.std_error);
  if (simulated) *simulated = mu;
  return r;
}

/// Best response by DQN on the simulated mean field of pi, both values by
/// Monte Carlo over `episodes` rollouts.
template <SampledModel Model>
ExploitabilityReport exploitability_stochastic(const Model& model, const PolicyFn<typename Model::State>& pi,
                                               const ParticleConfig& particles, std::size_t episodes,
                                               std::uint64_t seed, const DqnHyperparams& hp,
                                               MeanField* simulated = nullptr) {
  const std::size_t A = model.num_actions();
  ParticleConfig pc = particles;
  pc.seed = derive_seed(seed, {10});
  auto mu = simulate_mean_field(model, sampler(pi, A), pc).flow;
  auto q = dqn_train(model, mu, hp, derive_seed(seed, {11}));
  return exploitability_against(model, mu, q, pi, episodes, seed, simulated);
}

struct DqnIterationConfig {
  SolverMode mode = SolverMode::Boltzmann;
  double eta = 0.0;  // 0: greedy network policies
  std::size_t iterations = 50;
  ParticleConfig particles;
  DqnHyperparams dqn;
  std::size_t eval_episodes = 500;  // stochastic exploitability only
  std::uint64_t seed = 0;
  std::size_t window = 5;

  void validate() const {
    soft_q_network_guard(mode);
    if (mode != SolverMode::Boltzmann) throw ConfigError("boltzmann dqn iteration: mode must be boltzmann");
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("boltzmann dqn iteration: eta must be >= 0");
    if (iterations < 1) throw ConfigError("boltzmann dqn iteration: iterations must be >= 1");
    if (eval_episodes < 1) throw ConfigError("boltzmann dqn iteration: eval_episodes must be >= 1");
    particles.validate();
    dqn.validate();
  }
};

struct DqnIterationResult {
  IterationLog log;  // final_policy is filled for tabular models only
  std::vector<double> std_errors;  // per record; 0 when exact
  QFunction final_q;
};

template <SampledModel Model>
DqnIterationResult boltzmann_dqn_iteration(const Model& model, const DqnIterationConfig& cfg,
                                           PolicyFn<typename Model::State> prior = {},
                                           const std::function<void(const IterationRecord&)>& on_record = {}) {
  cfg.validate();
  constexpr bool tabular = std::is_same_v<Model, TabularModel>;
  const std::size_t A = model.num_actions();
  if (!prior) prior = uniform_policy<typename Model::State>(A);
  const auto start = std::chrono::steady_clock::now();

  auto simulate = [&](const PolicyFn<typename Model::State>& pi, std::uint64_t k) {
    ParticleConfig pc = cfg.particles;
    pc.seed = derive_seed(cfg.seed, {1, k});
    return simulate_mean_field(model, sampler(pi, A), pc).flow;
  };
  auto train = [&](const MeanField& mu, std::uint64_t k) {
    QFunction q = dqn_train(model, mu, cfg.dqn, derive_seed(cfg.seed, {2, k}));
    if constexpr (tabular) q.env_name = model.spec().name;
    else q.env_name = "sampled";
    q.meanfield_source = "iteration " + std::to_string(k);
    return q;
  };

  DqnIterationResult out;
  std::vector<MeanField> all;
  MeanField mu = simulate(prior, 0);
  QFunction q = train(mu, 0);
  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    auto pi = network_policy(model, q, cfg.eta, prior);
    MeanField next = simulate(pi, k + 1);

    IterationRecord rec;
    rec.index = k;
    rec.eta = cfg.eta;
    double se = 0.0;
    std::optional<QFunction> next_q;
    if constexpr (tabular) {
      Policy table = materialize(model, pi);
      rec.exploitability = exploitability_exact(model.spec(), table).value;
      if (k + 1 == cfg.iterations) out.log.final_policy = std::move(table);
      else next_q = train(next, k + 1);
    } else {
      next_q = train(next, k + 1);
      auto rep = exploitability_against(model, next, *next_q, pi, cfg.eval_episodes, derive_seed(cfg.seed, {3, k}));
      rec.exploitability = rep.value;
      se = *rep.std_error;
    }
    rec.mf_distance_prev = meanfield_distance(next, mu);
    rec.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.log.records.push_back(rec);
    out.std_errors.push_back(se);
    if (on_record) on_record(rec);

    all.push_back(next);
    out.log.history.push_back(next);
    if (out.log.history.size() > 64) out.log.history.pop_front();
    mu = std::move(next);
    if (next_q) q = std::move(*next_q);
  }
  out.final_q = std::move(q);
  out.log.final_meanfield = mu;
  for (std::size_t k = 0; k < all.size(); ++k)
    out.log.records[k].mf_distance_final = meanfield_distance(all[k], mu);
  out.log.trailing = trailing_stats(out.log.records, cfg.window);
  return out;
}

}  // namespace mfg::rl
