#pragma once

// Particle approximation of the mean field and Monte-Carlo returns in the
// MDP induced by a frozen mean field.
//
// K replicate populations of M particles are stepped synchronously: every
// particle of a replicate moves against that replicate's empirical measure
// at the start of the step. The flow returned is the average over replicates.
// Replicate k draws from stream (seed, k) and episode e from (seed, e), so
// results do not depend on how work is split over threads.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <thread>
#include <utility>
#include <vector>

#include "mfg/core.hpp"
#include "mfg/model.hpp"
#include "mfg/random.hpp"

namespace mfg {

struct ParticleConfig {
  std::size_t num_meanfields = 5;    // K
  std::size_t num_particles = 1000;  // M
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const {
    if (num_meanfields < 1) throw ConfigError("particles: K must be >= 1");
    if (num_particles < 1) throw ConfigError("particles: M must be >= 1");
    if (threads < 1) throw ConfigError("particles: threads must be >= 1");
  }
};

struct EmpiricalMeanField {
  MeanField flow;
  ParticleConfig provenance;
};

/// Draws an action for a state at time t.
template <class State>
using ActionSampler = std::function<std::size_t(std::size_t t, const State& s, Rng& rng)>;

/// Sampler for a tabular Markov policy.
inline ActionSampler<std::size_t> policy_sampler(const Policy& pi) {
  return [pi](std::size_t t, const std::size_t& s, Rng& rng) { return sample_index(pi.row(t, s), rng); };
}

namespace detail {

// Runs body(i) for i in [0, n) on up to `threads` workers with a fixed
// round-robin assignment.
template <class Body>
void parallel_for(std::size_t n, std::size_t threads, Body body) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += threads) body(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Counts per (t, cell) for one replicate.
template <SampledModel Model>
std::vector<std::uint64_t> simulate_replicate(const Model& model, const ActionSampler<typename Model::State>& act,
                                              std::size_t num_particles, Rng& rng) {
  const std::size_t T = model.horizon(), n = model.num_cells();
  std::vector<std::uint64_t> counts(T * n, 0);
  std::vector<typename Model::State> particles(num_particles);
  for (auto& x : particles) {
    x = model.sample_initial(rng);
    ++counts[model.cell(x)];
  }
  std::vector<double> measure(n);
  const double inv_m = 1.0 / static_cast<double>(num_particles);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    for (std::size_t c = 0; c < n; ++c) measure[c] = static_cast<double>(counts[t * n + c]) * inv_m;
    for (auto& x : particles) {
      const std::size_t a = act(t, x, rng);
      x = model.step(x, a, measure, rng).next;
      ++counts[(t + 1) * n + model.cell(x)];
    }
  }
  return counts;
}

template <SampledModel Model>
EmpiricalMeanField simulate_mean_field(const Model& model, const ActionSampler<typename Model::State>& act,
                                       const ParticleConfig& cfg) {
  cfg.validate();
  const std::size_t T = model.horizon(), n = model.num_cells(), K = cfg.num_meanfields;
  std::vector<std::vector<std::uint64_t>> counts(K);
  detail::parallel_for(K, cfg.threads, [&](std::size_t k) {
    Rng rng = make_rng(cfg.seed, {k});
    counts[k] = simulate_replicate(model, act, cfg.num_particles, rng);
  });
  std::vector<std::uint64_t> total(T * n, 0);
  for (const auto& c : counts)
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += c[i];
  const double denom = static_cast<double>(K) * static_cast<double>(cfg.num_particles);
  std::vector<double> flat(T * n);
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = static_cast<double>(total[i]) / denom;
  return {MeanField(T, n, std::move(flat)), cfg};
}

inline EmpiricalMeanField simulate_mean_field(const EnvironmentSpec& env, const Policy& pi, const ParticleConfig& cfg) {
  if (pi.horizon() != env.horizon || pi.num_states() != env.num_states || pi.num_actions() != env.num_actions)
    throw DimensionError("simulate_mean_field: policy shape does not match environment");
  return simulate_mean_field(TabularModel(env), policy_sampler(pi), cfg);
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;  // 0 for a single episode
  std::vector<double> returns;
};

inline MonteCarloEstimate summarize_returns(std::vector<double> returns) {
  MonteCarloEstimate est;
  const double n = static_cast<double>(returns.size());
  double sum = 0.0;
  for (double r : returns) sum += r;
  est.mean = sum / n;
  if (returns.size() > 1) {
    double ss = 0.0;
    for (double r : returns) ss += (r - est.mean) * (r - est.mean);
    est.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  est.returns = std::move(returns);
  return est;
}

/// Undiscounted episode returns of `act` in the MDP frozen at mu.
template <SampledModel Model>
MonteCarloEstimate evaluate_policy_stochastic(const Model& model, const MeanField& mu,
                                              const ActionSampler<typename Model::State>& act, std::size_t episodes,
                                              std::uint64_t seed, std::size_t threads = 1) {
  if (episodes < 1) throw ArgumentError("evaluate_policy_stochastic: episodes must be >= 1");
  if (mu.horizon() != model.horizon() || mu.num_states() != model.num_cells())
    throw DimensionError("evaluate_policy_stochastic: mean field shape does not match model");
  std::vector<double> returns(episodes);
  detail::parallel_for(episodes, threads, [&](std::size_t e) {
    Rng rng = make_rng(seed, {e});
    auto s = model.sample_initial(rng);
    double total = 0.0;
    for (std::size_t t = 0; t < model.horizon(); ++t) {
      auto step = model.step(s, act(t, s, rng), mu.row(t), rng);
      total += step.reward;
      s = std::move(step.next);
    }
    returns[e] = total;
  });
  return summarize_returns(std::move(returns));
}

inline MonteCarloEstimate evaluate_policy_stochastic(const EnvironmentSpec& env, const MeanField& mu, const Policy& pi,
                                                     std::size_t episodes, std::uint64_t seed) {
  return evaluate_policy_stochastic(TabularModel(env), mu, policy_sampler(pi), episodes, seed);
}

}  // namespace mfg
