#pragma once

// Sample-based view of a mean field game. Particle simulation, Monte-Carlo
// evaluation and DQN only need to draw initial states and single steps, so
// they are written against the SampledModel concept rather than the dense
// EnvironmentSpec tables.

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mfg/core.hpp"
#include "mfg/env.hpp"
#include "mfg/random.hpp"

namespace mfg {

template <class State>
struct StepResult {
  double reward = 0.0;
  State next{};
};

/// `cell(s)` maps a state onto the support of the mean field the model's
/// dynamics depend on (the state itself for tabular models).
template <class M>
concept SampledModel = requires(const M& m, const typename M::State& s, std::size_t a, std::size_t t,
                                std::span<const double> mu_t, Rng& rng, std::span<double> obs,
                                std::uint64_t code) {
  typename M::State;
  { m.horizon() } -> std::convertible_to<std::size_t>;
  { m.num_actions() } -> std::convertible_to<std::size_t>;
  { m.num_cells() } -> std::convertible_to<std::size_t>;
  { m.cell(s) } -> std::convertible_to<std::size_t>;
  { m.sample_initial(rng) } -> std::same_as<typename M::State>;
  { m.step(s, a, mu_t, rng) } -> std::same_as<StepResult<typename M::State>>;
  { m.observation_size() } -> std::convertible_to<std::size_t>;
  { m.observe(s, t, obs) };
  { m.encode(s) } -> std::convertible_to<std::uint64_t>;
  { m.decode(code) } -> std::same_as<typename M::State>;
};

/// Adapts a tabular EnvironmentSpec. Observations are the one-hot state
/// followed by t / T.
class TabularModel {
 public:
  using State = std::size_t;

  explicit TabularModel(EnvironmentSpec env) : env_(std::move(env)) {}

  const EnvironmentSpec& spec() const { return env_; }
  std::size_t horizon() const { return env_.horizon; }
  std::size_t num_actions() const { return env_.num_actions; }
  std::size_t num_cells() const { return env_.num_states; }
  std::size_t cell(State s) const { return s; }

  State sample_initial(Rng& rng) const { return sample_index(env_.initial_dist.entries(), rng); }

  StepResult<State> step(State s, std::size_t a, std::span<const double> mu_t, Rng& rng) const {
    const auto row = env_.transition_row(s, a, mu_t);
    return {env_.reward(s, a, mu_t), sample_index(row, rng)};
  }

  std::size_t observation_size() const { return env_.num_states + 1; }
  void observe(State s, std::size_t t, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    out[s] = 1.0;
    out[env_.num_states] = static_cast<double>(t) / static_cast<double>(env_.horizon);
  }

  std::uint64_t encode(State s) const { return s; }
  State decode(std::uint64_t code) const { return static_cast<State>(code); }

 private:
  EnvironmentSpec env_;
};

static_assert(SampledModel<TabularModel>);

}  // namespace mfg
