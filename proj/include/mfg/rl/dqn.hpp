#pragma once

// DQN on the MDP induced by a frozen mean field: epsilon-greedy rollouts of
// T steps per epoch, one minibatch step per environment step once the buffer
// holds a full batch, discounted one-step targets from a periodically synced
// target network, no bootstrap from the last time step.

#include "json.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mfg/core.hpp"
#include "mfg/model.hpp"
#include "mfg/random.hpp"
#include "mfg/rl/network.hpp"
#include "mfg/rl/optim.hpp"

namespace mfg::rl {

struct DqnHyperparams {
  std::size_t replay_capacity = 10000;
  double learning_rate = 0.0005;
  double discount = 0.99;
  std::size_t target_update_every = 500;
  double grad_clip_norm = 40.0;
  std::size_t batch_size = 128;
  double epsilon_start = 1.0;
  double epsilon_end = 0.02;
  double epsilon_end_fraction = 0.8;
  std::size_t epochs = 1000;
  std::size_t hidden_width = 256;

  void validate() const {
    if (replay_capacity == 0 || target_update_every == 0 || batch_size == 0 || epochs == 0 || hidden_width == 0)
      throw ConfigError("dqn: sizes must be positive");
    if (!(learning_rate > 0.0) || !(discount > 0.0) || discount > 1.0 || !(grad_clip_norm > 0.0))
      throw ConfigError("dqn: learning_rate, grad_clip_norm must be positive and discount in (0, 1]");
    if (!(epsilon_end > 0.0) || epsilon_end > epsilon_start || epsilon_start > 1.0)
      throw ConfigError("dqn: need 0 < epsilon_end <= epsilon_start <= 1");
    if (!(epsilon_end_fraction > 0.0) || epsilon_end_fraction > 1.0)
      throw ConfigError("dqn: epsilon_end_fraction must lie in (0, 1]");
  }
};

inline void to_json(nlohmann::json& j, const DqnHyperparams& h) {
  j = {{"replay_capacity", h.replay_capacity}, {"learning_rate", h.learning_rate},
       {"discount", h.discount},               {"target_update_every", h.target_update_every},
       {"grad_clip_norm", h.grad_clip_norm},   {"batch_size", h.batch_size},
       {"epsilon_start", h.epsilon_start},     {"epsilon_end", h.epsilon_end},
       {"epsilon_end_fraction", h.epsilon_end_fraction}, {"epochs", h.epochs},
       {"hidden_width", h.hidden_width}};
}

inline void from_json(const nlohmann::json& j, DqnHyperparams& h) {
  h.replay_capacity = j.value("replay_capacity", h.replay_capacity);
  h.learning_rate = j.value("learning_rate", h.learning_rate);
  h.discount = j.value("discount", h.discount);
  h.target_update_every = j.value("target_update_every", h.target_update_every);
  h.grad_clip_norm = j.value("grad_clip_norm", h.grad_clip_norm);
  h.batch_size = j.value("batch_size", h.batch_size);
  h.epsilon_start = j.value("epsilon_start", h.epsilon_start);
  h.epsilon_end = j.value("epsilon_end", h.epsilon_end);
  h.epsilon_end_fraction = j.value("epsilon_end_fraction", h.epsilon_end_fraction);
  h.epochs = j.value("epochs", h.epochs);
  h.hidden_width = j.value("hidden_width", h.hidden_width);
}

using Scalar = float;

/// Trained network plus what it was trained on.
struct QFunction {
  DuelingNetwork<Scalar> network;
  std::string env_name;
  std::string meanfield_source;
  std::uint64_t seed = 0;

  template <SampledModel Model>
  std::vector<double> values(const Model& model, const typename Model::State& s, std::size_t t) const {
    Matrix<Scalar> x(static_cast<Eigen::Index>(model.observation_size()), 1);
    std::vector<double> obs(model.observation_size());
    model.observe(s, t, obs);
    for (std::size_t i = 0; i < obs.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = static_cast<Scalar>(obs[i]);
    auto q = network.forward(x);
    std::vector<double> out(static_cast<std::size_t>(q.rows()));
    for (std::size_t a = 0; a < out.size(); ++a) out[a] = static_cast<double>(q(static_cast<Eigen::Index>(a), 0));
    return out;
  }
};

inline std::size_t first_argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t a = 1; a < v.size(); ++a)
    if (v[a] > v[best]) best = a;
  return best;
}

struct TrainingStats {
  std::uint64_t steps = 0;
  std::uint64_t updates = 0;
  double last_loss = 0.0;
};

namespace detail {

template <SampledModel Model>
void fill_observation(const Model& model, std::uint64_t code, std::size_t t, Matrix<Scalar>& x, Eigen::Index col,
                      std::vector<double>& scratch) {
  model.observe(model.decode(code), t, scratch);
  for (std::size_t i = 0; i < scratch.size(); ++i) x(static_cast<Eigen::Index>(i), col) = static_cast<Scalar>(scratch[i]);
}

}  // namespace detail

template <SampledModel Model>
QFunction dqn_train(const Model& model, const MeanField& mu, const DqnHyperparams& hp, std::uint64_t seed,
                    TrainingStats* stats = nullptr) {
  hp.validate();
  const std::size_t T = model.horizon(), A = model.num_actions(), n_obs = model.observation_size();
  if (mu.horizon() != T || mu.num_states() != model.num_cells())
    throw DimensionError("dqn_train: mean field shape does not match model");

  Rng init_rng = make_rng(seed, {0});
  Rng env_rng = make_rng(seed, {1});
  Rng batch_rng = make_rng(seed, {2});
  Rng explore_rng = make_rng(seed, {3});

  QFunction q;
  q.seed = seed;
  q.network = DuelingNetwork<Scalar>({n_obs, hp.hidden_width, A});
  q.network.initialize(init_rng);
  DuelingNetwork<Scalar> target = q.network;
  Adam<Scalar> adam(q.network.num_parameters(),
                    {hp.learning_rate, 0.9, 0.999, 1e-8, hp.grad_clip_norm});
  ReplayBuffer buffer(hp.replay_capacity);
  const std::uint64_t total_steps = static_cast<std::uint64_t>(hp.epochs) * T;
  const EpsilonSchedule epsilon{hp.epsilon_start, hp.epsilon_end, hp.epsilon_end_fraction, total_steps};

  const auto B = static_cast<Eigen::Index>(hp.batch_size);
  Matrix<Scalar> obs(static_cast<Eigen::Index>(n_obs), 1);
  Matrix<Scalar> batch(static_cast<Eigen::Index>(n_obs), B), next_batch(static_cast<Eigen::Index>(n_obs), B);
  Matrix<Scalar> dq(static_cast<Eigen::Index>(A), B);
  std::vector<double> scratch(n_obs);
  std::vector<const ReplayItem*> picked(hp.batch_size);
  typename DuelingNetwork<Scalar>::Cache cache;
  TrainingStats st;

  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    auto s = model.sample_initial(env_rng);
    for (std::size_t t = 0; t < T; ++t) {
      std::size_t a;
      if (uniform01(explore_rng) < epsilon(st.steps)) {
        a = uniform_index(explore_rng, A);
      } else {
        model.observe(s, t, scratch);
        for (std::size_t i = 0; i < n_obs; ++i) obs(static_cast<Eigen::Index>(i), 0) = static_cast<Scalar>(scratch[i]);
        auto qv = q.network.forward(obs);
        Eigen::Index best;
        qv.col(0).maxCoeff(&best);
        a = static_cast<std::size_t>(best);
      }
      auto step = model.step(s, a, mu.row(t), env_rng);
      buffer.push({model.encode(s), static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(a), step.reward,
                   model.encode(step.next), t + 1 == T});
      s = std::move(step.next);
      ++st.steps;

      if (buffer.size() >= hp.batch_size) {
        for (Eigen::Index i = 0; i < B; ++i) {
          const ReplayItem& item = buffer.slot(buffer.sample_slot(batch_rng));
          picked[static_cast<std::size_t>(i)] = &item;
          detail::fill_observation(model, item.state, item.time, batch, i, scratch);
          if (!item.terminal) detail::fill_observation(model, item.next_state, item.time + 1, next_batch, i, scratch);
          else next_batch.col(i).setZero();
        }
        auto next_q = target.forward(next_batch);
        auto qb = q.network.forward(batch, cache);
        dq.setZero();
        double loss = 0.0;
        for (Eigen::Index i = 0; i < B; ++i) {
          const ReplayItem& item = *picked[static_cast<std::size_t>(i)];
          double y = item.reward;
          if (!item.terminal) y += hp.discount * static_cast<double>(next_q.col(i).maxCoeff());
          const double delta = static_cast<double>(qb(item.action, i)) - y;
          loss += delta * delta;
          dq(item.action, i) = static_cast<Scalar>(2.0 * delta / static_cast<double>(B));
        }
        loss /= static_cast<double>(B);
        if (!std::isfinite(loss)) {
          std::ostringstream msg;
          msg << "dqn: non-finite loss at step " << st.steps << " (epoch " << epoch << ", t " << t
              << ", seed " << seed << ")";
          throw TrainingFailure(msg.str());
        }
        auto grad = q.network.backward(cache, dq);
        adam.step(q.network.parameters(), grad);
        ++st.updates;
        st.last_loss = loss;
      }
      if (st.steps % hp.target_update_every == 0) target = q.network;
    }
  }
  if (!q.network.parameters().allFinite()) throw TrainingFailure("dqn: non-finite weights after training");
  if (stats) *stats = st;
  return q;
}

inline nlohmann::json checkpoint_json(const QFunction& q) {
  const auto& p = q.network.parameters();
  std::vector<float> weights(p.data(), p.data() + p.size());
  const auto& sh = q.network.shape();
  return {{"format", "mfg-dueling-q"},
          {"version", 1},
          {"shape", {{"inputs", sh.inputs}, {"hidden", sh.hidden}, {"actions", sh.actions}}},
          {"layout", {"shared.W", "shared.b", "value.W", "value.b", "advantage.W", "advantage.b", "value_out.W",
                      "value_out.b", "advantage_out.W", "advantage_out.b"}},
          {"order", "column-major"},
          {"env", q.env_name},
          {"meanfield", q.meanfield_source},
          {"seed", q.seed},
          {"weights", weights}};
}

inline QFunction qfunction_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "mfg-dueling-q" || j.value("version", 0) != 1)
    throw ConfigError("checkpoint: unsupported format");
  NetworkShape sh{j.at("shape").at("inputs").get<std::size_t>(), j.at("shape").at("hidden").get<std::size_t>(),
                  j.at("shape").at("actions").get<std::size_t>()};
  QFunction q;
  q.network = DuelingNetwork<Scalar>(sh);
  auto w = j.at("weights").get<std::vector<float>>();
  if (w.size() != q.network.num_parameters()) throw ConfigError("checkpoint: weight count does not match shape");
  for (std::size_t i = 0; i < w.size(); ++i) q.network.parameters()[static_cast<Eigen::Index>(i)] = w[i];
  q.env_name = j.value("env", "");
  q.meanfield_source = j.value("meanfield", "");
  q.seed = j.value("seed", std::uint64_t{0});
  return q;
}

inline void save_checkpoint(const QFunction& q, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("checkpoint: cannot write " + path);
  out << checkpoint_json(q).dump();
}

inline QFunction load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("checkpoint: cannot read " + path);
  return qfunction_from_json(nlohmann::json::parse(in));
}

}  // namespace mfg::rl
