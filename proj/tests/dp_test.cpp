#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mfg/dp.hpp"
#include "mfg/env.hpp"
#include "test_util.hpp"

namespace mfg {
namespace {

enum { C = 0, L = 1, R = 2 };

MeanField toy_split() { return MeanField({ProbVec({1, 0, 0}), ProbVec({0, 0.5, 0.5})}); }

double max_abs_diff(const QTable& a, const QTable& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) d = std::max(d, std::abs(a.values[i] - b.values[i]));
  return d;
}

std::vector<EnvironmentSpec> small_envs() { return {make_lr(), make_toy_lr(), make_rps(), make_sis()}; }

TEST(OptimalQ, ToyLrHandInduction) {
  auto q = optimal_q(make_toy_lr(), toy_split());
  // t = 0: r(C) = 0, then r(L) = -mu_1(L) = -0.5 regardless of the t = 1 action.
  EXPECT_DOUBLE_EQ(q(0, C, 0), -0.5);
  EXPECT_DOUBLE_EQ(q(0, C, 1), -0.5);
  EXPECT_DOUBLE_EQ(q(1, L, 0), -0.5);
}

TEST(OptimalQ, TerminalSliceIsReward) {
  std::mt19937_64 rng(1);
  for (const auto& env : small_envs()) {
    auto mu = testing::random_meanfield(rng, env.horizon, env.num_states);
    auto q = optimal_q(env, mu);
    const std::size_t t = env.horizon - 1;
    for (std::size_t s = 0; s < env.num_states; ++s)
      for (std::size_t a = 0; a < env.num_actions; ++a) EXPECT_EQ(q(t, s, a), env.reward(s, a, mu.row(t)));
  }
}

TEST(OptimalQ, ShapeMismatchThrows) {
  EXPECT_THROW(optimal_q(make_lr(), MeanField({ProbVec({1, 0, 0})})), DimensionError);
  EXPECT_THROW(optimal_q(make_sis(), toy_split()), DimensionError);
}

TEST(OptimalQ, CapacityCap) {
  auto env = make_sis();
  EXPECT_THROW(optimal_q(env, induced_mean_field(env, Policy::uniform(50, 2, 2)), 1.0, 100), CapacityError);
}

TEST(SingleAction, AllQKindsCoincide) {
  std::mt19937_64 rng(2);
  auto env = testing::random_environment(rng, 4, 3, 1);
  auto mu = testing::random_meanfield(rng, 4, 3);
  auto pi = Policy::uniform(4, 3, 1);
  auto qstar = optimal_q(env, mu);
  EXPECT_EQ(max_abs_diff(qstar, policy_q(env, mu, pi)), 0.0);
  for (double eta : {1e-3, 1.0, 1e3}) EXPECT_LE(max_abs_diff(qstar, soft_q(env, mu, Temperature(eta), pi)), 1e-12);
}

TEST(SoftQ, TerminalSliceAndPriorCheck) {
  auto env = make_rps();
  auto mu = induced_mean_field(env, Policy::uniform(2, 4, 3));
  auto q = soft_q(env, mu, Temperature(0.3), Policy::uniform(2, 4, 3));
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(q(1, s, a), env.reward(s, a, mu.row(1)));
  EXPECT_THROW(soft_q(env, mu, Temperature(0.3), Policy::constant_action(2, 4, 3, 0)), ArgumentError);
}

TEST(SoftQ, ToyLrAtLowTemperature) {
  auto env = make_toy_lr();
  auto prior = Policy::uniform(2, 3, 2);
  auto soft = soft_q(env, toy_split(), Temperature(0.1), prior);
  auto hard = optimal_q(env, toy_split());
  // Both t = 1 actions in L (or R) have equal value, so the smooth max over
  // them is exact: 0.1 * log(0.5 e^{-5} + 0.5 e^{-5}) = -0.5.
  for (std::size_t a = 0; a < 2; ++a) {
    EXPECT_LE(soft(0, C, a), hard(0, C, a) + 1e-12);
    EXPECT_NEAR(soft(0, C, a), hard(0, C, a), 0.08);
    EXPECT_NEAR(soft(0, C, a), -0.5, 1e-12);
  }
}

TEST(SoftQ, StrictlyBelowHardWhenActionsDiffer) {
  auto env = make_sis();
  auto mu = induced_mean_field(env, Policy::uniform(50, 2, 2));
  auto prior = Policy::uniform(50, 2, 2);
  auto hard = optimal_q(env, mu);
  for (double eta : {0.05, 0.5}) {
    auto soft = soft_q(env, mu, Temperature(eta), prior);
    for (std::size_t t = 0; t + 1 < 50; ++t)
      for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t a = 0; a < 2; ++a) {
          EXPECT_LT(soft(t, s, a), hard(t, s, a));
          EXPECT_GE(soft(t, s, a), hard(t, s, a) - eta * static_cast<double>(49 - t) * std::log(2.0) - 1e-9);
        }
  }
}

TEST(PolicyQ, Examples) {
  auto env = make_toy_lr();
  auto q = policy_q(env, toy_split(), Policy::uniform(2, 3, 2));
  EXPECT_DOUBLE_EQ(q(0, C, 0), -0.5);
  EXPECT_DOUBLE_EQ(q(0, C, 1), -0.5);

  std::mt19937_64 rng(3);
  for (const auto& e : small_envs()) {
    auto mu = testing::random_meanfield(rng, e.horizon, e.num_states);
    auto qstar = optimal_q(e, mu);
    auto greedy = greedy_policy(qstar, TieRule::FirstOptimal);
    EXPECT_LE(max_abs_diff(policy_q(e, mu, greedy), qstar), 1e-12);
    auto qp = policy_q(e, mu, greedy);
    for (std::size_t s = 0; s < e.num_states; ++s)
      for (std::size_t a = 0; a < e.num_actions; ++a)
        EXPECT_EQ(qp(e.horizon - 1, s, a), e.reward(s, a, mu.row(e.horizon - 1)));
  }
}

TEST(GreedyPolicy, TieRules) {
  QTable q{1, 1, 3, QKind::Optimal, {1.0, 2.0, 0.5}};
  auto first = greedy_policy(q, TieRule::FirstOptimal);
  EXPECT_EQ(std::vector<double>(first.flat().begin(), first.flat().end()), (std::vector<double>{0, 1, 0}));
  q.values = {2.0, 2.0, 0.5};
  auto even = greedy_policy(q, TieRule::UniformOverOptimal);
  EXPECT_EQ(std::vector<double>(even.flat().begin(), even.flat().end()), (std::vector<double>{0.5, 0.5, 0}));
  auto f2 = greedy_policy(q, TieRule::FirstOptimal);
  EXPECT_EQ(std::vector<double>(f2.flat().begin(), f2.flat().end()), (std::vector<double>{1, 0, 0}));
  q.values = {2.0, 2.0 + 5e-11, 0.5};  // within the tie tolerance
  auto near = greedy_policy(q, TieRule::UniformOverOptimal);
  EXPECT_DOUBLE_EQ(near(0, 0, 0), 0.5);
}

TEST(BoltzmannPolicy, Examples) {
  QTable q{1, 1, 2, QKind::Optimal, {0.0, -1.0}};
  auto uniform = Policy::uniform(1, 1, 2);
  auto pi = boltzmann_policy(q, Temperature(1.0), uniform);
  const double logistic1 = 1.0 / (1.0 + std::exp(-1.0));
  EXPECT_NEAR(pi(0, 0, 0), logistic1, 1e-12);
  EXPECT_NEAR(pi(0, 0, 0), 0.7311, 1e-4);
  EXPECT_NEAR(pi(0, 0, 1), 0.2689, 1e-4);

  Policy prior(1, 1, 2, {0.3, 0.7});
  q.values = {4.0, 4.0};
  auto same = boltzmann_policy(q, Temperature(0.01), prior);
  EXPECT_NEAR(same(0, 0, 0), 0.3, 1e-15);

  q.values = {5.0, -3.0};
  auto flat = boltzmann_policy(q, Temperature(1e9), prior);
  EXPECT_NEAR(flat(0, 0, 0), 0.3, 1e-6);

  // Extreme temperatures stay finite.
  auto cold = boltzmann_policy(q, Temperature(1e-300), prior);
  EXPECT_EQ(cold(0, 0, 0), 1.0);
  EXPECT_EQ(cold(0, 0, 1), 0.0);
}

TEST(BoltzmannPolicy, ConvergesToGreedyAtLowTemperature) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 50; ++trial) {
    QTable q{2, 3, 4, QKind::Optimal, std::vector<double>(24)};
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t s = 0; s < 3; ++s) {
        // Unique argmax with action gap >= 0.1.
        double best = u(rng);
        std::size_t arg = rng() % 4;
        for (std::size_t a = 0; a < 4; ++a) q(t, s, a) = a == arg ? best : best - 0.1 - std::abs(u(rng));
      }
    auto soft = boltzmann_policy(q, Temperature(1e-4), Policy::uniform(2, 3, 4));
    EXPECT_LT(policy_distance(soft, greedy_policy(q, TieRule::FirstOptimal)), 1e-6);
  }
}

TEST(InducedMeanField, Examples) {
  auto toy = induced_mean_field(make_toy_lr(), Policy::uniform(2, 3, 2));
  EXPECT_EQ(toy, toy_split());
  auto lr = induced_mean_field(make_lr(), Policy::constant_action(2, 3, 2, 0));
  EXPECT_EQ(lr, MeanField({ProbVec({1, 0, 0}), ProbVec({0, 1, 0})}));

  auto sis = make_sis();
  std::mt19937_64 rng(5);
  auto pi = testing::random_policy(rng, 50, 2, 2);
  auto mu = induced_mean_field(sis, pi);
  EXPECT_EQ(mu.row(0)[0], sis.initial_dist[0]);
  EXPECT_EQ(mu.row(0)[1], sis.initial_dist[1]);
  for (std::size_t t = 0; t + 1 < 50; ++t) {
    const double expected = mu(t, 1) * 0.7 + mu(t, 0) * pi(t, 0, 0) * 0.81 * mu(t, 1);
    EXPECT_NEAR(mu(t + 1, 1), expected, 1e-14);
  }
}

TEST(InducedMeanField, BitReproducible) {
  std::mt19937_64 rng(6);
  auto env = testing::random_environment(rng, 5, 4, 3);
  auto pi = testing::random_policy(rng, 5, 4, 3);
  EXPECT_EQ(induced_mean_field(env, pi), induced_mean_field(env, pi));
}

TEST(ObjectiveValue, Examples) {
  auto toy = make_toy_lr();
  auto uniform = Policy::uniform(2, 3, 2);
  EXPECT_DOUBLE_EQ(objective_value(toy, induced_mean_field(toy, uniform), uniform), -0.5);

  AffineModel zero;
  zero.horizon = 3;
  zero.num_states = 2;
  zero.num_actions = 2;
  zero.initial_dist = {0.5, 0.5};
  zero.reward_const.assign(4, 0.0);
  zero.trans_const = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
  auto zenv = make_affine("zero", zero);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 10; ++i)
    EXPECT_EQ(objective_value(zenv, testing::random_meanfield(rng, 3, 2), testing::random_policy(rng, 3, 2, 2)), 0.0);

  // Deterministic chain 0 -> 1 -> 2 -> 2 with rewards 1, 2, 3 (+ mu-dependent term).
  AffineModel chain;
  chain.horizon = 3;
  chain.num_states = 3;
  chain.num_actions = 1;
  chain.initial_dist = {1, 0, 0};
  chain.reward_const = {1, 2, 3};
  chain.reward_linear = {0, 0, 0, 0, 0, 0, 0, 0, 1};  // r(2) += mu(2)
  chain.trans_const = {0, 1, 0, 0, 0, 1, 0, 0, 1};
  auto cenv = make_affine("chain", chain);
  auto pi = Policy::uniform(3, 3, 1);
  auto mu = induced_mean_field(cenv, pi);
  EXPECT_DOUBLE_EQ(objective_value(cenv, mu, pi), 1.0 + 2.0 + 4.0);
}

TEST(RegularizedObjective, Examples) {
  std::mt19937_64 rng(8);
  for (const auto& env : small_envs()) {
    auto mu = testing::random_meanfield(rng, env.horizon, env.num_states);
    auto prior = testing::random_policy(rng, env.horizon, env.num_states, env.num_actions, true);
    EXPECT_NEAR(regularized_objective(env, mu, prior, Temperature(0.7), prior), objective_value(env, mu, prior), 1e-12);
    auto pi = testing::random_policy(rng, env.horizon, env.num_states, env.num_actions, true);
    EXPECT_NEAR(regularized_objective(env, mu, pi, Temperature(1e-12), prior), objective_value(env, mu, pi), 1e-6);
  }

  // Dirac-L at t = 0, uniform at t = 1: only (t=0, C) carries KL = log 2.
  auto toy = make_toy_lr();
  Policy pi(2, 3, 2, {1, 0, 1, 0, 1, 0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  auto mu = induced_mean_field(toy, pi);
  const double j = objective_value(toy, mu, pi);
  EXPECT_DOUBLE_EQ(j, -1.0);
  EXPECT_NEAR(regularized_objective(toy, mu, pi, Temperature(1.0), Policy::uniform(2, 3, 2)), j - std::log(2.0), 1e-15);
}

TEST(ContractivityThreshold, Examples) {
  EXPECT_EQ(contractivity_threshold(1.0, 1.0, 2, 0.5, 0.5), 1.0);
  EXPECT_EQ(contractivity_threshold(0.0, 1.0, 2, 0.5, 0.5), 0.0);
  const double base = contractivity_threshold(1.3, 0.7, 3, 0.4, 0.2);
  EXPECT_NEAR(contractivity_threshold(1.3, 0.7, 3, 0.8, 0.2), 4.0 * base, 1e-12);
  EXPECT_THROW(contractivity_threshold(-1.0, 1.0, 2, 0.5, 0.5), ArgumentError);
  EXPECT_THROW(contractivity_threshold(1.0, 1.0, 2, 0.0, 0.5), ArgumentError);
}

// Properties --------------------------------------------------------------

TEST(SoftQProperties, MonotoneInTemperatureAndBoundedGap) {
  std::mt19937_64 rng(9);
  const std::vector<double> etas{1e-3, 1e-2, 0.1, 1.0, 10.0};
  for (const auto& env : small_envs()) {
    auto prior = Policy::uniform(env.horizon, env.num_states, env.num_actions);
    for (int trial = 0; trial < 5; ++trial) {
      auto mu = testing::random_meanfield(rng, env.horizon, env.num_states);
      auto hard = optimal_q(env, mu);
      QTable prev = soft_q(env, mu, Temperature(etas.front()), prior);
      for (double eta : etas) {
        auto soft = soft_q(env, mu, Temperature(eta), prior);
        for (std::size_t i = 0; i < soft.values.size(); ++i) EXPECT_LE(soft.values[i], prev.values[i] + 1e-9);
        EXPECT_LE(max_abs_diff(soft, hard),
                  eta * static_cast<double>(env.horizon) * std::log(static_cast<double>(env.num_actions)) + 1e-9);
        prev = soft;
      }
    }
  }
}

TEST(QProperties, PolicyValuesBelowOptimalAndBounded) {
  std::mt19937_64 rng(10);
  for (const auto& env : small_envs()) {
    auto mu = testing::random_meanfield(rng, env.horizon, env.num_states);
    auto qstar = optimal_q(env, mu);
    const double bound = static_cast<double>(env.horizon) * env.reward_bound;
    for (double v : qstar.values) EXPECT_LE(std::abs(v), bound);
    for (int i = 0; i < 100; ++i) {
      auto pi = testing::random_policy(rng, env.horizon, env.num_states, env.num_actions);
      auto qp = policy_q(env, mu, pi);
      for (std::size_t k = 0; k < qp.values.size(); ++k) {
        EXPECT_LE(qp.values[k], qstar.values[k] + 1e-9);
        EXPECT_LE(std::abs(qp.values[k]), bound);
      }
    }
  }
}

TEST(QProperties, SoftmaxOfSoftQMaximizesRegularizedObjective) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t T = 2 + rng() % 3, S = 2 + rng() % 3, A = 2 + rng() % 3;
    auto env = testing::random_environment(rng, T, S, A);
    auto mu = testing::random_meanfield(rng, T, S);
    auto prior = testing::random_policy(rng, T, S, A, true);
    const Temperature eta(0.05 + u(rng));
    auto best = boltzmann_policy(soft_q(env, mu, eta, prior), eta, prior);
    const double j_best = regularized_objective(env, mu, best, eta, prior);
    for (int k = 0; k < 200; ++k) {
      auto other = mix(testing::random_policy(rng, T, S, A), best, u(rng));
      EXPECT_GE(j_best, regularized_objective(env, mu, other, eta, prior) - 1e-9);
    }
  }
}

}  // namespace
}  // namespace mfg
