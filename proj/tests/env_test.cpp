#include <gtest/gtest.h>

#include <random>
#include <set>

#include "mfg/env.hpp"
#include "mfg/model.hpp"
#include "mfg/taxi.hpp"
#include "test_util.hpp"

namespace mfg {
namespace {

enum { C = 0, L = 1, R = 2 };

TEST(Lr, RewardsAndTransitions) {
  auto env = make_lr();
  EXPECT_EQ(env.horizon, 2u);
  EXPECT_EQ(env.num_states, 3u);
  EXPECT_EQ(env.num_actions, 2u);
  std::vector<double> mu{0.2, 0.4, 0.4};
  EXPECT_DOUBLE_EQ(env.reward(L, 0, mu), -0.4);
  EXPECT_DOUBLE_EQ(env.reward(L, 1, mu), -0.4);
  EXPECT_DOUBLE_EQ(env.reward(R, 0, mu), -0.8);
  EXPECT_DOUBLE_EQ(env.reward(C, 0, mu), 0.0);
  EXPECT_EQ(env.transition(C, 0, mu), (std::vector<double>{0, 1, 0}));
  EXPECT_EQ(env.transition(C, 1, mu), (std::vector<double>{0, 0, 1}));
  EXPECT_DOUBLE_EQ(env.initial_dist[C], 1.0);
}

TEST(ToyLr, SymmetricRewards) {
  auto env = make_toy_lr();
  std::vector<double> mu{0.2, 0.4, 0.4};
  EXPECT_DOUBLE_EQ(env.reward(L, 1, mu), -0.4);
  EXPECT_DOUBLE_EQ(env.reward(R, 0, mu), -0.4);
}

TEST(Rps, Rewards) {
  auto env = make_rps();
  EXPECT_EQ(env.num_states, 4u);
  EXPECT_EQ(env.num_actions, 3u);
  EXPECT_NEAR(env.reward(2, 0, std::vector<double>{0.0, 0.5, 0.3, 0.2}), 1.6, 1e-15);
  EXPECT_NEAR(env.reward(3, 1, std::vector<double>{0.0, 0.3, 0.1, 0.6}), -0.3, 1e-15);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(env.reward(0, i % 3, testing::random_simplex(rng, 4)), 0.0);
  EXPECT_EQ(env.transition(0, 2, std::vector<double>{1, 0, 0, 0}), (std::vector<double>{0, 0, 0, 1}));
}

TEST(Sis, Dynamics) {
  auto env = make_sis();
  EXPECT_EQ(env.horizon, 50u);
  EXPECT_DOUBLE_EQ(env.initial_dist[1], 0.6);
  auto up = env.transition(0, 0, std::vector<double>{0.5, 0.5});
  EXPECT_NEAR(up[0], 0.595, 1e-15);
  EXPECT_NEAR(up[1], 0.405, 1e-15);
  EXPECT_EQ(env.transition(0, 1, std::vector<double>{0.1, 0.9}), (std::vector<double>{1.0, 0.0}));
  auto rec = env.transition(1, 0, std::vector<double>{0.1, 0.9});
  EXPECT_DOUBLE_EQ(rec[0], 0.3);
  EXPECT_DOUBLE_EQ(env.reward(1, 1, std::vector<double>{0.5, 0.5}), -1.5);
  EXPECT_DOUBLE_EQ(env.reward(0, 0, std::vector<double>{0.5, 0.5}), 0.0);
}

TEST(BuiltinEnvironments, TransitionRowsAreDistributions) {
  std::mt19937_64 rng(5);
  for (const auto& env : {make_lr(), make_toy_lr(), make_rps(), make_sis()}) {
    std::uniform_int_distribution<std::size_t> ds(0, env.num_states - 1), da(0, env.num_actions - 1);
    for (int i = 0; i < 1000; ++i) {
      auto mu = testing::random_simplex(rng, env.num_states);
      auto row = env.transition(ds(rng), da(rng), mu);
      double sum = 0.0;
      for (double p : row) {
        EXPECT_GE(p, 0.0);
        sum += p;
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST(BuiltinEnvironments, MeanFieldDependence) {
  std::mt19937_64 rng(9);
  for (const auto& env : {make_lr(), make_rps()}) {
    for (int i = 0; i < 50; ++i) {
      auto m1 = testing::random_simplex(rng, env.num_states);
      auto m2 = testing::random_simplex(rng, env.num_states);
      for (std::size_t s = 0; s < env.num_states; ++s)
        for (std::size_t a = 0; a < env.num_actions; ++a) {
          auto row = env.transition(s, a, m1);
          EXPECT_EQ(row, env.transition(s, a, m2));
          EXPECT_EQ(*std::max_element(row.begin(), row.end()), 1.0);
        }
    }
  }
  auto sis = make_sis();
  EXPECT_EQ(sis.transition(0, 0, std::vector<double>{0.3, 0.7}),
            sis.transition(0, 0, std::vector<double>{1.0 - 0.7, 0.7}));
  EXPECT_NE(sis.transition(0, 0, std::vector<double>{0.3, 0.7}), sis.transition(0, 0, std::vector<double>{0.6, 0.4}));
}

TEST(Affine, RejectsInvalidKernels) {
  AffineModel m;
  m.horizon = 2;
  m.num_states = 2;
  m.num_actions = 1;
  m.initial_dist = {1.0, 0.0};
  m.reward_const = {0.0, 1.0};
  m.trans_const = {0.5, 0.5, 0.0, 1.0};
  EXPECT_NO_THROW(make_affine("ok", m));
  m.trans_const = {0.5, 0.6, 0.0, 1.0};
  EXPECT_THROW(make_affine("bad", m), ConfigError);
  m.trans_const = {0.5, 0.5, 0.0, 1.0};
  m.trans_linear.assign(8, 0.0);
  m.trans_linear[0] = -0.8;  // p(0|0) = 0.5 - 0.8 mu(0) < 0 at mu = e_0
  EXPECT_THROW(make_affine("bad", m), ConfigError);
}

TEST(Affine, MatchesSisModel) {
  // SIS written as an affine model reproduces the built-in kernel.
  AffineModel m;
  m.horizon = 50;
  m.num_states = 2;
  m.num_actions = 2;
  m.initial_dist = {0.4, 0.6};
  m.reward_const = {0.0, -0.5, -1.0, -1.5};
  m.trans_const = {1.0, 0.0, 1.0, 0.0, 0.3, 0.7, 0.3, 0.7};
  m.trans_linear.assign(16, 0.0);
  m.trans_linear[(0 * 2 + 0) * 2 + 1] = -0.81;  // p(S|S,U) -= 0.81 mu(I)
  m.trans_linear[(0 * 2 + 1) * 2 + 1] = 0.81;   // p(I|S,U) += 0.81 mu(I)
  auto env = make_affine("sis_affine", m);
  auto sis = make_sis();
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    auto mu = testing::random_simplex(rng, 2);
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t a = 0; a < 2; ++a) {
        auto x = env.transition(s, a, mu), y = sis.transition(s, a, mu);
        EXPECT_NEAR(x[0], y[0], 1e-15);
        EXPECT_NEAR(x[1], y[1], 1e-15);
        EXPECT_EQ(env.reward(s, a, mu), sis.reward(s, a, mu));
      }
  }
  EXPECT_DOUBLE_EQ(env.reward_bound, 1.5);
}

// Taxi --------------------------------------------------------------------

std::vector<double> uniform_tiles(const TaxiEnvironment& taxi, double mass_here, int here) {
  std::vector<double> mu(taxi.num_tiles(), 0.0);
  mu[static_cast<std::size_t>(here)] = mass_here;
  mu[(static_cast<std::size_t>(here) + 1) % taxi.num_tiles()] += 1.0 - mass_here;
  return mu;
}

TEST(Taxi, DefaultMap) {
  auto taxi = make_taxi();
  EXPECT_EQ(taxi.width(), 3);
  EXPECT_EQ(taxi.height(), 7);
  EXPECT_EQ(taxi.horizon(), 100u);
  EXPECT_EQ(taxi.num_actions(), 5u);
  EXPECT_EQ(taxi.tile(1, 3), Tile::Start);
  EXPECT_EQ(taxi.tile(0, 3), Tile::Wall);
  EXPECT_EQ(taxi.region_tiles(1).size(), 9u);
  EXPECT_EQ(taxi.region_tiles(2).size(), 9u);
  Rng rng(1);
  auto s0 = taxi.sample_initial(rng);
  EXPECT_EQ(s0.x, 1);
  EXPECT_EQ(s0.y, 3);
  EXPECT_FALSE(s0.passenger);
  EXPECT_EQ(s0.board, 0u);
}

TEST(Taxi, JamProbabilityAndRewards) {
  auto taxi = make_taxi();
  EXPECT_DOUBLE_EQ(taxi.jam_probability(0.05), 0.5);
  EXPECT_DOUBLE_EQ(taxi.jam_probability(0.2), 0.7);
  EXPECT_DOUBLE_EQ(taxi.jam_probability(0.0), 0.0);
  EXPECT_DOUBLE_EQ(taxi.region_reward(1), 1.0);
  EXPECT_DOUBLE_EQ(taxi.region_reward(2), 1.2);
}

TEST(Taxi, MalformedMaps) {
  EXPECT_THROW(make_taxi("111\n222\n"), ConfigError);
  EXPECT_THROW(make_taxi("1S1\n2X2\n"), ConfigError);
  EXPECT_THROW(make_taxi("1S1\n2S2\n"), ConfigError);
  EXPECT_THROW(make_taxi("1S1\n22\n"), ConfigError);
  EXPECT_NO_THROW(make_taxi("1S2\n"));
}

TEST(Taxi, PickupAndDeliveryInRegionTwo) {
  TaxiParams params;
  params.spawn_probability = 0.0;
  auto taxi = make_taxi(kDefaultTaxiMap, params);
  std::vector<double> mu(taxi.num_tiles(), 1.0 / static_cast<double>(taxi.num_tiles()));
  Rng rng(3);
  TaxiState s;
  s.x = 0;
  s.y = 5;
  s.board = 1ULL << taxi.tile_index(0, 5);
  auto picked = taxi.step(s, TaxiEnvironment::Wait, mu, rng);
  EXPECT_DOUBLE_EQ(picked.reward, 1.2);
  EXPECT_TRUE(picked.next.passenger);
  EXPECT_EQ(picked.next.board, 0u);
  EXPECT_EQ(taxi.region_of(taxi.tile_index(picked.next.dest_x, picked.next.dest_y)), 2);
  EXPECT_FALSE(picked.next.dest_x == 0 && picked.next.dest_y == 5);

  TaxiState at_dest = picked.next;
  at_dest.x = at_dest.dest_x;
  at_dest.y = at_dest.dest_y;
  auto delivered = taxi.step(at_dest, TaxiEnvironment::Wait, mu, rng);
  EXPECT_DOUBLE_EQ(delivered.reward, 1.2);
  EXPECT_FALSE(delivered.next.passenger);
  EXPECT_EQ(delivered.next.dest_x, 0);
  EXPECT_EQ(delivered.next.dest_y, 0);

  // Waiting with a passenger away from the destination does nothing.
  auto idle = taxi.step(picked.next, TaxiEnvironment::Wait, mu, rng);
  EXPECT_DOUBLE_EQ(idle.reward, 0.0);
  EXPECT_EQ(idle.next, picked.next);
}

TEST(Taxi, MovementRules) {
  TaxiParams params;
  params.spawn_probability = 0.0;
  auto taxi = make_taxi(kDefaultTaxiMap, params);
  std::vector<double> empty(taxi.num_tiles(), 0.0);
  empty[0] = 1.0;  // all mass far away: no jams on the tiles used below
  Rng rng(4);
  TaxiState start = taxi.sample_initial(rng);
  EXPECT_EQ(taxi.step(start, TaxiEnvironment::Left, empty, rng).next, start);   // wall
  EXPECT_EQ(taxi.step(start, TaxiEnvironment::Right, empty, rng).next, start);  // wall
  auto up = taxi.step(start, TaxiEnvironment::Up, empty, rng).next;
  EXPECT_EQ(up.y, 2);
  EXPECT_EQ(taxi.step(up, TaxiEnvironment::Down, empty, rng).next, up);  // no return to S
  TaxiState corner;
  corner.x = 0;
  corner.y = 0;
  EXPECT_EQ(taxi.step(corner, TaxiEnvironment::Up, empty, rng).next, corner);    // off grid
  EXPECT_EQ(taxi.step(corner, TaxiEnvironment::Left, empty, rng).next, corner);  // off grid
  TaxiState above_wall;
  above_wall.x = 0;
  above_wall.y = 2;
  EXPECT_EQ(taxi.step(above_wall, TaxiEnvironment::Down, empty, rng).next, above_wall);

  // Full jam: cap 0.7 means roughly 30% of moves succeed.
  auto jammed = uniform_tiles(taxi, 1.0, taxi.tile_index(1, 1));
  TaxiState mid;
  mid.x = 1;
  mid.y = 1;
  int moved = 0;
  for (int i = 0; i < 20000; ++i) moved += taxi.step(mid, TaxiEnvironment::Up, jammed, rng).next.y == 0;
  EXPECT_NEAR(moved / 20000.0, 0.3, 0.02);
}

TEST(Taxi, WaitNeverMovesAndSpawnsRespectRegions) {
  auto taxi = make_taxi();
  Rng rng(8);
  std::mt19937_64 gen(8);
  TaxiState s = taxi.sample_initial(rng);
  std::vector<double> mu(taxi.num_tiles(), 1.0 / static_cast<double>(taxi.num_tiles()));
  int spawned_region1 = 0;
  for (int i = 0; i < 2000; ++i) {
    std::size_t a = gen() % 5;
    auto r = taxi.step(s, a, mu, rng);
    if (a == TaxiEnvironment::Wait) {
      EXPECT_EQ(r.next.x, s.x);
      EXPECT_EQ(r.next.y, s.y);
    }
    EXPECT_TRUE(taxi.valid(r.next));
    for (std::size_t t = 0; t < taxi.num_tiles(); ++t)
      if (r.next.board >> t & 1ULL) {
        EXPECT_NE(taxi.region_of(static_cast<int>(t)), 0);
      }
    for (int t : taxi.region_tiles(1)) spawned_region1 += (r.next.board >> t & 1ULL) && !(s.board >> t & 1ULL);
    s = r.next;
  }
  EXPECT_GT(spawned_region1, 0);
}

TEST(Taxi, EncodingIsBijectiveOnValidStates) {
  auto taxi = make_taxi();
  std::mt19937_64 gen(21);
  std::set<std::uint64_t> codes;
  std::vector<int> open;
  for (int y = 0; y < taxi.height(); ++y)
    for (int x = 0; x < taxi.width(); ++x)
      if (taxi.tile(x, y) != Tile::Wall) open.push_back(taxi.tile_index(x, y));
  std::vector<int> regions = taxi.region_tiles(1);
  regions.insert(regions.end(), taxi.region_tiles(2).begin(), taxi.region_tiles(2).end());
  std::vector<TaxiState> states;
  for (int i = 0; i < 5000; ++i) {
    TaxiState s;
    int pos = open[gen() % open.size()];
    s.x = pos % taxi.width();
    s.y = pos / taxi.width();
    s.passenger = gen() & 1;
    if (s.passenger) {
      int d = regions[gen() % regions.size()];
      s.dest_x = d % taxi.width();
      s.dest_y = d / taxi.width();
    }
    for (int t : regions)
      if (gen() & 1) s.board |= 1ULL << t;
    ASSERT_TRUE(taxi.valid(s));
    EXPECT_EQ(taxi.decode(taxi.encode(s)), s);
    states.push_back(s);
    codes.insert(taxi.encode(s));
  }
  std::set<std::tuple<int, int, int, int, bool, std::uint64_t>> distinct;
  for (const auto& s : states) distinct.emplace(s.x, s.y, s.dest_x, s.dest_y, s.passenger, s.board);
  EXPECT_EQ(codes.size(), distinct.size());
}

TEST(Taxi, ObservationLayout) {
  auto taxi = make_taxi();
  TaxiState s;
  s.x = 2;
  s.y = 6;
  s.passenger = true;
  s.dest_x = 0;
  s.dest_y = 4;
  s.board = 1ULL << taxi.tile_index(1, 1);
  std::vector<double> obs(taxi.observation_size());
  taxi.observe(s, 50, obs);
  const std::size_t n = taxi.num_tiles();
  EXPECT_EQ(obs.size(), 3 * n + 2);
  EXPECT_EQ(obs[static_cast<std::size_t>(taxi.tile_index(2, 6))], 1.0);
  EXPECT_EQ(obs[n], 1.0);
  EXPECT_EQ(obs[n + 1 + static_cast<std::size_t>(taxi.tile_index(0, 4))], 1.0);
  EXPECT_EQ(obs[2 * n + 1 + static_cast<std::size_t>(taxi.tile_index(1, 1))], 1.0);
  EXPECT_DOUBLE_EQ(obs.back(), 0.5);
  double total = 0.0;
  for (double v : obs) total += v;
  EXPECT_DOUBLE_EQ(total, 4.5);
}

TEST(TabularModel, ObservationAndSampling) {
  TabularModel model(make_sis());
  std::vector<double> obs(model.observation_size());
  model.observe(1, 25, obs);
  EXPECT_EQ(obs, (std::vector<double>{0.0, 1.0, 0.5}));
  Rng rng(2);
  int infected = 0;
  for (int i = 0; i < 10000; ++i) infected += model.sample_initial(rng) == 1;
  EXPECT_NEAR(infected / 10000.0, 0.6, 0.02);
}

}  // namespace
}  // namespace mfg
