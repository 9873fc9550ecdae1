#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "svl/gridworld.hpp"
#include "svl/trainer.hpp"

namespace {

using svl::Discount;
using svl::GridMdp;
using svl::TabularPolicy;

constexpr int kRight = static_cast<int>(svl::Action::kRight);

TabularPolicy deterministic(const GridMdp& mdp, int action) {
  TabularPolicy pi(mdp.num_states(), mdp.num_goals());
  for (std::size_t s = 0; s < mdp.num_states(); ++s) {
    for (std::size_t g = 0; g < mdp.num_goals(); ++g) {
      auto row = pi.row(static_cast<svl::StateId>(s), static_cast<svl::GoalId>(g));
      std::fill(row.begin(), row.end(), 0.0);
      row[static_cast<std::size_t>(action)] = 1.0;
    }
  }
  return pi;
}

TabularPolicy random_policy(const GridMdp& mdp, std::mt19937_64& rng) {
  TabularPolicy pi(mdp.num_states(), mdp.num_goals());
  std::gamma_distribution<double> gamma(0.7, 1.0);
  for (std::size_t s = 0; s < mdp.num_states(); ++s) {
    for (std::size_t g = 0; g < mdp.num_goals(); ++g) {
      auto row = pi.row(static_cast<svl::StateId>(s), static_cast<svl::GoalId>(g));
      double sum = 0.0;
      for (auto& p : row) sum += (p = gamma(rng) + 1e-3);
      for (auto& p : row) p /= sum;
    }
  }
  return pi;
}

GridMdp corridor() { return GridMdp(svl::parse_maze("S.G\n"), 0.0); }

TEST(MazeParser, ParsesMarkersAndWalls) {
  const auto maze = svl::parse_maze("#####\n#S.G#\n#.#.#\n#####\n");
  EXPECT_EQ(maze.width, 5);
  EXPECT_EQ(maze.height, 4);
  EXPECT_EQ(*maze.start, (svl::Cell{1, 1}));
  EXPECT_EQ(*maze.goal, (svl::Cell{1, 3}));
  EXPECT_TRUE(maze.wall(2, 2));
  EXPECT_FALSE(maze.wall(2, 1));
  GridMdp mdp(maze, 0.0);
  EXPECT_EQ(mdp.num_states(), 5u);
}

TEST(MazeParser, ReportsLineAndColumn) {
  try {
    svl::parse_maze("...\n.x.\n");
    FAIL();
  } catch (const svl::MazeParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.column(), 2u);
  }
  try {
    svl::parse_maze("...\n..\n");
    FAIL();
  } catch (const svl::MazeParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(svl::parse_maze("S.S\n"), svl::MazeParseError);
  EXPECT_THROW(svl::parse_maze("G..\n..G\n"), svl::MazeParseError);
  EXPECT_THROW(svl::parse_maze(""), svl::MazeParseError);
  EXPECT_THROW(svl::parse_maze("###\n"), svl::MazeParseError);
  EXPECT_THROW(svl::parse_maze("...\n\n...\n"), svl::MazeParseError);
  EXPECT_NO_THROW(svl::parse_maze("...\r\n...\r\n\n"));
}

TEST(GridMdp, WallsAndBordersKeepAgentInPlace) {
  GridMdp mdp(svl::parse_maze(".#.\n...\n"), 0.0);
  const auto s = *mdp.state_at({0, 0});
  EXPECT_EQ(mdp.move(s, kRight), s);
  EXPECT_EQ(mdp.move(s, static_cast<int>(svl::Action::kUp)), s);
  EXPECT_EQ(mdp.move(s, static_cast<int>(svl::Action::kDown)), *mdp.state_at({1, 0}));
  EXPECT_FALSE(mdp.state_at({0, 1}).has_value());
  EXPECT_THROW(GridMdp(svl::open_maze(2, 2), 1.5), std::invalid_argument);
}

TEST(GridMdp, TransitionsAreDistributions) {
  GridMdp mdp(svl::parse_maze("..#.\n....\n.#..\n"), 0.3);
  for (std::size_t s = 0; s < mdp.num_states(); ++s) {
    for (int a = 0; a < svl::kNumActions; ++a) {
      double total = 0.0;
      for (const auto& succ : mdp.transitions(static_cast<svl::StateId>(s), a)) {
        EXPECT_GT(succ.prob, 0.0);
        total += succ.prob;
      }
      EXPECT_NEAR(total, 1.0, 1e-15);
    }
  }
}

TEST(GridMdp, ShortestPaths) {
  GridMdp mdp(svl::parse_maze("...\n##.\n...\n"), 0.0);
  const auto a = *mdp.state_at({0, 0});
  const auto b = *mdp.state_at({2, 0});
  EXPECT_EQ(mdp.distance(a, b), 6);
  EXPECT_EQ(mdp.shortest_hitting_time(a, b), 5);
  EXPECT_EQ(mdp.shortest_hitting_time(a, a), 0);
  GridMdp split(svl::parse_maze(".#.\n"), 0.0);
  EXPECT_EQ(split.distance(0, 1), -1);
}

TEST(TabularPolicy, RowsAreNormalised) {
  GridMdp mdp(svl::open_maze(4, 3), 0.0);
  EXPECT_NO_THROW(TabularPolicy::uniform(mdp).validate());
  const auto pi = TabularPolicy::noisy_optimal(mdp, 0.8);
  EXPECT_NO_THROW(pi.validate());
  const auto s = *mdp.state_at({0, 0});
  const auto g = *mdp.state_at({0, 3});
  EXPECT_NEAR(pi.prob(s, g, kRight), 0.8 + 0.2 / 5, 1e-15);
  EXPECT_EQ(pi.greedy(s, g), kRight);
  EXPECT_EQ(mdp.move(g, pi.greedy(g, g)), g);
}

TEST(HittingOracle, KernelIsSubstochastic) {
  std::mt19937_64 rng(51);
  GridMdp mdp(svl::parse_maze("....\n.#..\n..#.\n....\n"), 0.2);
  const auto pi = random_policy(mdp, rng);
  for (std::size_t g = 0; g < mdp.num_goals(); ++g) {
    svl::HittingOracle oracle(mdp, pi, static_cast<svl::GoalId>(g));
    const auto& M = oracle.kernel();
    EXPECT_GE(M.minCoeff(), 0.0);
    EXPECT_LE(M.rowwise().sum().maxCoeff(), 1.0 + 1e-15);
    EXPECT_EQ(M.col(static_cast<Eigen::Index>(g)).sum(), 0.0);
  }
}

TEST(ExactSurvival, CorridorHitsAtStepOne) {
  const auto mdp = corridor();
  const auto pi = deterministic(mdp, kRight);
  svl::HittingOracle oracle(mdp, pi, 2);
  const auto s = svl::exact_survival(oracle, 0, 5);
  EXPECT_EQ(s[0], 1.0);
  for (std::size_t t = 1; t < 5; ++t) EXPECT_EQ(s[t], 0.0);
  const auto adjacent = svl::exact_survival(oracle, 1, 5);
  for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(adjacent[t], 0.0);
  EXPECT_THROW(svl::exact_survival(oracle, 0, 0), std::invalid_argument);
}

TEST(ExactSurvival, MatchesMonteCarloOnOpenGrid) {
  GridMdp mdp(svl::open_maze(5, 5), 0.0);
  const auto pi = TabularPolicy::uniform(mdp);
  const auto start = *mdp.state_at({0, 0});
  const auto goal = *mdp.state_at({2, 3});
  const std::int64_t T = 30;
  svl::HittingOracle oracle(mdp, pi, goal);
  const auto exact = svl::exact_survival(oracle, start, T);

  std::mt19937_64 rng(52);
  const int n = 1000000;
  std::vector<int> alive(T, 0);
  for (int i = 0; i < n; ++i) {
    const auto r = svl::rollout(mdp, pi, start, goal, T, rng);
    const std::int64_t last = r.observation.delta ? r.observation.tau : T;
    for (std::int64_t t = 0; t < std::min(last, T); ++t) ++alive[t];
  }
  for (std::int64_t t = 0; t < T; ++t) {
    const double p = exact[static_cast<std::size_t>(t)];
    const double se = std::sqrt(std::max(p * (1 - p), 1e-12) / n);
    EXPECT_NEAR(alive[t] / double(n), p, 3 * se + 1e-12) << "t=" << t;
  }
}

TEST(ExactSurvival, NonIncreasingAndBounded) {
  std::mt19937_64 rng(53);
  GridMdp mdp(svl::parse_maze("...#\n.#..\n....\n"), 0.1);
  const auto pi = random_policy(mdp, rng);
  for (std::size_t g = 0; g < mdp.num_goals(); ++g) {
    svl::HittingOracle oracle(mdp, pi, static_cast<svl::GoalId>(g));
    for (const auto& curve : svl::exact_survival_all(oracle, 60)) {
      for (std::size_t t = 0; t < curve.size(); ++t) {
        EXPECT_GE(curve[t], 0.0);
        EXPECT_LE(curve[t], 1.0);
        if (t > 0) {
          EXPECT_LE(curve[t], curve[t - 1] + 1e-15);
        }
      }
    }
  }
}

TEST(ExactValue, Examples) {
  const auto mdp = corridor();
  const auto pi = deterministic(mdp, kRight);
  svl::HittingOracle oracle(mdp, pi, 2);
  EXPECT_NEAR(svl::exact_value(oracle, 0, Discount(0.9)), -1.0, 1e-15);
  const auto s = svl::exact_survival(oracle, 0, 10);
  EXPECT_NEAR(svl::value_from_survival(s, Discount(0.9), svl::TailSpec::truncate()), -1.0, 1e-15);

  GridMdp split(svl::parse_maze("..#..\n"), 0.0);
  const auto uniform = TabularPolicy::uniform(split);
  svl::HittingOracle walled(split, uniform, 3);
  EXPECT_NEAR(svl::exact_value(walled, 0, Discount(0.9)), -10.0, 1e-12);
}

TEST(ExactValue, ThreeRoutesAgree) {
  std::mt19937_64 rng(54);
  GridMdp mdp(svl::open_maze(5, 5), 0.0);
  const Discount gamma(0.9);
  for (const auto& pi : {TabularPolicy::uniform(mdp), random_policy(mdp, rng)}) {
    for (svl::GoalId g : {0, 7, 24}) {
      svl::HittingOracle oracle(mdp, pi, g);
      const auto linear = svl::exact_values(oracle, gamma);
      const auto dp = svl::value_iteration(mdp, pi, g, gamma);
      const auto curves = svl::exact_survival_all(oracle, 400);
      for (std::size_t s = 0; s < mdp.num_states(); ++s) {
        const double from_survival = svl::value_from_survival(
            svl::SurvivalCurve(curves[s]), gamma, svl::TailSpec::truncate());
        EXPECT_NEAR(linear[s], dp[s], 1e-9);
        EXPECT_NEAR(linear[s], from_survival, 1e-9);
      }
    }
  }
}

TEST(QOracle, Examples) {
  const auto mdp = corridor();
  const auto pi = deterministic(mdp, kRight);
  svl::HittingOracle oracle(mdp, pi, 2);
  EXPECT_EQ(svl::q_oracle(oracle, 1, kRight, Discount(0.9)), 0.0);
  // Wrong way first: bump into the wall, then two steps right.
  const double q_left = svl::q_oracle(oracle, 0, static_cast<int>(svl::Action::kLeft), Discount(0.9));
  EXPECT_NEAR(q_left, -1.0 - 0.9, 1e-15);
  const auto s_left =
      svl::exact_action_survival(oracle, 0, static_cast<int>(svl::Action::kLeft), 10);
  EXPECT_NEAR(svl::q_value_from_survival(s_left, Discount(0.9), svl::TailSpec::truncate()), q_left,
              1e-15);

  GridMdp split(svl::parse_maze("..#..\n"), 0.0);
  const auto uniform = TabularPolicy::uniform(split);
  svl::HittingOracle walled(split, uniform, 3);
  EXPECT_NEAR(svl::q_oracle(walled, 0, kRight, Discount(0.9)), -10.0, 1e-12);
}

TEST(QOracle, MatchesActionSurvivalIdentity) {
  std::mt19937_64 rng(55);
  GridMdp mdp(svl::parse_maze("....\n.#..\n....\n..#.\n"), 0.15);
  const auto pi = random_policy(mdp, rng);
  const Discount gamma(0.85);
  for (svl::GoalId g : {0, 5, 13}) {
    svl::HittingOracle oracle(mdp, pi, g);
    for (std::size_t s = 0; s < mdp.num_states(); ++s) {
      double v_from_q = 0.0;
      for (int a = 0; a < svl::kNumActions; ++a) {
        const double q = svl::q_oracle(oracle, static_cast<svl::StateId>(s), a, gamma);
        const auto curve = svl::exact_action_survival(oracle, static_cast<svl::StateId>(s), a, 300);
        EXPECT_NEAR(q, svl::q_value_from_survival(curve, gamma, svl::TailSpec::truncate()), 1e-9);
        v_from_q += pi.prob(static_cast<svl::StateId>(s), g, a) * q;
      }
      EXPECT_NEAR(v_from_q, svl::exact_value(oracle, static_cast<svl::StateId>(s), gamma), 1e-9);
    }
  }
}

TEST(QOracle, MatchesMonteCarloWithFixedFirstAction) {
  GridMdp mdp(svl::parse_maze("....\n.#..\n..#.\n....\n"), 0.1);
  const auto pi = TabularPolicy::noisy_optimal(mdp, 0.6);
  const Discount gamma(0.9);
  const svl::GoalId goal = *mdp.state_at({3, 3});
  svl::HittingOracle oracle(mdp, pi, goal);
  std::mt19937_64 rng(56);
  const int n = 20000;
  for (svl::StateId s : {0, 4}) {
    for (int a = 0; a < svl::kNumActions; ++a) {
      double sum = 0.0, sum_sq = 0.0;
      for (int i = 0; i < n; ++i) {
        double ret = 0.0, discount = 1.0;
        svl::StateId cur = mdp.step(s, a, rng);
        while (cur != goal && discount > 1e-12) {
          ret -= discount;
          discount *= gamma.value();
          cur = mdp.step(cur, pi.sample(cur, goal, rng), rng);
        }
        if (cur != goal) ret -= discount / (1 - gamma.value());
        sum += ret;
        sum_sq += ret * ret;
      }
      const double mean = sum / n;
      const double se = std::sqrt((sum_sq / n - mean * mean) / n);
      EXPECT_NEAR(mean, svl::q_oracle(oracle, s, a, gamma), 3 * se + 1e-9) << s << "," << a;
    }
  }
}

TEST(Rollout, CorridorAndCensoring) {
  const auto mdp = corridor();
  const auto pi = deterministic(mdp, kRight);
  std::mt19937_64 rng(57);
  for (int i = 0; i < 10; ++i) {
    const auto r = svl::rollout(mdp, pi, 0, 2, 10, rng);
    EXPECT_EQ(r.observation, svl::SurvivalTuple::event(0, 2, 1, 9));
    EXPECT_EQ(r.trajectory.states, (std::vector<svl::StateId>{0, 1, 2}));
  }
  GridMdp split(svl::parse_maze(".#.\n"), 0.0);
  const auto uniform = TabularPolicy::uniform(split);
  const auto r = svl::rollout(split, uniform, 0, 1, 1, rng);
  // One transition observed without a hit: T > 0.
  EXPECT_EQ(r.observation, svl::SurvivalTuple::censored(0, 1, 0));
  EXPECT_EQ(r.trajectory.transitions(), 1u);
  EXPECT_THROW(svl::rollout(split, uniform, 0, 1, 0, rng), std::invalid_argument);
}

TEST(Rollout, EventFrequencyMatchesSurvival) {
  GridMdp mdp(svl::parse_maze("....\n.#..\n....\n"), 0.2);
  const auto pi = TabularPolicy::noisy_optimal(mdp, 0.5);
  const svl::GoalId goal = 9;
  const std::int64_t horizon = 6;
  svl::HittingOracle oracle(mdp, pi, goal);
  const auto s = svl::exact_survival(oracle, 0, horizon);
  std::mt19937_64 rng(58);
  const int n = 100000;
  int events = 0;
  for (int i = 0; i < n; ++i) events += svl::rollout(mdp, pi, 0, goal, horizon, rng).observation.delta;
  const double p = 1.0 - s[static_cast<std::size_t>(horizon - 1)];
  EXPECT_NEAR(events / double(n), p, 3 * std::sqrt(p * (1 - p) / n));
}

TEST(Relabel, RandomGoalTuplesMatchOracleHazards) {
  // Goal-independent behaviour and goals drawn independently of the
  // trajectory: per-(s, g) tuples follow the oracle hitting law.
  GridMdp mdp(svl::parse_maze("...\n.#.\n...\n"), 0.0);
  const auto pi = TabularPolicy::uniform(mdp);
  std::mt19937_64 rng(59);
  std::vector<svl::GoalId> pool(mdp.num_goals());
  for (std::size_t g = 0; g < pool.size(); ++g) pool[g] = static_cast<svl::GoalId>(g);
  std::vector<svl::SurvivalTuple> tuples;
  while (tuples.size() < 100000) {
    const auto traj = svl::walk(mdp, pi, static_cast<svl::StateId>(rng() % mdp.num_states()), 0, 40, rng);
    const auto batch = svl::relabel(traj, {0.0, 0.0, 1.0}, svl::kNoHorizonCap, rng, pool);
    tuples.insert(tuples.end(), batch.begin(), batch.end());
  }
  const svl::StateId s = 0;
  const svl::GoalId g = 4;
  svl::HittingOracle oracle(mdp, pi, g);
  const auto S = svl::exact_survival(oracle, s, 10);
  for (std::int64_t t = 0; t < 6; ++t) {
    double at_risk = 0.0, events = 0.0;
    for (const auto& o : tuples) {
      if (o.state != s || o.goal != g) continue;
      const std::int64_t last = o.delta ? o.tau : o.c;
      if (last >= t) at_risk += 1.0;
      if (o.delta && o.tau == t) events += 1.0;
    }
    const double prev = t == 0 ? 1.0 : S[static_cast<std::size_t>(t - 1)];
    const double h = 1.0 - S[static_cast<std::size_t>(t)] / prev;
    const double se = std::sqrt(h * (1 - h) / at_risk);
    EXPECT_NEAR(events / at_risk, h, 3 * se) << "t=" << t;
  }
}

TEST(TabularHazard, ReproducesOracleHazardsOnExactData) {
  // Data whose empirical law equals the oracle law up to rounding of counts.
  GridMdp mdp(svl::parse_maze("...\n.#.\n...\n"), 0.1);
  const auto pi = TabularPolicy::uniform(mdp);
  const svl::StateId s = 0;
  const svl::GoalId g = 4;
  const std::int64_t H = 10;
  svl::HittingOracle oracle(mdp, pi, g);
  const auto S = svl::exact_survival(oracle, s, H + 1);
  const int n = 40000;
  std::vector<svl::SurvivalTuple> data;
  double prev = 1.0;
  for (std::int64_t t = 0; t <= H; ++t) {
    const int count = static_cast<int>(std::lround(n * (prev - S[static_cast<std::size_t>(t)])));
    for (int i = 0; i < count; ++i) data.push_back(svl::SurvivalTuple::event(s, g, t, H));
    prev = S[static_cast<std::size_t>(t)];
  }
  while (data.size() < static_cast<std::size_t>(n)) data.push_back(svl::SurvivalTuple::censored(s, g, H));

  const auto spec = svl::uniform_edges(H);
  svl::TabularHazard model(mdp.num_states(), mdp.num_goals(), spec.bins());
  svl::TrainConfig cfg;
  cfg.batch_size = 0;
  cfg.total_steps = 800;
  cfg.learning_rate = 0.1;
  cfg.eval_every = 800;
  svl::fit_hazard(model, data, spec, svl::Likelihood::kUnbinned, cfg);
  const auto logits = model.logits(s, g);
  double worst = 0.0;
  prev = 1.0;
  for (std::int64_t t = 0; t <= H; ++t) {
    const double h = 1.0 - S[static_cast<std::size_t>(t)] / prev;
    worst = std::max(worst, std::abs(svl::sigmoid(logits[static_cast<std::size_t>(t)]) - h));
    prev = S[static_cast<std::size_t>(t)];
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Features, NormalisedCoordinates) {
  GridMdp mdp(svl::open_maze(3, 2), 0.0);
  const auto f = mdp.features();
  EXPECT_EQ(f.input_dim(), 4u);
  std::vector<double> x(4);
  f.fill(0, 5, x);
  EXPECT_EQ(x, (std::vector<double>{-1.0, -1.0, 1.0, 1.0}));
}

}  // namespace
