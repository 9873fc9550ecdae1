#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "svl/survival.hpp"

namespace {

using svl::Discount;
using svl::HazardCurve;
using svl::SurvivalCurve;
using svl::TailSpec;

std::vector<double> random_hazards(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> h(n);
  for (auto& x : h) x = u(rng);
  return h;
}

TEST(Discount, RejectsOutOfRange) {
  EXPECT_THROW(Discount(1.0), std::invalid_argument);
  EXPECT_THROW(Discount(-0.1), std::invalid_argument);
  EXPECT_NO_THROW(Discount(0.0));
  EXPECT_DOUBLE_EQ(Discount(0.9).horizon_mass(), 10.0);
}

TEST(HazardCurve, RejectsInvalidEntries) {
  EXPECT_THROW(HazardCurve({0.5, 1.2}), std::invalid_argument);
  EXPECT_THROW(HazardCurve({0.5}, -0.1), std::invalid_argument);
  EXPECT_THROW(SurvivalCurve({0.5, 0.6}), std::invalid_argument);
}

TEST(HazardToSurvival, Examples) {
  EXPECT_EQ(svl::hazard_to_survival(HazardCurve({1.0})).values()[0], 0.0);
  const auto s = svl::hazard_to_survival(HazardCurve({0.5, 0.5, 0.5}));
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_DOUBLE_EQ(s[1], 0.25);
  EXPECT_DOUBLE_EQ(s[2], 0.125);
  const auto flat = svl::hazard_to_survival(HazardCurve({0.0, 0.0}));
  EXPECT_EQ(flat[0], 1.0);
  EXPECT_EQ(flat[1], 1.0);
}

TEST(EventPmf, Examples) {
  EXPECT_EQ(svl::event_pmf(HazardCurve({1.0})), std::vector<double>{1.0});
  auto p = svl::event_pmf(HazardCurve({0.5, 0.5}));
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.25);
  // 0.2; 0.8 * 0.3; 0.8 * 0.7 * 0.4
  p = svl::event_pmf(HazardCurve({0.2, 0.3, 0.4}));
  EXPECT_NEAR(p[0], 0.2, 1e-15);
  EXPECT_NEAR(p[1], 0.24, 1e-15);
  EXPECT_NEAR(p[2], 0.224, 1e-15);
}

TEST(SurvivalProperties, PmfPlusTerminalMassIsOne) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const auto n = 1 + rng() % 200;
    HazardCurve h(random_hazards(rng, n));
    const auto p = svl::event_pmf(h);
    double total = svl::hazard_to_survival(h).back();
    for (double x : p) total += x;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(SurvivalProperties, SurvivalIsNonIncreasingAndBounded) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 500; ++trial) {
    auto h = random_hazards(rng, 1 + rng() % 100);
    if (trial % 3 == 0) {
      for (auto& x : h) x *= 1e-3;
    }
    const auto s = svl::hazard_to_survival(HazardCurve(h));
    for (std::size_t t = 0; t < s.size(); ++t) {
      EXPECT_GE(s[t], 0.0);
      EXPECT_LE(s[t], 1.0);
      if (t > 0) {
        EXPECT_LE(s[t], s[t - 1]);
      }
    }
  }
}

TEST(ValueFromSurvival, NeverReachedIsMinusHorizonMass) {
  SurvivalCurve ones(std::vector<double>(20, 1.0));
  EXPECT_NEAR(svl::value_from_survival(ones, Discount(0.9), TailSpec::constant_survival()), -10.0,
              1e-12);
  EXPECT_NEAR(svl::q_value_from_survival(ones, Discount(0.99), TailSpec::constant_survival()),
              -100.0, 1e-10);
}

TEST(ValueFromSurvival, ConstantHazardClosedForm) {
  const double h = 0.5, g = 0.9;
  const double expected = -(1 - h) / (1 - g * (1 - h));
  EXPECT_NEAR(expected, -0.9090909090909091, 1e-15);
  // Any stored prefix combined with the constant-hazard tail.
  for (std::size_t n : {0u, 1u, 5u, 40u}) {
    const auto s = svl::hazard_to_survival(HazardCurve(std::vector<double>(n, h)));
    EXPECT_NEAR(svl::value_from_survival(s, Discount(g), TailSpec::constant_hazard(h)), expected,
                1e-14)
        << n;
  }
  // Truncation far out converges to the same number.
  const auto long_s = svl::hazard_to_survival(HazardCurve(std::vector<double>(400, h)));
  EXPECT_NEAR(svl::value_from_survival(long_s, Discount(g), TailSpec::truncate()), expected, 1e-14);
}

TEST(ValueFromSurvival, ImmediateHitIsZero) {
  SurvivalCurve zeros(std::vector<double>(10, 0.0));
  EXPECT_EQ(svl::q_value_from_survival(zeros, Discount(0.9), TailSpec::constant_survival()), 0.0);
}

TEST(ValueFromSurvival, SingleStepSurvivalGivesMinusOne) {
  // Survive step 0, hit at step 1.
  SurvivalCurve s({1.0, 0.0, 0.0});
  EXPECT_NEAR(svl::value_from_survival(s, Discount(0.9), TailSpec::truncate()), -1.0, 1e-15);
}

TEST(SurvivalProperties, ValueWithinBounds) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 0.999);
  const TailSpec tails[] = {TailSpec::truncate(), TailSpec::constant_survival(),
                            TailSpec::constant_hazard(0.0), TailSpec::constant_hazard(0.3)};
  for (int trial = 0; trial < 500; ++trial) {
    auto h = random_hazards(rng, rng() % 60);
    for (auto& x : h) x *= x * x;
    const auto s = svl::hazard_to_survival(HazardCurve(h));
    const Discount g(u(rng));
    for (const auto& tail : tails) {
      const double v = svl::value_from_survival(s, g, tail);
      EXPECT_LE(v, 0.0);
      EXPECT_GE(v, -g.horizon_mass() * (1 + 1e-12));
    }
  }
}

TEST(SurvivalProperties, TailsBracketEachOther) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = svl::hazard_to_survival(HazardCurve(random_hazards(rng, 1 + rng() % 10)));
    const Discount g(0.95);
    const double trunc = svl::value_from_survival(s, g, TailSpec::truncate());
    const double hz = svl::value_from_survival(s, g, TailSpec::constant_hazard(0.2));
    const double surv = svl::value_from_survival(s, g, TailSpec::constant_survival());
    EXPECT_GE(trunc, hz);
    EXPECT_GE(hz, surv);
  }
}

TEST(SurvivalProperties, MonteCarloReturnMatchesValue) {
  // Event times drawn from the hazards; an event at T earns -1 on steps 0..T-1.
  std::mt19937_64 rng(15);
  const std::vector<double> h = {0.05, 0.3, 0.1, 0.2, 0.02, 0.4};
  const double tail = 0.15;
  const double g = 0.9;
  const auto s = svl::hazard_to_survival(HazardCurve(h));
  const double v = svl::value_from_survival(s, Discount(g), TailSpec::constant_hazard(tail));

  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    std::size_t t = 0;
    for (;; ++t) {
      const double hz = t < h.size() ? h[t] : tail;
      if (u(rng) < hz) break;
    }
    const double ret = -(1.0 - std::pow(g, static_cast<double>(t))) / (1.0 - g);
    sum += ret;
    sum_sq += ret * ret;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / n);
  EXPECT_NEAR(mean, v, 3 * se);
}

}  // namespace
