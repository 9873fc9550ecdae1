#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "svl/hazard_model.hpp"
#include "svl/trainer.hpp"

namespace {

using svl::BinSpec;
using svl::Likelihood;
using svl::LowRankConfig;
using svl::LowRankHazardNet;
using svl::SurvivalTuple;
using svl::TabularHazard;

constexpr Likelihood kAllKinds[] = {Likelihood::kUnbinned, Likelihood::kPch, Likelihood::kPcs};

std::vector<SurvivalTuple> random_batch(std::mt19937_64& rng, std::size_t n, std::size_t states,
                                        std::size_t goals, std::int64_t H) {
  std::vector<SurvivalTuple> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = static_cast<svl::StateId>(rng() % states);
    const auto g = static_cast<svl::GoalId>(rng() % goals);
    const auto c = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(H + 1));
    if (rng() % 3 != 0) {
      out.push_back(SurvivalTuple::event(s, g, static_cast<std::int64_t>(rng() % (c + 1)), c));
    } else {
      out.push_back(SurvivalTuple::censored(s, g, c));
    }
  }
  return out;
}

svl::FeatureTable random_features(std::mt19937_64& rng, std::size_t states, std::size_t goals,
                                  std::size_t dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  svl::FeatureTable t;
  t.state_dim = dim;
  t.goal_dim = dim;
  for (std::size_t i = 0; i < states * dim; ++i) t.state_rows.push_back(n(rng));
  for (std::size_t i = 0; i < goals * dim; ++i) t.goal_rows.push_back(n(rng));
  return t;
}

LowRankHazardNet make_net(const LowRankConfig& cfg, std::uint64_t seed, std::size_t states,
                          std::size_t goals) {
  std::mt19937_64 rng(seed);
  LowRankHazardNet net(cfg);
  net.initialize(rng);
  // Push the selector away from uniform so its gradient is exercised.
  std::normal_distribution<double> n(0.0, 0.5);
  for (std::size_t j = 0; j < cfg.basis_sets; ++j) net.params()[net.selector_bias_offset() + j] = n(rng);
  net.set_features(random_features(rng, states, goals, cfg.input_dim / 2));
  return net;
}

// Central differences on `probes` random parameters; returns the max relative error.
template <svl::HazardModel Model>
double gradient_check(Model& model, std::span<const SurvivalTuple> batch, const BinSpec& spec,
                      Likelihood kind, std::size_t probes, std::mt19937_64& rng) {
  const auto analytic = svl::nll_grad(model, batch, spec, kind).gradient;
  const double step = 1e-4;
  double worst = 0.0;
  for (std::size_t p = 0; p < probes; ++p) {
    const std::size_t i = rng() % model.num_params();
    const double saved = model.params()[i];
    model.params()[i] = saved + step;
    const double up = svl::mean_nll(model, batch, spec, kind);
    model.params()[i] = saved - step;
    const double down = svl::mean_nll(model, batch, spec, kind);
    model.params()[i] = saved;
    const double numeric = (up - down) / (2 * step);
    const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
  }
  return worst;
}

TEST(TabularHazard, InitialisationAndBounds) {
  TabularHazard m(3, 4, 5);
  EXPECT_EQ(m.num_params(), 3u * 4u * 7u);
  const auto l = m.logits(2, 3);
  EXPECT_EQ(l.front(), -2.0);
  for (std::size_t i = 1; i < l.size(); ++i) EXPECT_EQ(l[i], 0.0);
  EXPECT_THROW(m.logits(3, 0), std::out_of_range);
  EXPECT_THROW(TabularHazard(0, 1, 1), std::invalid_argument);
}

TEST(TabularHazard, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(41);
  const auto spec = svl::geometric_edges(5, 20);
  TabularHazard m(3, 3, spec.bins());
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& p : m.params()) p = n(rng);
  const auto batch = random_batch(rng, 64, 3, 3, spec.horizon());
  for (auto kind : kAllKinds) {
    EXPECT_LT(gradient_check(m, batch, spec, kind, 50, rng), 1e-5);
  }
}

TEST(LowRankNet, GradientMatchesFiniteDifferencesAcrossArchitectures) {
  std::mt19937_64 rng(42);
  const auto spec = svl::geometric_edges(6, 30);
  for (std::size_t depth : {1u, 2u, 3u}) {
    for (std::size_t width : {8u, 64u}) {
      for (std::size_t basis : {1u, 4u}) {
        for (std::size_t rank : {2u, 8u}) {
          const LowRankConfig cfg{4, width, depth, basis, rank, spec.bins()};
          auto net = make_net(cfg, rng(), 5, 5);
          const auto batch = random_batch(rng, 16, 5, 5, spec.horizon());
          for (auto kind : kAllKinds) {
            EXPECT_LT(gradient_check(net, batch, spec, kind, 50, rng), 1e-5)
                << "depth " << depth << " width " << width << " basis " << basis << " rank "
                << rank;
          }
        }
      }
    }
  }
}

TEST(LowRankNet, ZeroParametersGiveHalfHazards) {
  LowRankHazardNet net(LowRankConfig{4, 8, 2, 3, 2, 5});
  const std::vector<double> x = {0.3, -1.0, 2.0, 0.5};
  const auto logits = net.logits_for(x);
  ASSERT_EQ(logits.size(), 7u);
  for (double l : logits) EXPECT_EQ(svl::sigmoid(l), 0.5);
}

TEST(LowRankNet, OneHotSelectorCollapsesContraction) {
  const LowRankConfig cfg{4, 8, 2, 3, 2, 5};
  std::mt19937_64 rng(43);
  LowRankHazardNet net(cfg);
  net.initialize(rng);
  auto p = net.params();
  // Selector: basis 1 wins, the others underflow to exactly zero weight.
  for (std::size_t j = 0; j < cfg.basis_sets; ++j) {
    for (std::size_t i = 0; i < cfg.width; ++i) p[net.selector_weight_offset() + j * cfg.width + i] = 0.0;
    p[net.selector_bias_offset() + j] = j == 1 ? 0.0 : -1e4;
  }
  for (std::size_t t = 0; t <= cfg.bins; ++t) {
    for (std::size_t r = 0; r < cfg.rank; ++r) p[net.psi_index(1, t, r)] = r == 0 ? 1.0 : 0.0;
    p[net.time_bias_offset() + t] = 0.0;
  }
  const std::vector<double> x = {0.1, 0.2, -0.3, 0.4};
  const auto logits = net.logits_for(x);

  // c(z)[0] computed independently from the encoder output.
  LowRankHazardNet::Workspace ws = net.make_workspace();
  net.forward_features(x, ws);
  double c0 = p[net.coeff_bias_offset()];
  for (std::size_t i = 0; i < cfg.width; ++i) {
    c0 += p[net.coeff_weight_offset() + i] * ws.hidden[cfg.depth][i];
  }
  for (std::size_t t = 1; t < logits.size(); ++t) EXPECT_DOUBLE_EQ(logits[t], c0);
}

TEST(LowRankNet, RejectsWrongInputDimension) {
  LowRankHazardNet net(LowRankConfig{4, 8, 1, 1, 2, 3});
  const std::vector<double> x = {1.0, 2.0};
  EXPECT_THROW(net.logits_for(x), std::invalid_argument);
  svl::FeatureTable wrong;
  wrong.state_dim = wrong.goal_dim = 1;
  EXPECT_THROW(net.set_features(wrong), std::invalid_argument);
  EXPECT_THROW(net.logits(0, 0), std::logic_error);
}

TEST(LowRankNet, BasisPermutationIsBitIdentical) {
  const LowRankConfig cfg{4, 16, 2, 5, 3, 6};
  std::mt19937_64 rng(44);
  auto net = make_net(cfg, 44, 4, 4);
  std::vector<std::size_t> perm(cfg.basis_sets);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    LowRankHazardNet permuted = net;
    auto src = net.params();
    auto dst = permuted.params();
    for (std::size_t j = 0; j < cfg.basis_sets; ++j) {
      const std::size_t from = perm[j];
      dst[permuted.selector_bias_offset() + j] = src[net.selector_bias_offset() + from];
      for (std::size_t i = 0; i < cfg.width; ++i) {
        dst[permuted.selector_weight_offset() + j * cfg.width + i] =
            src[net.selector_weight_offset() + from * cfg.width + i];
      }
      for (std::size_t t = 0; t <= cfg.bins; ++t) {
        for (std::size_t r = 0; r < cfg.rank; ++r) {
          dst[permuted.psi_index(j, t, r)] = src[net.psi_index(from, t, r)];
        }
      }
    }
    for (svl::StateId s = 0; s < 4; ++s) {
      for (svl::GoalId g = 0; g < 4; ++g) EXPECT_EQ(net.logits(s, g), permuted.logits(s, g));
    }
  }
}

TEST(HazardModel, ForwardIsDeterministic) {
  const LowRankConfig cfg{4, 16, 2, 4, 8, 6};
  const auto a = make_net(cfg, 7, 3, 3);
  const auto b = make_net(cfg, 7, 3, 3);
  EXPECT_EQ(a.logits(1, 2), b.logits(1, 2));
  EXPECT_TRUE(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
}

TEST(HazardModel, GradientIndependentOfWorkerCount) {
  const auto spec = svl::geometric_edges(6, 30);
  const LowRankConfig cfg{4, 8, 1, 2, 2, spec.bins()};
  const auto net = make_net(cfg, 8, 6, 6);
  std::mt19937_64 rng(45);
  const auto batch = random_batch(rng, 3 * svl::kGradientShard + 17, 6, 6, spec.horizon());
  const auto one = svl::nll_grad(net, batch, spec, Likelihood::kPcs, 1);
  for (std::size_t workers : {2u, 3u, 8u}) {
    const auto many = svl::nll_grad(net, batch, spec, Likelihood::kPcs, workers);
    EXPECT_EQ(one.risk, many.risk);
    EXPECT_EQ(one.gradient, many.gradient);
  }
}

TEST(HazardModel, EventGradientSignLowersLossWithHigherBinHazard) {
  const auto spec = svl::geometric_edges(4, 16);
  TabularHazard m(1, 1, spec.bins());
  // tau = 5 puts the event at the first step of bin 2 on the shifted clock.
  const std::vector<SurvivalTuple> batch = {SurvivalTuple::event(0, 0, 5, 16)};
  for (auto kind : kAllKinds) {
    const auto rg = svl::nll_grad(m, batch, spec, kind);
    EXPECT_DOUBLE_EQ(rg.gradient[1 + 2], svl::sigmoid(0.0) - 1.0);
    EXPECT_LT(rg.gradient[1 + 2], 0.0);
  }
}

TEST(HazardModel, GradientDescentReachesCountingEstimator) {
  // Unit bins: the maximiser of each step's hazard is d_t / r_t.
  const std::int64_t H = 5;
  const auto spec = svl::uniform_edges(H);
  std::mt19937_64 rng(46);
  std::geometric_distribution<std::int64_t> event(0.25), censor(0.1);
  std::vector<SurvivalTuple> data;
  for (int i = 0; i < 2000; ++i) {
    const std::int64_t t = event(rng);
    const std::int64_t c = std::min<std::int64_t>(censor(rng), H);
    data.push_back(t <= c ? SurvivalTuple::event(0, 0, t, c) : SurvivalTuple::censored(0, 0, c));
  }
  std::vector<double> d(H + 1, 0.0), r(H + 1, 0.0);
  for (const auto& o : data) {
    const std::int64_t last = o.delta ? o.tau : o.c;
    for (std::int64_t t = 0; t <= last; ++t) r[t] += 1.0;
    if (o.delta) d[o.tau] += 1.0;
  }
  TabularHazard m(1, 1, spec.bins());
  for (int it = 0; it < 20000; ++it) {
    const auto rg = svl::nll_grad(m, data, spec, Likelihood::kUnbinned);
    for (std::size_t i = 0; i < m.num_params(); ++i) m.params()[i] -= 4.0 * rg.gradient[i];
  }
  const auto logits = m.logits(0, 0);
  for (std::int64_t t = 0; t <= H; ++t) {
    if (r[t] == 0.0) continue;
    EXPECT_NEAR(svl::sigmoid(logits[t]), d[t] / r[t], 1e-6) << "t=" << t;
  }
}

TEST(ValueOf, ForcedModels) {
  const auto spec = svl::geometric_edges(4, 16);
  TabularHazard m(1, 1, spec.bins());
  const svl::Discount gamma(0.9);
  auto row = m.row(0, 0);
  row[0] = 60.0;
  for (auto e : {svl::Estimator::kFinite, svl::Estimator::kPch, svl::Estimator::kPcs}) {
    EXPECT_NEAR(svl::value_of(m, 0, 0, spec, gamma, e), 0.0, 1e-20);
  }
  std::fill(row.begin(), row.end(), -60.0);
  EXPECT_NEAR(svl::value_of(m, 0, 0, spec, gamma, svl::Estimator::kPch), -10.0, 1e-12);
  EXPECT_NEAR(svl::value_of(m, 0, 0, spec, gamma, svl::Estimator::kPcs), -10.0, 1e-12);
  EXPECT_NEAR(svl::value_of(m, 0, 0, spec, gamma, svl::Estimator::kFinite),
              -(1 - std::pow(0.9, 16)) / 0.1, 1e-12);
}

TEST(Estimator, ParseAndPrint) {
  for (auto e : {svl::Estimator::kFinite, svl::Estimator::kPch, svl::Estimator::kPcs}) {
    EXPECT_EQ(svl::parse_estimator(svl::to_string(e)), e);
  }
  EXPECT_THROW(svl::parse_estimator("cox"), std::invalid_argument);
}

}  // namespace
