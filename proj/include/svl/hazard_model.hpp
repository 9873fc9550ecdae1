#pragma once

// Model-generic pieces: the HazardModel concept, batched NLL gradients with a
// fixed reduction order, and plug-in values.

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "svl/hazard_head.hpp"
#include "svl/lowrank_net.hpp"
#include "svl/tabular_hazard.hpp"

namespace svl {

template <class M>
concept HazardModel = requires(M m, const M& cm, typename M::Workspace ws, StateId s, GoalId g,
                               std::span<const double> d, std::span<double> grad) {
  { cm.make_workspace() } -> std::same_as<typename M::Workspace>;
  { cm.forward(s, g, ws) } -> std::convertible_to<std::span<const double>>;
  cm.backward(ws, d, grad);
  { cm.bins() } -> std::convertible_to<std::size_t>;
  { cm.num_params() } -> std::convertible_to<std::size_t>;
  { m.params() } -> std::convertible_to<std::span<double>>;
  { cm.params() } -> std::convertible_to<std::span<const double>>;
};

static_assert(HazardModel<TabularHazard>);
static_assert(HazardModel<LowRankHazardNet>);

struct RiskAndGradient {
  double risk = 0.0;
  std::vector<double> gradient;
};

/// Tuples per shard. Shards are evaluated independently and summed in index
/// order, so results do not depend on the worker count.
inline constexpr std::size_t kGradientShard = 4096;

namespace detail {

template <HazardModel Model>
double shard_loss_and_grad(const Model& model, std::span<const SurvivalTuple> shard,
                           const BinSpec& spec, Likelihood kind, std::span<double> grad) {
  auto ws = model.make_workspace();
  std::vector<double> dlogits(spec.bins() + 2);
  double loss = 0.0;
  for (const auto& obs : shard) {
    auto logits = model.forward(obs.state, obs.goal, ws);
    std::fill(dlogits.begin(), dlogits.end(), 0.0);
    loss += observation_loss(logits, spec, obs, kind, dlogits);
    model.backward(ws, dlogits, grad);
  }
  return loss;
}

}  // namespace detail

/// Mean NLL over the batch and its gradient with respect to every parameter.
template <HazardModel Model>
RiskAndGradient nll_grad(const Model& model, std::span<const SurvivalTuple> batch,
                         const BinSpec& spec, Likelihood kind, std::size_t workers = 1) {
  if (batch.empty()) throw std::invalid_argument("gradient of an empty batch");
  if (model.bins() != spec.bins()) {
    throw std::invalid_argument("model bin count does not match bin spec");
  }
  const std::size_t P = model.num_params();
  const std::size_t shards = (batch.size() + kGradientShard - 1) / kGradientShard;
  workers = std::clamp<std::size_t>(workers, 1, shards);

  RiskAndGradient out;
  out.gradient.assign(P, 0.0);
  std::vector<std::vector<double>> partial(workers, std::vector<double>(P));
  std::vector<double> partial_loss(workers);

  for (std::size_t wave = 0; wave < shards; wave += workers) {
    const std::size_t count = std::min(workers, shards - wave);
    auto run = [&](std::size_t w) {
      const std::size_t begin = (wave + w) * kGradientShard;
      const std::size_t len = std::min(kGradientShard, batch.size() - begin);
      std::fill(partial[w].begin(), partial[w].end(), 0.0);
      partial_loss[w] =
          detail::shard_loss_and_grad(model, batch.subspan(begin, len), spec, kind, partial[w]);
    };
    if (count == 1) {
      run(0);
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < count; ++w) pool.emplace_back(run, w);
    }
    for (std::size_t w = 0; w < count; ++w) {
      out.risk += partial_loss[w];
      for (std::size_t i = 0; i < P; ++i) out.gradient[i] += partial[w][i];
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.risk *= inv;
  for (double& g : out.gradient) g *= inv;
  return out;
}

template <HazardModel Model>
double mean_nll(const Model& model, std::span<const SurvivalTuple> data, const BinSpec& spec,
                Likelihood kind) {
  if (data.empty()) throw std::invalid_argument("risk of an empty dataset");
  auto ws = model.make_workspace();
  std::vector<double> scratch(spec.bins() + 2);
  double loss = 0.0;
  for (const auto& obs : data) {
    loss += observation_loss(model.forward(obs.state, obs.goal, ws), spec, obs, kind, scratch);
  }
  return loss / static_cast<double>(data.size());
}

template <HazardModel Model>
BinnedHazard binned_hazard(const Model& model, StateId s, GoalId g, Estimator e) {
  auto ws = model.make_workspace();
  return to_binned(model.forward(s, g, ws), binned_kind(e));
}

/// Plug-in value: forward pass composed with the estimator's closed form.
template <HazardModel Model>
double value_of(const Model& model, StateId s, GoalId g, const BinSpec& spec, Discount gamma,
                Estimator e) {
  return estimator_value(binned_hazard(model, s, g, e), spec, gamma, e);
}

}  // namespace svl
