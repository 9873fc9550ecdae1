#pragma once

// Survival observations, the unbinned censored likelihood and hindsight
// relabeling of trajectories into goal-labelled observations.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "svl/grouped_time.hpp"
#include "svl/survival.hpp"

namespace svl {

using StateId = std::int32_t;
using GoalId = std::int32_t;

/// One observation (s, g, tau, c, delta). Censored tuples store tau = -1.
struct SurvivalTuple {
  StateId state = 0;
  GoalId goal = 0;
  std::int64_t tau = -1;
  std::int64_t c = 0;
  bool delta = false;

  bool operator==(const SurvivalTuple&) const = default;

  void validate() const {
    if (c < 0) throw std::invalid_argument("censoring time must be non-negative");
    if (delta && (tau < 0 || tau > c)) {
      throw std::invalid_argument("event tuple needs 0 <= tau <= c (tau=" + std::to_string(tau) +
                                  ", c=" + std::to_string(c) + ")");
    }
  }

  static SurvivalTuple event(StateId s, GoalId g, std::int64_t tau, std::int64_t c) {
    SurvivalTuple t{s, g, tau, c, true};
    t.validate();
    return t;
  }
  static SurvivalTuple censored(StateId s, GoalId g, std::int64_t c) {
    SurvivalTuple t{s, g, -1, c, false};
    t.validate();
    return t;
  }
};

/// Unbinned censored NLL on a real-time hazard curve.
inline double nll(const HazardCurve& h, const SurvivalTuple& obs) {
  obs.validate();
  const std::int64_t last = obs.delta ? obs.tau : obs.c;
  if (last >= static_cast<std::int64_t>(h.size())) {
    throw std::invalid_argument("hazard curve of length " + std::to_string(h.size()) +
                                " does not cover t=" + std::to_string(last));
  }
  double ll = 0.0;
  const auto survived = static_cast<std::size_t>(obs.delta ? obs.tau : obs.c + 1);
  for (std::size_t k = 0; k < survived; ++k) ll += std::log1p(-clamp_probability(h[k]));
  if (obs.delta) ll += std::log(clamp_probability(h[static_cast<std::size_t>(obs.tau)]));
  return -ll;
}

/// Administrative censoring at H: keeps the tuple inside the binned models' window.
inline SurvivalTuple censor_at_horizon(SurvivalTuple obs, std::int64_t horizon) {
  if (obs.delta && obs.tau <= horizon) {
    obs.c = std::min(obs.c, horizon);
  } else if (obs.delta || obs.c > horizon) {
    obs = SurvivalTuple::censored(obs.state, obs.goal, std::min(obs.c, horizon));
  }
  return obs;
}

struct Trajectory {
  std::vector<StateId> states;
  std::vector<int> actions;

  std::size_t transitions() const { return actions.size(); }

  void validate() const {
    if (states.empty()) throw std::invalid_argument("trajectory has no states");
    if (actions.size() + 1 != states.size()) {
      throw std::invalid_argument("trajectory needs |actions| = |states| - 1");
    }
  }
};

using GoalMap = std::function<GoalId(StateId)>;

inline GoalId identity_goal(StateId s) { return s; }

struct RelabelConfig {
  double p_cur = 0.08;
  double p_traj = 0.6;
  double p_rand = 0.32;

  void validate() const {
    if (p_cur < 0 || p_traj < 0 || p_rand < 0) {
      throw std::invalid_argument("relabel probabilities must be non-negative");
    }
    if (std::abs(p_cur + p_traj + p_rand - 1.0) > 1e-9) {
      throw std::invalid_argument("relabel probabilities must sum to 1");
    }
  }
  bool operator==(const RelabelConfig&) const = default;
};

enum class GoalSource { kCurrent, kTrajectory, kRandom };

template <class Rng>
GoalSource sample_goal_source(const RelabelConfig& cfg, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u < cfg.p_cur) return GoalSource::kCurrent;
  if (u < cfg.p_cur + cfg.p_traj) return GoalSource::kTrajectory;
  return GoalSource::kRandom;
}

inline constexpr std::int64_t kNoHorizonCap = std::numeric_limits<std::int64_t>::max();

/// Label anchor i of the trajectory with goal g by scanning s_{i+1}, ..., s_T.
inline SurvivalTuple label_anchor(const Trajectory& traj, std::size_t anchor, GoalId goal,
                                  std::int64_t horizon_cap, const GoalMap& phi = identity_goal) {
  const std::size_t T = traj.transitions();
  if (anchor >= T) throw std::out_of_range("anchor has no successor state");
  const auto remaining = static_cast<std::int64_t>(T - anchor - 1);
  const std::int64_t c = std::min(remaining, horizon_cap);
  for (std::int64_t t = 0; t <= c; ++t) {
    if (phi(traj.states[anchor + 1 + static_cast<std::size_t>(t)]) == goal) {
      return SurvivalTuple::event(traj.states[anchor], goal, t, c);
    }
  }
  return SurvivalTuple::censored(traj.states[anchor], goal, c);
}

/// Hindsight relabeling: one tuple per anchor, goal source drawn from cfg.
/// Random goals come from goal_pool, which must be non-empty when p_rand > 0.
template <class Rng>
std::vector<SurvivalTuple> relabel(const Trajectory& traj, const RelabelConfig& cfg,
                                   std::int64_t horizon_cap, Rng& rng,
                                   std::span<const GoalId> goal_pool = {},
                                   const GoalMap& phi = identity_goal) {
  traj.validate();
  cfg.validate();
  if (cfg.p_rand > 0 && goal_pool.empty()) {
    throw std::invalid_argument("random goal relabeling needs a goal pool");
  }
  const std::size_t T = traj.transitions();
  std::vector<SurvivalTuple> out;
  out.reserve(T);
  for (std::size_t i = 0; i < T; ++i) {
    GoalId goal = 0;
    switch (sample_goal_source(cfg, rng)) {
      case GoalSource::kCurrent:
        goal = phi(traj.states[i]);
        break;
      case GoalSource::kTrajectory: {
        std::uniform_int_distribution<std::size_t> pick(i + 1, T);
        goal = phi(traj.states[pick(rng)]);
        break;
      }
      case GoalSource::kRandom: {
        std::uniform_int_distribution<std::size_t> pick(0, goal_pool.size() - 1);
        goal = goal_pool[pick(rng)];
        break;
      }
    }
    out.push_back(label_anchor(traj, i, goal, horizon_cap, phi));
  }
  return out;
}

enum class Likelihood { kUnbinned, kPch, kPcs };

template <class M>
concept BinnedHazardFn = requires(const M& m, StateId s, GoalId g) {
  { m(s, g) } -> std::convertible_to<BinnedHazard>;
};

template <class M>
concept HazardCurveFn = requires(const M& m, StateId s, GoalId g) {
  { m(s, g) } -> std::convertible_to<HazardCurve>;
};

/// Mean per-tuple NLL of a binned model. kUnbinned scores the real-time
/// per-step expansion with the unbinned likelihood.
template <BinnedHazardFn Model>
double empirical_risk(const Model& model, std::span<const SurvivalTuple> data,
                      const BinSpec& spec, Likelihood kind) {
  if (data.empty()) throw std::invalid_argument("empirical risk of an empty dataset");
  double total = 0.0;
  for (const auto& obs : data) {
    BinnedHazard bh = model(obs.state, obs.goal);
    switch (kind) {
      case Likelihood::kUnbinned:
        total += nll(expand_real_time(bh, spec), obs);
        break;
      case Likelihood::kPch:
        bh.kind = BinnedKind::kPch;
        total += grouped_nll(bh, spec, obs.tau, obs.c, obs.delta);
        break;
      case Likelihood::kPcs:
        bh.kind = BinnedKind::kPcs;
        total += grouped_nll(bh, spec, obs.tau, obs.c, obs.delta);
        break;
    }
  }
  return total / static_cast<double>(data.size());
}

template <HazardCurveFn Model>
double empirical_risk(const Model& model, std::span<const SurvivalTuple> data) {
  if (data.empty()) throw std::invalid_argument("empirical risk of an empty dataset");
  double total = 0.0;
  for (const auto& obs : data) total += nll(model(obs.state, obs.goal), obs);
  return total / static_cast<double>(data.size());
}

/// Closed-form MLE of a single hazard shared by every real-time step:
/// events / (events + at-risk steps survived).
inline double constant_hazard_mle(std::span<const SurvivalTuple> data) {
  double events = 0.0;
  double exposure = 0.0;
  for (const auto& obs : data) {
    if (obs.delta) {
      events += 1.0;
      exposure += static_cast<double>(obs.tau) + 1.0;
    } else {
      exposure += static_cast<double>(obs.c) + 1.0;
    }
  }
  if (exposure == 0.0) throw std::invalid_argument("no at-risk exposure in dataset");
  return events / exposure;
}

}  // namespace svl
