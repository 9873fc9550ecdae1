#pragma once

// Policy extraction from survival values: advantage-weighted tabular fits for
// a flat goal-conditioned policy and for a two-level (subgoal, action) policy.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "svl/gridworld.hpp"
#include "svl/hazard_model.hpp"

namespace svl {

struct AwrConfig {
  double beta = 3.0;
  std::int64_t subgoal_step = 5;
  double weight_clip = 100.0;

  void validate() const {
    if (!(beta > 0.0)) throw std::invalid_argument("awr beta must be > 0");
    if (subgoal_step < 1) throw std::invalid_argument("subgoal step must be >= 1");
    if (!(weight_clip > 0.0)) throw std::invalid_argument("weight clip must be > 0");
  }
  bool operator==(const AwrConfig&) const = default;
};

/// V(s, g) for every state/goal pair, row-major in the state.
class ValueTable {
 public:
  ValueTable() = default;
  ValueTable(std::size_t num_states, std::size_t num_goals)
      : states_(num_states), goals_(num_goals), values_(num_states * num_goals, 0.0) {}

  std::size_t num_states() const { return states_; }
  std::size_t num_goals() const { return goals_; }

  double& at(StateId s, GoalId g) { return values_.at(index(s, g)); }
  double operator()(StateId s, GoalId g) const { return values_.at(index(s, g)); }

  /// Value after a transition into s: landing on the goal ends the episode.
  double successor(StateId s, GoalId g) const { return s == g ? terminal_ : (*this)(s, g); }
  double terminal() const { return terminal_; }

  /// Same table shifted by a constant, terminal value included.
  ValueTable shifted(double offset) const {
    ValueTable out = *this;
    for (double& v : out.values_) v += offset;
    out.terminal_ += offset;
    return out;
  }

  std::span<const double> values() const { return values_; }

 private:
  std::size_t index(StateId s, GoalId g) const {
    return static_cast<std::size_t>(s) * goals_ + static_cast<std::size_t>(g);
  }
  std::size_t states_ = 0;
  std::size_t goals_ = 0;
  std::vector<double> values_;
  double terminal_ = 0.0;
};

inline ValueTable oracle_value_table(const GridMdp& mdp, const TabularPolicy& policy,
                                     Discount gamma) {
  ValueTable table(mdp.num_states(), mdp.num_goals());
  for (std::size_t g = 0; g < mdp.num_goals(); ++g) {
    const HittingOracle oracle(mdp, policy, static_cast<GoalId>(g));
    const auto v = exact_values(oracle, gamma);
    for (std::size_t s = 0; s < mdp.num_states(); ++s) {
      table.at(static_cast<StateId>(s), static_cast<GoalId>(g)) = v[s];
    }
  }
  return table;
}

template <HazardModel Model>
ValueTable model_value_table(const Model& model, std::size_t num_states, std::size_t num_goals,
                             const BinSpec& spec, Discount gamma, Estimator e) {
  ValueTable table(num_states, num_goals);
  for (std::size_t s = 0; s < num_states; ++s) {
    for (std::size_t g = 0; g < num_goals; ++g) {
      table.at(static_cast<StateId>(s), static_cast<GoalId>(g)) =
          value_of(model, static_cast<StateId>(s), static_cast<GoalId>(g), spec, gamma, e);
    }
  }
  return table;
}

inline double awr_weight(double delta_v, double beta, double clip) {
  return std::min(std::exp(beta * delta_v), clip);
}

/// exp(beta (V(s_{t+k}, g) - V(s_t, g))), clipped.
inline double awr_weight_high(const ValueTable& v, StateId s_t, StateId s_tk, GoalId g,
                              const AwrConfig& cfg) {
  return awr_weight(v.successor(s_tk, g) - v(s_t, g), cfg.beta, cfg.weight_clip);
}

/// exp(beta (V(s_{t+1}, s_{t+k}) - V(s_t, s_{t+k}))), clipped.
inline double awr_weight_low(const ValueTable& v, StateId s_t, StateId s_t1, StateId s_tk,
                             const AwrConfig& cfg) {
  return awr_weight(v.successor(s_t1, s_tk) - v(s_t, s_tk), cfg.beta, cfg.weight_clip);
}

namespace detail {

// Row-normalises non-negative counts in blocks of `width`; empty rows become uniform.
inline void normalize_rows(std::span<double> table, std::size_t width) {
  for (std::size_t i = 0; i < table.size(); i += width) {
    double sum = 0.0;
    for (std::size_t j = 0; j < width; ++j) sum += table[i + j];
    for (std::size_t j = 0; j < width; ++j) {
      table[i + j] = sum > 0.0 ? table[i + j] / sum : 1.0 / static_cast<double>(width);
    }
  }
}

inline void check_trajectory(const Trajectory& traj, std::size_t num_states) {
  traj.validate();
  for (StateId s : traj.states) {
    if (s < 0 || static_cast<std::size_t>(s) >= num_states) {
      throw std::out_of_range("trajectory state out of range");
    }
  }
  for (int a : traj.actions) {
    if (a < 0 || a >= kNumActions) throw std::out_of_range("trajectory action out of range");
  }
}

}  // namespace detail

/// Weighted-count fit of pi(a | s, g) with hindsight goals: every state
/// s_t is paired with each later state s_j (j > t) as its goal. `weight`
/// receives (s_t, s_{t+1}, g).
template <class WeightFn>
TabularPolicy fit_flat_weighted(std::span<const Trajectory> data, std::size_t num_states,
                                WeightFn&& weight) {
  TabularPolicy pi(num_states, num_states);
  auto table = pi.table();
  std::fill(table.begin(), table.end(), 0.0);
  for (const auto& traj : data) {
    detail::check_trajectory(traj, num_states);
    const std::size_t T = traj.actions.size();
    for (std::size_t t = 0; t < T; ++t) {
      const StateId s = traj.states[t], next = traj.states[t + 1];
      const int a = traj.actions[t];
      for (std::size_t j = t + 1; j <= T; ++j) {
        const GoalId g = traj.states[j];
        pi.row(s, g)[static_cast<std::size_t>(a)] += weight(s, next, g);
      }
    }
  }
  detail::normalize_rows(table, kNumActions);
  return pi;
}

inline TabularPolicy behavior_cloning(std::span<const Trajectory> data, std::size_t num_states) {
  return fit_flat_weighted(data, num_states, [](StateId, StateId, GoalId) { return 1.0; });
}

/// Flat AWR: action weight exp(beta (V(s_{t+1}, g) - V(s_t, g))).
inline TabularPolicy fit_flat_policy(std::span<const Trajectory> data, const ValueTable& v,
                                     const AwrConfig& cfg) {
  cfg.validate();
  return fit_flat_weighted(data, v.num_states(), [&](StateId s, StateId next, GoalId g) {
    return awr_weight(v.successor(next, g) - v(s, g), cfg.beta, cfg.weight_clip);
  });
}

/// High level: subgoal distribution over states given (state, goal).
/// Low level: action distribution given (state, subgoal).
class HierPolicy {
 public:
  HierPolicy() = default;
  HierPolicy(std::size_t num_states, std::size_t num_goals, std::int64_t k)
      : states_(num_states), goals_(num_goals), k_(k),
        high_(num_states * num_goals * num_states, 1.0 / static_cast<double>(num_states)),
        low_(num_states * num_states * kNumActions, 1.0 / kNumActions) {
    if (k < 1) throw std::invalid_argument("subgoal step must be >= 1");
  }

  std::size_t num_states() const { return states_; }
  std::size_t num_goals() const { return goals_; }
  std::int64_t subgoal_step() const { return k_; }

  std::span<double> high_row(StateId s, GoalId g) {
    return std::span<double>(high_).subspan(high_offset(s, g), states_);
  }
  std::span<const double> high_row(StateId s, GoalId g) const {
    return std::span<const double>(high_).subspan(high_offset(s, g), states_);
  }
  std::span<double> low_row(StateId s, StateId subgoal) {
    return std::span<double>(low_).subspan(low_offset(s, subgoal), kNumActions);
  }
  std::span<const double> low_row(StateId s, StateId subgoal) const {
    return std::span<const double>(low_).subspan(low_offset(s, subgoal), kNumActions);
  }

  std::span<double> high_table() { return high_; }
  std::span<const double> high_table() const { return high_; }
  std::span<double> low_table() { return low_; }
  std::span<const double> low_table() const { return low_; }

  void validate() const {
    auto check = [](std::span<const double> t, std::size_t width) {
      for (std::size_t i = 0; i < t.size(); i += width) {
        double sum = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
          if (t[i + j] < 0.0) throw std::invalid_argument("negative probability");
          sum += t[i + j];
        }
        if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("row does not sum to 1");
      }
    };
    check(high_, states_);
    check(low_, kNumActions);
  }

 private:
  std::size_t high_offset(StateId s, GoalId g) const {
    if (s < 0 || static_cast<std::size_t>(s) >= states_ || g < 0 ||
        static_cast<std::size_t>(g) >= goals_) {
      throw std::out_of_range("high-level index out of range");
    }
    return (static_cast<std::size_t>(s) * goals_ + static_cast<std::size_t>(g)) * states_;
  }
  std::size_t low_offset(StateId s, StateId sub) const {
    if (s < 0 || static_cast<std::size_t>(s) >= states_ || sub < 0 ||
        static_cast<std::size_t>(sub) >= states_) {
      throw std::out_of_range("low-level index out of range");
    }
    return (static_cast<std::size_t>(s) * states_ + static_cast<std::size_t>(sub)) * kNumActions;
  }

  std::size_t states_ = 0;
  std::size_t goals_ = 0;
  std::int64_t k_ = 1;
  std::vector<double> high_;
  std::vector<double> low_;
};

/// Weighted-count fits of both levels. Subgoals are s_{t+k}, truncated to the
/// final state; goals are all later states of the trajectory.
inline HierPolicy fit_hier_policy(std::span<const Trajectory> data, const ValueTable& v,
                                  const AwrConfig& cfg) {
  cfg.validate();
  const std::size_t n = v.num_states();
  HierPolicy pi(n, v.num_goals(), cfg.subgoal_step);
  auto high = pi.high_table();
  auto low = pi.low_table();
  std::fill(high.begin(), high.end(), 0.0);
  std::fill(low.begin(), low.end(), 0.0);
  const auto k = static_cast<std::size_t>(cfg.subgoal_step);
  for (const auto& traj : data) {
    detail::check_trajectory(traj, n);
    const std::size_t T = traj.actions.size();
    for (std::size_t t = 0; t < T; ++t) {
      const StateId s = traj.states[t];
      const StateId sub = traj.states[std::min(t + k, T)];
      for (std::size_t j = t + 1; j <= T; ++j) {
        const GoalId g = traj.states[j];
        pi.high_row(s, g)[static_cast<std::size_t>(sub)] += awr_weight_high(v, s, sub, g, cfg);
      }
      pi.low_row(s, sub)[static_cast<std::size_t>(traj.actions[t])] +=
          awr_weight_low(v, s, traj.states[t + 1], sub, cfg);
    }
  }
  detail::normalize_rows(high, n);
  detail::normalize_rows(low, kNumActions);
  return pi;
}

namespace detail {

template <class Rng>
std::size_t sample_index(std::span<const double> probs, Rng& rng) {
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
    if (u < probs[i]) return i;
    u -= probs[i];
  }
  return probs.size() - 1;
}

inline std::size_t argmax(std::span<const double> probs) {
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

}  // namespace detail

/// Executes a HierPolicy; holds the current subgoal between refreshes.
class HierActor {
 public:
  explicit HierActor(const HierPolicy& policy, bool greedy = false)
      : policy_(&policy), greedy_(greedy) {}

  StateId subgoal() const { return subgoal_; }

  template <class Rng>
  int act(StateId s, GoalId g, std::int64_t step_counter, Rng& rng) {
    if (step_counter % policy_->subgoal_step() == 0 || subgoal_ < 0) {
      const auto row = policy_->high_row(s, g);
      subgoal_ = static_cast<StateId>(greedy_ ? detail::argmax(row) : detail::sample_index(row, rng));
    }
    const auto low = policy_->low_row(s, subgoal_);
    return static_cast<int>(greedy_ ? detail::argmax(low) : detail::sample_index(low, rng));
  }

 private:
  const HierPolicy* policy_;
  bool greedy_;
  StateId subgoal_ = -1;
};

/// Step budget for an evaluation episode: `multiple` times the shortest move count.
inline std::int64_t step_budget(const GridMdp& mdp, StateId s, GoalId g, std::int64_t multiple = 4) {
  return multiple * static_cast<std::int64_t>(mdp.distance(s, g));
}

/// Runs one episode with act(s, g, step, rng); true if the goal is hit within the budget.
template <class ActFn, class Rng>
bool run_episode(const GridMdp& mdp, StateId start, GoalId goal, std::int64_t budget, ActFn&& act,
                 Rng& rng) {
  StateId s = start;
  for (std::int64_t t = 0; t < budget; ++t) {
    s = mdp.step(s, act(s, goal, t, rng), rng);
    if (s == goal) return true;
  }
  return false;
}

struct SuccessRate {
  std::size_t episodes = 0;
  std::size_t successes = 0;
  double rate() const { return episodes == 0 ? 0.0 : static_cast<double>(successes) / episodes; }
};

/// Success rate over uniformly drawn (start, goal) pairs with start != goal and
/// the goal reachable. `make_actor()` is called once per episode and must
/// return a callable act(s, g, step, rng).
template <class MakeActor>
SuccessRate evaluate_success(const GridMdp& mdp, std::size_t episodes, std::uint64_t seed,
                             MakeActor&& make_actor, std::int64_t budget_multiple = 4) {
  std::vector<std::pair<StateId, GoalId>> pairs;
  for (std::size_t s = 0; s < mdp.num_states(); ++s) {
    for (std::size_t g = 0; g < mdp.num_goals(); ++g) {
      if (s != g && mdp.distance(static_cast<StateId>(s), static_cast<GoalId>(g)) > 0) {
        pairs.emplace_back(static_cast<StateId>(s), static_cast<GoalId>(g));
      }
    }
  }
  if (pairs.empty()) throw std::invalid_argument("maze has no reachable start/goal pair");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
  SuccessRate out;
  for (std::size_t e = 0; e < episodes; ++e) {
    const auto [s, g] = pairs[pick(rng)];
    auto actor = make_actor();
    out.successes += run_episode(mdp, s, g, step_budget(mdp, s, g, budget_multiple), actor, rng);
    ++out.episodes;
  }
  return out;
}

/// Sampling or greedy execution of a flat tabular policy.
inline auto flat_actor(const TabularPolicy& pi, bool greedy) {
  return [&pi, greedy]() {
    return [&pi, greedy](StateId s, GoalId g, std::int64_t, std::mt19937_64& rng) {
      return greedy ? pi.greedy(s, g) : pi.sample(s, g, rng);
    };
  };
}

inline auto hier_actor(const HierPolicy& pi, bool greedy) {
  return [&pi, greedy]() {
    return [actor = HierActor(pi, greedy)](StateId s, GoalId g, std::int64_t t,
                                           std::mt19937_64& rng) mutable {
      return actor.act(s, g, t, rng);
    };
  };
}

}  // namespace svl
