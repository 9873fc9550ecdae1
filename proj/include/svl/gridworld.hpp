#pragma once

// Goal-conditioned gridworlds: ASCII maze parsing, slip dynamics, tabular
// policies, rollouts, and exact hitting-time / value oracles.
//
// A goal is a cell; the goal map is the identity on state ids. A hit at t
// means s_{t+1} is the goal cell, so starting on the goal is not a hit.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "svl/likelihood.hpp"
#include "svl/lowrank_net.hpp"
#include "svl/survival.hpp"

namespace svl {

enum class Action : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kStay = 4 };
inline constexpr int kNumActions = 5;

class MazeParseError : public std::runtime_error {
 public:
  MazeParseError(std::size_t line, std::size_t column, const std::string& what)
      : std::runtime_error("maze:" + std::to_string(line) + ":" + std::to_string(column) + ": " +
                           what),
        line_(line), column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_, column_;
};

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

/// Parsed ASCII maze: '#' wall, '.' free, 'S' start hint, 'G' goal hint.
struct Maze {
  int width = 0;
  int height = 0;
  std::vector<bool> walls;  // row-major
  std::optional<Cell> start;
  std::optional<Cell> goal;

  bool wall(int row, int col) const {
    return walls[static_cast<std::size_t>(row * width + col)];
  }
};

inline Maze parse_maze(std::string_view text) {
  Maze maze;
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw MazeParseError(1, 1, "empty maze");

  maze.height = static_cast<int>(lines.size());
  maze.width = static_cast<int>(lines.front().size());
  for (std::size_t r = 0; r < lines.size(); ++r) {
    const auto& line = lines[r];
    if (line.empty()) throw MazeParseError(r + 1, 1, "blank line inside maze");
    if (static_cast<int>(line.size()) != maze.width) {
      throw MazeParseError(r + 1, std::min(line.size(), static_cast<std::size_t>(maze.width)) + 1,
                           "row length " + std::to_string(line.size()) + " differs from " +
                               std::to_string(maze.width));
    }
    for (std::size_t c = 0; c < line.size(); ++c) {
      const char ch = line[c];
      const Cell here{static_cast<int>(r), static_cast<int>(c)};
      switch (ch) {
        case '#':
          maze.walls.push_back(true);
          break;
        case '.':
          maze.walls.push_back(false);
          break;
        case 'S':
          if (maze.start) throw MazeParseError(r + 1, c + 1, "second start marker");
          maze.start = here;
          maze.walls.push_back(false);
          break;
        case 'G':
          if (maze.goal) throw MazeParseError(r + 1, c + 1, "second goal marker");
          maze.goal = here;
          maze.walls.push_back(false);
          break;
        default:
          throw MazeParseError(r + 1, c + 1, std::string("unexpected character '") + ch + "'");
      }
    }
  }
  if (std::none_of(maze.walls.begin(), maze.walls.end(), [](bool w) { return !w; })) {
    throw MazeParseError(1, 1, "maze has no free cell");
  }
  return maze;
}

inline Maze open_maze(int width, int height) {
  Maze m;
  m.width = width;
  m.height = height;
  m.walls.assign(static_cast<std::size_t>(width * height), false);
  return m;
}

/// Transition target with its probability.
struct Successor {
  StateId state;
  double prob;
};

class GridMdp {
 public:
  GridMdp(Maze maze, double slip) : maze_(std::move(maze)), slip_(slip) {
    if (!(slip >= 0.0 && slip <= 1.0)) throw std::invalid_argument("slip must lie in [0,1]");
    id_of_cell_.assign(maze_.walls.size(), -1);
    for (int r = 0; r < maze_.height; ++r) {
      for (int c = 0; c < maze_.width; ++c) {
        if (!maze_.wall(r, c)) {
          id_of_cell_[static_cast<std::size_t>(r * maze_.width + c)] =
              static_cast<StateId>(cells_.size());
          cells_.push_back({r, c});
        }
      }
    }
    moves_.resize(cells_.size());
    for (std::size_t s = 0; s < cells_.size(); ++s) {
      for (int a = 0; a < kNumActions; ++a) moves_[s][a] = compute_move(cells_[s], a);
    }
    distances_.resize(cells_.size());
    for (std::size_t g = 0; g < cells_.size(); ++g) distances_[g] = bfs_from(static_cast<StateId>(g));
  }

  const Maze& maze() const { return maze_; }
  double slip() const { return slip_; }
  std::size_t num_states() const { return cells_.size(); }
  std::size_t num_goals() const { return cells_.size(); }
  Cell cell(StateId s) const { return cells_.at(static_cast<std::size_t>(s)); }

  std::optional<StateId> state_at(Cell c) const {
    if (c.row < 0 || c.col < 0 || c.row >= maze_.height || c.col >= maze_.width) return std::nullopt;
    const StateId id = id_of_cell_[static_cast<std::size_t>(c.row * maze_.width + c.col)];
    if (id < 0) return std::nullopt;
    return id;
  }

  /// Deterministic effect of an action; walls and borders leave the agent in place.
  StateId move(StateId s, int action) const {
    return moves_.at(static_cast<std::size_t>(s))[static_cast<std::size_t>(action)];
  }

  /// P(. | s, a) with slip replacing the chosen action by a uniform one.
  std::vector<Successor> transitions(StateId s, int action) const {
    std::vector<Successor> out;
    auto add = [&](StateId t, double p) {
      if (p == 0.0) return;
      for (auto& o : out) {
        if (o.state == t) {
          o.prob += p;
          return;
        }
      }
      out.push_back({t, p});
    };
    add(move(s, action), 1.0 - slip_);
    for (int b = 0; b < kNumActions; ++b) add(move(s, b), slip_ / kNumActions);
    return out;
  }

  template <class Rng>
  StateId step(StateId s, int action, Rng& rng) const {
    if (slip_ > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < slip_) {
      action = std::uniform_int_distribution<int>(0, kNumActions - 1)(rng);
    }
    return move(s, action);
  }

  /// Shortest number of moves from s to g; -1 when unreachable.
  int distance(StateId s, GoalId g) const {
    return distances_.at(static_cast<std::size_t>(g)).at(static_cast<std::size_t>(s));
  }

  /// Minimal hitting time: a move count of d gives tau = d - 1; on the goal,
  /// staying gives tau = 0. -1 when unreachable.
  int shortest_hitting_time(StateId s, GoalId g) const {
    if (s == g) return 0;
    const int d = distance(s, g);
    return d < 0 ? -1 : d - 1;
  }

  /// Features for the low-rank network: normalised (row, col) of state and goal.
  FeatureTable features() const {
    FeatureTable table;
    table.state_dim = table.goal_dim = 2;
    const double sr = std::max(1, maze_.height - 1), sc = std::max(1, maze_.width - 1);
    for (const auto& c : cells_) {
      for (auto* rows : {&table.state_rows, &table.goal_rows}) {
        rows->push_back(2.0 * c.row / sr - 1.0);
        rows->push_back(2.0 * c.col / sc - 1.0);
      }
    }
    return table;
  }

 private:
  StateId compute_move(Cell c, int action) const {
    Cell next = c;
    switch (static_cast<Action>(action)) {
      case Action::kUp: --next.row; break;
      case Action::kDown: ++next.row; break;
      case Action::kLeft: --next.col; break;
      case Action::kRight: ++next.col; break;
      case Action::kStay: break;
    }
    if (auto id = state_at(next)) return *id;
    return *state_at(c);
  }

  std::vector<int> bfs_from(StateId goal) const {
    std::vector<int> dist(cells_.size(), -1);
    std::queue<StateId> frontier;
    dist[static_cast<std::size_t>(goal)] = 0;
    frontier.push(goal);
    while (!frontier.empty()) {
      const StateId s = frontier.front();
      frontier.pop();
      // Moves are symmetric on a grid, so neighbours of s reach s in one step.
      for (int a = 0; a < kNumActions; ++a) {
        const StateId t = move(s, a);
        if (dist[static_cast<std::size_t>(t)] < 0) {
          dist[static_cast<std::size_t>(t)] = dist[static_cast<std::size_t>(s)] + 1;
          frontier.push(t);
        }
      }
    }
    return dist;
  }

  Maze maze_;
  double slip_;
  std::vector<Cell> cells_;
  std::vector<StateId> id_of_cell_;
  std::vector<std::array<StateId, kNumActions>> moves_;
  std::vector<std::vector<int>> distances_;
};

/// pi(a | s, g) as a dense (state, goal, action) table.
class TabularPolicy {
 public:
  TabularPolicy() = default;
  TabularPolicy(std::size_t num_states, std::size_t num_goals)
      : states_(num_states), goals_(num_goals),
        probs_(num_states * num_goals * kNumActions, 1.0 / kNumActions) {}

  static TabularPolicy uniform(const GridMdp& mdp) {
    return TabularPolicy(mdp.num_states(), mdp.num_goals());
  }

  /// With probability optimal_prob take a shortest-path action (ties split
  /// evenly), otherwise act uniformly.
  static TabularPolicy noisy_optimal(const GridMdp& mdp, double optimal_prob) {
    TabularPolicy pi(mdp.num_states(), mdp.num_goals());
    for (std::size_t s = 0; s < mdp.num_states(); ++s) {
      for (std::size_t g = 0; g < mdp.num_goals(); ++g) {
        const auto best = optimal_actions(mdp, static_cast<StateId>(s), static_cast<GoalId>(g));
        auto row = pi.row(static_cast<StateId>(s), static_cast<GoalId>(g));
        for (int a = 0; a < kNumActions; ++a) row[a] = (1.0 - optimal_prob) / kNumActions;
        for (int a : best) row[a] += optimal_prob / static_cast<double>(best.size());
      }
    }
    return pi;
  }

  /// Actions minimising the remaining move count to g (all actions if unreachable).
  static std::vector<int> optimal_actions(const GridMdp& mdp, StateId s, GoalId g) {
    int best = std::numeric_limits<int>::max();
    std::vector<int> out;
    for (int a = 0; a < kNumActions; ++a) {
      const int d = mdp.distance(mdp.move(s, a), g);
      if (d < 0) continue;
      if (d < best) {
        best = d;
        out.clear();
      }
      if (d == best) out.push_back(a);
    }
    if (out.empty()) {
      for (int a = 0; a < kNumActions; ++a) out.push_back(a);
    }
    return out;
  }

  std::size_t num_states() const { return states_; }
  std::size_t num_goals() const { return goals_; }

  std::span<double> row(StateId s, GoalId g) {
    return std::span<double>(probs_).subspan(offset(s, g), kNumActions);
  }
  std::span<const double> row(StateId s, GoalId g) const {
    return std::span<const double>(probs_).subspan(offset(s, g), kNumActions);
  }
  double prob(StateId s, GoalId g, int a) const { return row(s, g)[static_cast<std::size_t>(a)]; }

  std::span<const double> table() const { return probs_; }
  std::span<double> table() { return probs_; }

  void validate() const {
    for (std::size_t i = 0; i < probs_.size(); i += kNumActions) {
      double sum = 0.0;
      for (int a = 0; a < kNumActions; ++a) {
        if (probs_[i + a] < 0.0) throw std::invalid_argument("negative action probability");
        sum += probs_[i + a];
      }
      if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("policy row does not sum to 1");
    }
  }

  template <class Rng>
  int sample(StateId s, GoalId g, Rng& rng) const {
    const auto r = row(s, g);
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    for (int a = 0; a < kNumActions - 1; ++a) {
      if (u < r[a]) return a;
      u -= r[a];
    }
    return kNumActions - 1;
  }

  /// Highest-probability action; ties go to the lowest index.
  int greedy(StateId s, GoalId g) const {
    const auto r = row(s, g);
    return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }

 private:
  std::size_t offset(StateId s, GoalId g) const {
    if (s < 0 || static_cast<std::size_t>(s) >= states_ || g < 0 ||
        static_cast<std::size_t>(g) >= goals_) {
      throw std::out_of_range("policy index out of range");
    }
    return (static_cast<std::size_t>(s) * goals_ + static_cast<std::size_t>(g)) * kNumActions;
  }

  std::size_t states_ = 0;
  std::size_t goals_ = 0;
  std::vector<double> probs_;
};

/// Substochastic kernel over all states for fixed (pi, g): transitions that
/// land on the goal are removed.
class HittingOracle {
 public:
  HittingOracle(const GridMdp& mdp, const TabularPolicy& policy, GoalId goal)
      : mdp_(&mdp), policy_(&policy), goal_(goal) {
    const auto n = static_cast<Eigen::Index>(mdp.num_states());
    kernel_ = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index s = 0; s < n; ++s) {
      const auto row = policy.row(static_cast<StateId>(s), goal);
      for (int a = 0; a < kNumActions; ++a) {
        if (row[a] == 0.0) continue;
        for (const auto& succ : mdp.transitions(static_cast<StateId>(s), a)) {
          if (succ.state != goal) kernel_(s, succ.state) += row[a] * succ.prob;
        }
      }
    }
  }

  const Eigen::MatrixXd& kernel() const { return kernel_; }
  GoalId goal() const { return goal_; }
  const GridMdp& mdp() const { return *mdp_; }
  const TabularPolicy& policy() const { return *policy_; }

  /// Row a of the goal-removed one-step kernel under a fixed first action.
  Eigen::VectorXd action_row(StateId s, int action) const {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(kernel_.rows());
    for (const auto& succ : mdp_->transitions(s, action)) {
      if (succ.state != goal_) p(succ.state) += succ.prob;
    }
    return p;
  }

 private:
  const GridMdp* mdp_;
  const TabularPolicy* policy_;
  GoalId goal_;
  Eigen::MatrixXd kernel_;
};

/// S(t | s) = e_s^T M^{t+1} 1 for t = 0..t_max-1, for every start state at once.
inline std::vector<std::vector<double>> exact_survival_all(const HittingOracle& oracle,
                                                           std::int64_t t_max) {
  if (t_max <= 0) throw std::invalid_argument("t_max must be positive");
  const auto n = oracle.kernel().rows();
  std::vector<std::vector<double>> curves(static_cast<std::size_t>(n));
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
  for (std::int64_t t = 0; t < t_max; ++t) {
    v = oracle.kernel() * v;
    for (Eigen::Index s = 0; s < n; ++s) {
      curves[static_cast<std::size_t>(s)].push_back(std::clamp(v(s), 0.0, 1.0));
    }
  }
  return curves;
}

inline SurvivalCurve exact_survival(const HittingOracle& oracle, StateId s, std::int64_t t_max) {
  return SurvivalCurve(exact_survival_all(oracle, t_max).at(static_cast<std::size_t>(s)));
}

/// S(t | s, a) with the first action fixed.
inline SurvivalCurve exact_action_survival(const HittingOracle& oracle, StateId s, int action,
                                           std::int64_t t_max) {
  if (t_max <= 0) throw std::invalid_argument("t_max must be positive");
  const Eigen::VectorXd first = oracle.action_row(s, action);
  std::vector<double> out;
  Eigen::VectorXd v = Eigen::VectorXd::Ones(oracle.kernel().rows());
  for (std::int64_t t = 0; t < t_max; ++t) {
    out.push_back(std::clamp(first.dot(v), 0.0, 1.0));
    v = oracle.kernel() * v;
  }
  return SurvivalCurve(std::move(out));
}

/// V = -M (I - gamma M)^{-1} 1 for every state, by a direct LU solve.
inline std::vector<double> exact_values(const HittingOracle& oracle, Discount gamma) {
  const auto& M = oracle.kernel();
  const auto n = M.rows();
  const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - gamma.value() * M;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible()) throw std::runtime_error("singular hitting-time system");
  const Eigen::VectorXd x = lu.solve(Eigen::VectorXd::Ones(n));
  const Eigen::VectorXd v = -(M * x);
  return {v.data(), v.data() + n};
}

inline double exact_value(const HittingOracle& oracle, StateId s, Discount gamma) {
  return exact_values(oracle, gamma).at(static_cast<std::size_t>(s));
}

/// Independent dynamic-programming route: iterate the Bellman operator of the
/// -1-per-step reward with termination on reaching the goal.
inline std::vector<double> value_iteration(const GridMdp& mdp, const TabularPolicy& policy,
                                           GoalId goal, Discount gamma, double tol = 1e-14) {
  const std::size_t n = mdp.num_states();
  std::vector<double> v(n, 0.0), next(n, 0.0);
  for (;;) {
    double delta = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      double acc = 0.0;
      const auto row = policy.row(static_cast<StateId>(s), goal);
      for (int a = 0; a < kNumActions; ++a) {
        if (row[a] == 0.0) continue;
        for (const auto& succ : mdp.transitions(static_cast<StateId>(s), a)) {
          if (succ.state == goal) continue;
          acc += row[a] * succ.prob * (-1.0 + gamma.value() * v[static_cast<std::size_t>(succ.state)]);
        }
      }
      next[s] = acc;
      delta = std::max(delta, std::abs(acc - v[s]));
    }
    v.swap(next);
    if (delta < tol) break;
  }
  return v;
}

/// Q(s, a, g): one step through P(. | s, a), then exact values; successors on
/// the goal contribute 0.
inline double q_oracle(const HittingOracle& oracle, StateId s, int action, Discount gamma) {
  const auto values = exact_values(oracle, gamma);
  double q = 0.0;
  for (const auto& succ : oracle.mdp().transitions(s, action)) {
    if (succ.state == oracle.goal()) continue;
    q += succ.prob * (-1.0 + gamma.value() * values[static_cast<std::size_t>(succ.state)]);
  }
  return q;
}

struct Rollout {
  Trajectory trajectory;
  SurvivalTuple observation;
};

/// Runs pi(. | s_t, goal) for at most `horizon` transitions, stopping at the
/// first hit. Censored rollouts record c = horizon - 1 (T > horizon - 1 observed).
template <class Policy, class Rng>
Rollout rollout(const GridMdp& mdp, const Policy& policy, StateId start, GoalId goal,
                std::int64_t horizon, Rng& rng) {
  if (horizon < 1) throw std::invalid_argument("rollout horizon must be >= 1");
  Rollout out;
  out.trajectory.states.push_back(start);
  StateId s = start;
  for (std::int64_t t = 0; t < horizon; ++t) {
    const int a = policy.sample(s, goal, rng);
    s = mdp.step(s, a, rng);
    out.trajectory.actions.push_back(a);
    out.trajectory.states.push_back(s);
    if (s == goal) {
      out.observation = SurvivalTuple::event(start, goal, t, horizon - 1);
      return out;
    }
  }
  out.observation = SurvivalTuple::censored(start, goal, horizon - 1);
  return out;
}

/// Rollout that never stops early (used for dataset trajectories).
template <class Policy, class Rng>
Trajectory walk(const GridMdp& mdp, const Policy& policy, StateId start, GoalId commanded,
                std::int64_t length, Rng& rng) {
  Trajectory traj;
  traj.states.push_back(start);
  StateId s = start;
  for (std::int64_t t = 0; t < length; ++t) {
    const int a = policy.sample(s, commanded, rng);
    s = mdp.step(s, a, rng);
    traj.actions.push_back(a);
    traj.states.push_back(s);
  }
  return traj;
}

}  // namespace svl
