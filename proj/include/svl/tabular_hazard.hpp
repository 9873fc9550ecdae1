#pragma once

// One free logit vector per (state, goal) pair: exact capacity for tabular problems.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "svl/likelihood.hpp"

namespace svl {

class TabularHazard {
 public:
  struct Workspace {
    std::size_t offset = 0;
  };

  TabularHazard() = default;
  TabularHazard(std::size_t num_states, std::size_t num_goals, std::size_t bins,
                double immediate_logit = -2.0)
      : states_(num_states), goals_(num_goals), outputs_(bins + 2),
        params_(num_states * num_goals * (bins + 2), 0.0) {
    if (num_states == 0 || num_goals == 0 || bins == 0) {
      throw std::invalid_argument("tabular hazard needs positive dimensions");
    }
    for (std::size_t row = 0; row < num_states * num_goals; ++row) {
      params_[row * outputs_] = immediate_logit;
    }
  }

  std::size_t num_states() const { return states_; }
  std::size_t num_goals() const { return goals_; }
  std::size_t bins() const { return outputs_ - 2; }
  std::size_t output_size() const { return outputs_; }
  std::size_t num_params() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  Workspace make_workspace() const { return {}; }

  std::span<const double> forward(StateId s, GoalId g, Workspace& ws) const {
    ws.offset = row_offset(s, g);
    return std::span<const double>(params_).subspan(ws.offset, outputs_);
  }

  void backward(const Workspace& ws, std::span<const double> dlogits,
                std::span<double> grad) const {
    for (std::size_t i = 0; i < outputs_; ++i) grad[ws.offset + i] += dlogits[i];
  }

  std::vector<double> logits(StateId s, GoalId g) const {
    Workspace ws;
    auto out = forward(s, g, ws);
    return {out.begin(), out.end()};
  }

  std::span<double> row(StateId s, GoalId g) {
    return std::span<double>(params_).subspan(row_offset(s, g), outputs_);
  }

 private:
  std::size_t row_offset(StateId s, GoalId g) const {
    if (s < 0 || static_cast<std::size_t>(s) >= states_ || g < 0 ||
        static_cast<std::size_t>(g) >= goals_) {
      throw std::out_of_range("tabular hazard index (" + std::to_string(s) + ", " +
                              std::to_string(g) + ") out of range");
    }
    return (static_cast<std::size_t>(s) * goals_ + static_cast<std::size_t>(g)) * outputs_;
  }

  std::size_t states_ = 0;
  std::size_t goals_ = 0;
  std::size_t outputs_ = 0;
  std::vector<double> params_;
};

}  // namespace svl
