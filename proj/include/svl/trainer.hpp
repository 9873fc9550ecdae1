#pragma once

// Adam and the minibatch hazard-fitting loop.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "svl/hazard_model.hpp"

namespace svl {

struct OptState {
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  OptState() = default;
  OptState(std::size_t params, double lr) : m(params, 0.0), v(params, 0.0), learning_rate(lr) {}
};

/// Bias-corrected Adam update in place. Rejects non-finite gradients before
/// touching any state.
inline void adam_step(std::span<double> params, std::span<const double> grads, OptState& opt) {
  if (params.size() != grads.size() || opt.m.size() != params.size() ||
      opt.v.size() != params.size()) {
    throw std::invalid_argument("adam: parameter, gradient and moment shapes differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw std::domain_error("adam: non-finite gradient at index " + std::to_string(i));
    }
  }
  ++opt.step;
  const double t = static_cast<double>(opt.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * grads[i];
    opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * grads[i] * grads[i];
    const double mhat = opt.m[i] / c1;
    const double vhat = opt.v[i] / c2;
    params[i] -= opt.learning_rate * mhat / (std::sqrt(vhat) + opt.epsilon);
  }
}

struct TrainConfig {
  std::size_t batch_size = 1024;  // 0 = full dataset every step
  std::size_t total_steps = 2000;
  double learning_rate = 3e-4;
  std::uint64_t seed = 0;
  std::size_t eval_every = 100;
  std::size_t workers = 1;

  void validate() const {
    if (total_steps == 0 || eval_every == 0 || workers == 0) {
      throw std::invalid_argument("train config counts must be positive");
    }
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  }
  bool operator==(const TrainConfig&) const = default;
};

struct LossRow {
  std::size_t step = 0;
  double train_nll = 0.0;
  double holdout_nll = 0.0;  // NaN without a holdout set
};

struct FitResult {
  std::vector<LossRow> trace;
  OptState opt;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t step, double loss)
      : std::runtime_error("non-finite loss " + std::to_string(loss) + " at batch " +
                           std::to_string(step)),
        step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

inline void write_loss_csv(std::ostream& os, std::span<const LossRow> trace) {
  os << "step,train_nll,holdout_nll\n";
  os.precision(17);
  for (const auto& row : trace) {
    os << row.step << ',' << row.train_nll << ',';
    if (std::isnan(row.holdout_nll)) {
      os << "nan";
    } else {
      os << row.holdout_nll;
    }
    os << '\n';
  }
}

/// Minibatch Adam on the mean censored NLL; batches are drawn with replacement.
template <HazardModel Model>
FitResult fit_hazard(Model& model, std::span<const SurvivalTuple> data, const BinSpec& spec,
                     Likelihood kind, const TrainConfig& cfg,
                     std::span<const SurvivalTuple> holdout = {}) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("cannot fit on an empty dataset");
  FitResult result;
  result.opt = OptState(model.num_params(), cfg.learning_rate);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::vector<SurvivalTuple> batch;

  auto record = [&](std::size_t step) {
    LossRow row;
    row.step = step;
    row.train_nll = mean_nll(model, data, spec, kind);
    row.holdout_nll = holdout.empty() ? std::nan("") : mean_nll(model, holdout, spec, kind);
    if (!std::isfinite(row.train_nll)) throw TrainingDiverged(step, row.train_nll);
    result.trace.push_back(row);
  };

  record(0);
  for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
    std::span<const SurvivalTuple> view = data;
    if (cfg.batch_size != 0) {
      batch.resize(cfg.batch_size);
      for (auto& obs : batch) obs = data[pick(rng)];
      view = batch;
    }
    auto rg = nll_grad(model, view, spec, kind, cfg.workers);
    if (!std::isfinite(rg.risk)) throw TrainingDiverged(step, rg.risk);
    try {
      adam_step(model.params(), rg.gradient, result.opt);
    } catch (const std::domain_error&) {
      throw TrainingDiverged(step, rg.risk);
    }
    if (step % cfg.eval_every == 0 || step == cfg.total_steps) record(step);
  }
  return result;
}

}  // namespace svl
