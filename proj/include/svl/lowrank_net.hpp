#pragma once

// Conditioned low-rank hazard network.
//
//   z      = MLP(x)                       shared GELU encoder
//   w(z)   = softmax(W_s z + b_s)         basis-set selection, R^S
//   c(z)   = W_c z + b_c                  mixing coefficients, R^R
//   l0(z)  = w_i . z + b_i                immediate-success logit
//   l(t)   = sum_j w_j(z) (c(z) . psi_j(t)) + b_t,   t = 0..K (K bins + tail)
//
// Psi is a shared library of S basis sets, each (K+1) x R. All parameters
// live in one flat vector; gradients are written by hand per layer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "svl/likelihood.hpp"

namespace svl {

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

/// Sum independent of the order of the terms (used across basis sets).
inline double order_free_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += t;
  return acc;
}

/// Per-id feature rows; the network input for (s, g) is [state_row(s), goal_row(g)].
struct FeatureTable {
  std::size_t state_dim = 0;
  std::size_t goal_dim = 0;
  std::vector<double> state_rows;
  std::vector<double> goal_rows;

  std::size_t input_dim() const { return state_dim + goal_dim; }

  void fill(StateId s, GoalId g, std::span<double> out) const {
    const auto ns = state_dim == 0 ? 0 : state_rows.size() / state_dim;
    const auto ng = goal_dim == 0 ? 0 : goal_rows.size() / goal_dim;
    if (s < 0 || static_cast<std::size_t>(s) >= ns || g < 0 || static_cast<std::size_t>(g) >= ng) {
      throw std::out_of_range("feature table has no row for (" + std::to_string(s) + ", " +
                              std::to_string(g) + ")");
    }
    std::copy_n(state_rows.begin() + static_cast<std::ptrdiff_t>(s * state_dim), state_dim,
                out.begin());
    std::copy_n(goal_rows.begin() + static_cast<std::ptrdiff_t>(g * goal_dim), goal_dim,
                out.begin() + static_cast<std::ptrdiff_t>(state_dim));
  }
};

struct LowRankConfig {
  std::size_t input_dim = 4;
  std::size_t width = 32;
  std::size_t depth = 2;
  std::size_t basis_sets = 4;
  std::size_t rank = 8;
  std::size_t bins = 16;

  void validate() const {
    if (input_dim == 0 || width == 0 || depth == 0 || basis_sets == 0 || rank == 0 || bins == 0) {
      throw std::invalid_argument("low-rank network dimensions must be positive");
    }
  }
  bool operator==(const LowRankConfig&) const = default;
};

class LowRankHazardNet {
 public:
  struct Workspace {
    std::vector<std::vector<double>> hidden;  // hidden[0] = input, hidden[l+1] = gelu(pre[l])
    std::vector<std::vector<double>> pre;
    std::vector<double> weights;              // softmax selection
    std::vector<double> coeffs;
    std::vector<double> projections;          // (K+1) x S, c . psi_j(t)
    std::vector<double> logits;
    std::vector<double> terms;
  };

  LowRankHazardNet() = default;
  explicit LowRankHazardNet(const LowRankConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    layout();
    params_.assign(total_, 0.0);
  }

  /// Variance-scaled uniform weights, N(0, 0.1) basis library, zero time bias,
  /// immediate-head bias -2.
  template <class Rng>
  void initialize(Rng& rng) {
    std::fill(params_.begin(), params_.end(), 0.0);
    auto uniform_block = [&](std::size_t offset, std::size_t rows, std::size_t cols) {
      const double limit = std::sqrt(3.0 / static_cast<double>(cols));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (std::size_t i = 0; i < rows * cols; ++i) params_[offset + i] = dist(rng);
    };
    std::size_t in = cfg_.input_dim;
    for (std::size_t l = 0; l < cfg_.depth; ++l) {
      uniform_block(layer_w_[l], cfg_.width, in);
      in = cfg_.width;
    }
    uniform_block(sel_w_, cfg_.basis_sets, cfg_.width);
    uniform_block(coef_w_, cfg_.rank, cfg_.width);
    uniform_block(imm_w_, 1, cfg_.width);
    params_[imm_b_] = -2.0;
    std::normal_distribution<double> basis(0.0, 0.1);
    for (std::size_t i = 0; i < psi_size(); ++i) params_[psi_ + i] = basis(rng);
  }

  const LowRankConfig& config() const { return cfg_; }
  std::size_t bins() const { return cfg_.bins; }
  std::size_t output_size() const { return cfg_.bins + 2; }
  std::size_t num_params() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  void set_features(FeatureTable table) {
    if (table.input_dim() != cfg_.input_dim) {
      throw std::invalid_argument("feature dimension " + std::to_string(table.input_dim()) +
                                  " does not match network input " +
                                  std::to_string(cfg_.input_dim));
    }
    features_ = std::move(table);
  }
  const FeatureTable& features() const { return features_; }

  Workspace make_workspace() const {
    Workspace ws;
    ws.hidden.resize(cfg_.depth + 1);
    ws.pre.resize(cfg_.depth);
    ws.hidden[0].resize(cfg_.input_dim);
    for (std::size_t l = 0; l < cfg_.depth; ++l) {
      ws.pre[l].resize(cfg_.width);
      ws.hidden[l + 1].resize(cfg_.width);
    }
    ws.weights.resize(cfg_.basis_sets);
    ws.coeffs.resize(cfg_.rank);
    ws.projections.resize((cfg_.bins + 1) * cfg_.basis_sets);
    ws.logits.resize(cfg_.bins + 2);
    ws.terms.resize(cfg_.basis_sets);
    return ws;
  }

  std::span<const double> forward(StateId s, GoalId g, Workspace& ws) const {
    if (features_.input_dim() != cfg_.input_dim) {
      throw std::logic_error("network has no feature table for id inputs");
    }
    features_.fill(s, g, ws.hidden[0]);
    return run_forward(ws);
  }

  std::span<const double> forward_features(std::span<const double> x, Workspace& ws) const {
    if (x.size() != cfg_.input_dim) {
      throw std::invalid_argument("input has dimension " + std::to_string(x.size()) +
                                  ", network expects " + std::to_string(cfg_.input_dim));
    }
    std::copy(x.begin(), x.end(), ws.hidden[0].begin());
    return run_forward(ws);
  }

  std::vector<double> logits(StateId s, GoalId g) const {
    auto ws = make_workspace();
    auto out = forward(s, g, ws);
    return {out.begin(), out.end()};
  }

  std::vector<double> logits_for(std::span<const double> x) const {
    auto ws = make_workspace();
    auto out = forward_features(x, ws);
    return {out.begin(), out.end()};
  }

  void backward(const Workspace& ws, std::span<const double> dlogits,
                std::span<double> grad) const {
    const std::size_t S = cfg_.basis_sets, R = cfg_.rank, T = cfg_.bins + 1, W = cfg_.width;
    const auto& z = ws.hidden[cfg_.depth];
    std::vector<double> dz(W, 0.0), dw(S, 0.0), dc(R, 0.0);

    const double d0 = dlogits[0];
    for (std::size_t i = 0; i < W; ++i) {
      grad[imm_w_ + i] += d0 * z[i];
      dz[i] += d0 * params_[imm_w_ + i];
    }
    grad[imm_b_] += d0;

    for (std::size_t t = 0; t < T; ++t) {
      const double gt = dlogits[t + 1];
      if (gt == 0.0) continue;
      grad[time_bias_ + t] += gt;
      for (std::size_t j = 0; j < S; ++j) {
        dw[j] += gt * ws.projections[t * S + j];
        const std::size_t base = psi_index(j, t, 0);
        const double scale = gt * ws.weights[j];
        for (std::size_t r = 0; r < R; ++r) {
          grad[base + r] += scale * ws.coeffs[r];
          dc[r] += scale * params_[base + r];
        }
      }
    }

    double mean = 0.0;
    for (std::size_t j = 0; j < S; ++j) mean += ws.weights[j] * dw[j];
    for (std::size_t j = 0; j < S; ++j) {
      const double dsel = ws.weights[j] * (dw[j] - mean);
      grad[sel_b_ + j] += dsel;
      for (std::size_t i = 0; i < W; ++i) {
        grad[sel_w_ + j * W + i] += dsel * z[i];
        dz[i] += dsel * params_[sel_w_ + j * W + i];
      }
    }
    for (std::size_t r = 0; r < R; ++r) {
      grad[coef_b_ + r] += dc[r];
      for (std::size_t i = 0; i < W; ++i) {
        grad[coef_w_ + r * W + i] += dc[r] * z[i];
        dz[i] += dc[r] * params_[coef_w_ + r * W + i];
      }
    }

    std::vector<double> upstream = std::move(dz);
    for (std::size_t l = cfg_.depth; l-- > 0;) {
      const std::size_t in = l == 0 ? cfg_.input_dim : W;
      const auto& below = ws.hidden[l];
      std::vector<double> da(W);
      for (std::size_t o = 0; o < W; ++o) da[o] = upstream[o] * gelu_derivative(ws.pre[l][o]);
      std::vector<double> dbelow(in, 0.0);
      for (std::size_t o = 0; o < W; ++o) {
        grad[layer_b_[l] + o] += da[o];
        const std::size_t row = layer_w_[l] + o * in;
        for (std::size_t i = 0; i < in; ++i) {
          grad[row + i] += da[o] * below[i];
          dbelow[i] += da[o] * params_[row + i];
        }
      }
      upstream = std::move(dbelow);
    }
  }

  // Parameter block offsets, exposed for tests and surgery on heads.
  std::size_t selector_weight_offset() const { return sel_w_; }
  std::size_t selector_bias_offset() const { return sel_b_; }
  std::size_t coeff_weight_offset() const { return coef_w_; }
  std::size_t coeff_bias_offset() const { return coef_b_; }
  std::size_t immediate_bias_offset() const { return imm_b_; }
  std::size_t time_bias_offset() const { return time_bias_; }
  std::size_t psi_index(std::size_t j, std::size_t t, std::size_t r) const {
    return psi_ + (j * (cfg_.bins + 1) + t) * cfg_.rank + r;
  }

 private:
  std::size_t psi_size() const { return cfg_.basis_sets * (cfg_.bins + 1) * cfg_.rank; }

  void layout() {
    std::size_t off = 0;
    std::size_t in = cfg_.input_dim;
    layer_w_.resize(cfg_.depth);
    layer_b_.resize(cfg_.depth);
    for (std::size_t l = 0; l < cfg_.depth; ++l) {
      layer_w_[l] = off;
      off += cfg_.width * in;
      layer_b_[l] = off;
      off += cfg_.width;
      in = cfg_.width;
    }
    sel_w_ = off;
    off += cfg_.basis_sets * cfg_.width;
    sel_b_ = off;
    off += cfg_.basis_sets;
    coef_w_ = off;
    off += cfg_.rank * cfg_.width;
    coef_b_ = off;
    off += cfg_.rank;
    imm_w_ = off;
    off += cfg_.width;
    imm_b_ = off;
    off += 1;
    psi_ = off;
    off += psi_size();
    time_bias_ = off;
    off += cfg_.bins + 1;
    total_ = off;
  }

  std::span<const double> run_forward(Workspace& ws) const {
    const std::size_t S = cfg_.basis_sets, R = cfg_.rank, T = cfg_.bins + 1, W = cfg_.width;
    std::size_t in = cfg_.input_dim;
    for (std::size_t l = 0; l < cfg_.depth; ++l) {
      const auto& below = ws.hidden[l];
      for (std::size_t o = 0; o < W; ++o) {
        const std::size_t row = layer_w_[l] + o * in;
        double a = params_[layer_b_[l] + o];
        for (std::size_t i = 0; i < in; ++i) a += params_[row + i] * below[i];
        ws.pre[l][o] = a;
        ws.hidden[l + 1][o] = gelu(a);
      }
      in = W;
    }
    const auto& z = ws.hidden[cfg_.depth];

    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < S; ++j) {
      double a = params_[sel_b_ + j];
      for (std::size_t i = 0; i < W; ++i) a += params_[sel_w_ + j * W + i] * z[i];
      ws.weights[j] = a;
      top = std::max(top, a);
    }
    for (std::size_t j = 0; j < S; ++j) ws.terms[j] = ws.weights[j] = std::exp(ws.weights[j] - top);
    const double norm = order_free_sum(ws.terms);
    for (std::size_t j = 0; j < S; ++j) ws.weights[j] /= norm;

    for (std::size_t r = 0; r < R; ++r) {
      double a = params_[coef_b_ + r];
      for (std::size_t i = 0; i < W; ++i) a += params_[coef_w_ + r * W + i] * z[i];
      ws.coeffs[r] = a;
    }
    double l0 = params_[imm_b_];
    for (std::size_t i = 0; i < W; ++i) l0 += params_[imm_w_ + i] * z[i];
    ws.logits[0] = l0;

    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t j = 0; j < S; ++j) {
        const std::size_t base = psi_index(j, t, 0);
        double p = 0.0;
        for (std::size_t r = 0; r < R; ++r) p += params_[base + r] * ws.coeffs[r];
        ws.projections[t * S + j] = p;
        ws.terms[j] = ws.weights[j] * p;
      }
      ws.logits[t + 1] = order_free_sum(ws.terms) + params_[time_bias_ + t];
    }
    return ws.logits;
  }

  LowRankConfig cfg_;
  FeatureTable features_;
  std::vector<double> params_;
  std::vector<std::size_t> layer_w_, layer_b_;
  std::size_t sel_w_ = 0, sel_b_ = 0, coef_w_ = 0, coef_b_ = 0, imm_w_ = 0, imm_b_ = 0;
  std::size_t psi_ = 0, time_bias_ = 0, total_ = 0;
};

}  // namespace svl
