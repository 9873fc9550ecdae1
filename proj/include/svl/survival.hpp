#pragma once

// Discrete-time survival mathematics for goal-reaching times.
//
// Time index t counts transitions: an event at t means the state reached
// after the (t+1)-th transition satisfies the goal. S(t) = Pr(T > t) and
// h(t) = Pr(T = t | T >= t), with the convention S(-1) = 1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace svl {

inline constexpr double kProbabilityFloor = 1e-6;

/// Clamp a probability into [1e-6, 1 - 1e-6] before taking logs or ratios.
inline double clamp_probability(double p) {
  return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
}

inline bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

class Discount {
 public:
  explicit Discount(double gamma) : gamma_(gamma) {
    if (!(gamma >= 0.0 && gamma < 1.0)) {
      throw std::invalid_argument("discount must lie in [0, 1), got " + std::to_string(gamma));
    }
  }
  double value() const { return gamma_; }
  /// Sum of gamma^t over t >= 0.
  double horizon_mass() const { return 1.0 / (1.0 - gamma_); }

 private:
  double gamma_;
};

class HazardCurve {
 public:
  HazardCurve() = default;
  explicit HazardCurve(std::vector<double> h, std::optional<double> tail = std::nullopt)
      : h_(std::move(h)), tail_(tail) {
    for (std::size_t t = 0; t < h_.size(); ++t) {
      if (!is_probability(h_[t])) {
        throw std::invalid_argument("hazard at t=" + std::to_string(t) + " outside [0,1]");
      }
    }
    if (tail_ && !is_probability(*tail_)) {
      throw std::invalid_argument("tail hazard outside [0,1]");
    }
  }

  std::size_t size() const { return h_.size(); }
  double operator[](std::size_t t) const { return h_[t]; }
  std::span<const double> values() const { return h_; }
  std::optional<double> tail() const { return tail_; }

 private:
  std::vector<double> h_;
  std::optional<double> tail_;
};

class SurvivalCurve {
 public:
  SurvivalCurve() = default;
  explicit SurvivalCurve(std::vector<double> s) : s_(std::move(s)) {
    for (std::size_t t = 0; t < s_.size(); ++t) {
      if (!is_probability(s_[t])) {
        throw std::invalid_argument("survival at t=" + std::to_string(t) + " outside [0,1]");
      }
      // Tolerate round-off from matrix-power evaluation.
      if (t > 0 && s_[t] > s_[t - 1] + 1e-12) {
        throw std::invalid_argument("survival curve increases at t=" + std::to_string(t));
      }
    }
  }

  std::size_t size() const { return s_.size(); }
  double operator[](std::size_t t) const { return s_[t]; }
  std::span<const double> values() const { return s_; }
  double back() const { return s_.empty() ? 1.0 : s_.back(); }

 private:
  std::vector<double> s_;
};

/// How the discounted sum is continued past the last stored step T.
struct TailSpec {
  enum class Kind { kTruncate, kConstantHazard, kConstantSurvival };
  Kind kind = Kind::kTruncate;
  double hazard = 0.0;  // only read for kConstantHazard

  static TailSpec truncate() { return {Kind::kTruncate, 0.0}; }
  static TailSpec constant_hazard(double h) {
    if (!is_probability(h)) throw std::invalid_argument("tail hazard outside [0,1]");
    return {Kind::kConstantHazard, h};
  }
  static TailSpec constant_survival() { return {Kind::kConstantSurvival, 0.0}; }
};

inline SurvivalCurve hazard_to_survival(const HazardCurve& h) {
  std::vector<double> s(h.size());
  double running = 1.0;
  for (std::size_t t = 0; t < h.size(); ++t) {
    running *= 1.0 - h[t];
    s[t] = running;
  }
  return SurvivalCurve(std::move(s));
}

/// Pr(T = t) = h(t) S(t-1) for every stored t.
inline std::vector<double> event_pmf(const HazardCurve& h) {
  std::vector<double> p(h.size());
  double prev = 1.0;
  for (std::size_t t = 0; t < h.size(); ++t) {
    p[t] = h[t] * prev;
    prev *= 1.0 - h[t];
  }
  return p;
}

/// Discounted tail sum_{t >= T} gamma^t S(t), given S(T-1) and the tail policy.
inline double survival_tail_sum(double last_survival, std::size_t length, Discount gamma,
                                const TailSpec& tail) {
  const double g = gamma.value();
  const double scale = std::pow(g, static_cast<double>(length)) * last_survival;
  switch (tail.kind) {
    case TailSpec::Kind::kTruncate:
      return 0.0;
    case TailSpec::Kind::kConstantHazard: {
      const double keep = 1.0 - tail.hazard;
      return scale * keep / (1.0 - g * keep);
    }
    case TailSpec::Kind::kConstantSurvival:
      return scale / (1.0 - g);
  }
  return 0.0;
}

/// V = -sum_t gamma^t S(t), with the chosen continuation past the curve.
inline double value_from_survival(const SurvivalCurve& s, Discount gamma, const TailSpec& tail) {
  double acc = 0.0;
  double weight = 1.0;
  for (std::size_t t = 0; t < s.size(); ++t) {
    acc += weight * s[t];
    weight *= gamma.value();
  }
  acc += survival_tail_sum(s.back(), s.size(), gamma, tail);
  return -acc;
}

/// Same identity for the action-conditioned survival curve S(t | s, a, g).
inline double q_value_from_survival(const SurvivalCurve& s, Discount gamma, const TailSpec& tail) {
  return value_from_survival(s, gamma, tail);
}

}  // namespace svl
