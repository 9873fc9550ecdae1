#pragma once

// Mapping between a model's logit vector and binned hazards, plus the
// per-observation loss and its gradient with respect to those logits.
//
// Logit layout (length K + 2): [l0, bin_0 .. bin_{K-1}, tail]; l0 drives the
// immediate-success probability q0.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "svl/grouped_time.hpp"
#include "svl/likelihood.hpp"

namespace svl {

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(sigmoid(x)) without cancellation.
inline double log_sigmoid(double x) {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

enum class Estimator { kFinite, kPch, kPcs };

inline const char* to_string(Estimator e) {
  switch (e) {
    case Estimator::kFinite: return "finite";
    case Estimator::kPch: return "pch";
    case Estimator::kPcs: return "pcs";
  }
  return "?";
}

inline Estimator parse_estimator(const std::string& s) {
  if (s == "finite") return Estimator::kFinite;
  if (s == "pch") return Estimator::kPch;
  if (s == "pcs") return Estimator::kPcs;
  throw std::invalid_argument("unknown estimator '" + s + "' (expected finite, pch or pcs)");
}

/// Likelihood each estimator is trained with. The finite estimator lives on
/// unit bins where the unbinned and PCH likelihoods coincide.
inline Likelihood training_likelihood(Estimator e) {
  switch (e) {
    case Estimator::kFinite: return Likelihood::kUnbinned;
    case Estimator::kPch: return Likelihood::kPch;
    case Estimator::kPcs: return Likelihood::kPcs;
  }
  return Likelihood::kUnbinned;
}

inline BinnedKind binned_kind(Estimator e) {
  return e == Estimator::kPcs ? BinnedKind::kPcs : BinnedKind::kPch;
}

inline std::size_t logit_count(const BinSpec& spec) { return spec.bins() + 2; }

inline BinnedHazard to_binned(std::span<const double> logits, BinnedKind kind) {
  if (logits.size() < 3) throw std::invalid_argument("logit vector too short");
  BinnedHazard bh;
  bh.kind = kind;
  bh.q0 = sigmoid(logits.front());
  bh.tail_value = sigmoid(logits.back());
  bh.bin_values.resize(logits.size() - 2);
  for (std::size_t k = 0; k < bh.bin_values.size(); ++k) bh.bin_values[k] = sigmoid(logits[k + 1]);
  return bh;
}

/// Finite-horizon value: the PCH per-step expansion summed over t < H only.
inline double finite_value(const BinnedHazard& bh, const BinSpec& spec, Discount gamma) {
  const HazardCurve curve = expand_real_time(bh, spec);
  std::vector<double> h(curve.values().begin(), curve.values().end() - 1);
  return value_from_survival(hazard_to_survival(HazardCurve(std::move(h))), gamma,
                             TailSpec::truncate());
}

inline double estimator_value(const BinnedHazard& bh, const BinSpec& spec, Discount gamma,
                              Estimator e) {
  switch (e) {
    case Estimator::kFinite: return finite_value(bh, spec, gamma);
    case Estimator::kPch: return pch_value(bh, spec, gamma);
    case Estimator::kPcs: return pcs_value(bh, spec, gamma);
  }
  return 0.0;
}

/// Negative log-likelihood of one real-time observation and its gradient with
/// respect to the logits (added into dlogits). Computed in log-sigmoid form,
/// so no probability clamping is applied here.
inline double observation_loss(std::span<const double> logits, const BinSpec& spec,
                               const SurvivalTuple& obs, Likelihood kind,
                               std::span<double> dlogits) {
  const std::size_t K = spec.bins();
  if (logits.size() != K + 2 || dlogits.size() != K + 2) {
    throw std::invalid_argument("logit vector length " + std::to_string(logits.size()) +
                                " does not match " + std::to_string(K) + " bins");
  }
  if (obs.c > spec.horizon() || (obs.delta && obs.tau > spec.horizon())) {
    throw std::invalid_argument("observation exceeds bin horizon; censor it at H first");
  }
  auto bin_logit = [&](std::size_t k) { return logits[k + 1]; };
  auto add_bin = [&](std::size_t k, double v) { dlogits[k + 1] += v; };

  // Pr(T = 0) versus survival of the first step.
  if (obs.delta && obs.tau == 0) {
    dlogits[0] += sigmoid(logits[0]) - 1.0;
    return -log_sigmoid(logits[0]);
  }
  double loss = -log_sigmoid(-logits[0]);
  dlogits[0] += sigmoid(logits[0]);

  const std::int64_t u_event = obs.delta ? obs.tau - 1 : -1;
  switch (kind) {
    case Likelihood::kUnbinned: {
      // Walk the expanded per-step curve one step at a time.
      const std::int64_t survived = obs.delta ? u_event : obs.c;
      std::size_t k = 0;
      for (std::int64_t u = 0; u < survived; ++u) {
        while (spec.edge(k + 1) <= u) ++k;
        loss -= log_sigmoid(-bin_logit(k));
        add_bin(k, sigmoid(bin_logit(k)));
      }
      if (obs.delta) {
        while (spec.edge(k + 1) <= u_event) ++k;
        loss -= log_sigmoid(bin_logit(k));
        add_bin(k, sigmoid(bin_logit(k)) - 1.0);
      }
      return loss;
    }
    case Likelihood::kPch: {
      const BinLocation at = locate(spec, obs.delta ? u_event : obs.c);
      for (std::size_t j = 0; j < at.bin; ++j) {
        const double L = static_cast<double>(spec.length(j));
        loss -= L * log_sigmoid(-bin_logit(j));
        add_bin(j, L * sigmoid(bin_logit(j)));
      }
      const double m = static_cast<double>(at.offset);
      const double h = sigmoid(bin_logit(at.bin));
      loss -= m * log_sigmoid(-bin_logit(at.bin));
      add_bin(at.bin, m * h);
      if (obs.delta) {
        loss -= log_sigmoid(bin_logit(at.bin));
        add_bin(at.bin, h - 1.0);
      }
      return loss;
    }
    case Likelihood::kPcs: {
      const std::size_t survived =
          obs.delta ? locate(spec, u_event).bin : completed_bins(spec, obs.c);
      for (std::size_t j = 0; j < survived; ++j) {
        loss -= log_sigmoid(-bin_logit(j));
        add_bin(j, sigmoid(bin_logit(j)));
      }
      if (obs.delta) {
        loss -= log_sigmoid(bin_logit(survived));
        add_bin(survived, sigmoid(bin_logit(survived)) - 1.0);
      }
      return loss;
    }
  }
  return loss;
}

}  // namespace svl
