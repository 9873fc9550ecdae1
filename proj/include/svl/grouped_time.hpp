#pragma once

// Geometric time bins and the two binned infinite-horizon estimators.
//
// Bin clock: the immediate-success probability q0 = Pr(T = 0) is modelled
// separately, and bins partition the shifted time u = T - 1 over [0, H).
// Under PCH the per-step hazard of real step t >= 1 is the hazard of the bin
// containing u = t - 1; steps past H use the tail hazard. Under PCS the
// interval hazard of bin k is Pr(u in [b_k, b_{k+1}) | u >= b_k).
//
// For a real-time observation (tau, c, delta):
//   delta = 1, tau = 0   -> log q0
//   delta = 1, tau >= 1  -> log(1 - q0) + bin-clock event at u = tau - 1
//   delta = 0            -> log(1 - q0) + bin-clock survival of u < c

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "svl/survival.hpp"

namespace svl {

class BinSpec {
 public:
  BinSpec() = default;
  explicit BinSpec(std::vector<std::int64_t> edges) : edges_(std::move(edges)) {
    if (edges_.size() < 2) throw std::invalid_argument("bin spec needs at least one bin");
    if (edges_.front() != 0) throw std::invalid_argument("first bin edge must be 0");
    for (std::size_t k = 1; k < edges_.size(); ++k) {
      if (edges_[k] <= edges_[k - 1]) {
        throw std::invalid_argument("bin edges must be strictly increasing at k=" +
                                    std::to_string(k));
      }
    }
  }

  std::size_t bins() const { return edges_.size() - 1; }
  std::int64_t horizon() const { return edges_.back(); }
  std::int64_t edge(std::size_t k) const { return edges_[k]; }
  std::int64_t length(std::size_t k) const { return edges_[k + 1] - edges_[k]; }
  const std::vector<std::int64_t>& edges() const { return edges_; }

  bool operator==(const BinSpec&) const = default;

 private:
  std::vector<std::int64_t> edges_;
};

/// Edges b_0 = 0 and b_k = max(b_{k-1} + 1, floor(rho^k)) with rho = H^(1/K), b_K = H.
inline BinSpec geometric_edges(std::size_t bins, std::int64_t horizon) {
  if (bins == 0) throw std::invalid_argument("bin count must be positive");
  if (horizon < static_cast<std::int64_t>(bins)) {
    throw std::invalid_argument("horizon " + std::to_string(horizon) + " smaller than bin count " +
                                std::to_string(bins));
  }
  const double rho = std::pow(static_cast<double>(horizon), 1.0 / static_cast<double>(bins));
  const auto K = static_cast<std::int64_t>(bins);
  std::vector<std::int64_t> edges(bins + 1, 0);
  for (std::int64_t k = 1; k < K; ++k) {
    const auto floor_k = static_cast<std::int64_t>(std::floor(std::pow(rho, static_cast<double>(k))));
    std::int64_t b = std::max(edges[k - 1] + 1, floor_k);
    // Leave room for the remaining K - k strictly increasing edges.
    edges[k] = std::min(b, horizon - (K - k));
  }
  edges[bins] = horizon;
  return BinSpec(std::move(edges));
}

/// Unit bins [0, 1, ..., H]; the finite-horizon estimator lives on this grid.
inline BinSpec uniform_edges(std::int64_t horizon) {
  if (horizon < 1) throw std::invalid_argument("horizon must be positive");
  std::vector<std::int64_t> edges(static_cast<std::size_t>(horizon) + 1);
  for (std::size_t k = 0; k < edges.size(); ++k) edges[k] = static_cast<std::int64_t>(k);
  return BinSpec(std::move(edges));
}

struct BinLocation {
  std::size_t bin = 0;
  std::int64_t offset = 0;
  bool operator==(const BinLocation&) const = default;
};

/// t = b_k + m with m < L_k, except t = H which maps to (K-1, L_{K-1}).
inline BinLocation locate(const BinSpec& spec, std::int64_t t) {
  if (t < 0 || t > spec.horizon()) {
    throw std::out_of_range("time " + std::to_string(t) + " outside [0, " +
                            std::to_string(spec.horizon()) + "]");
  }
  const std::size_t K = spec.bins();
  if (t == spec.horizon()) return {K - 1, spec.length(K - 1)};
  const auto& e = spec.edges();
  const auto it = std::upper_bound(e.begin(), e.end(), t);
  const auto k = static_cast<std::size_t>(it - e.begin()) - 1;
  return {k, t - e[k]};
}

/// Number of bins fully survived when the bin clock has run c steps.
inline std::size_t completed_bins(const BinSpec& spec, std::int64_t c) {
  if (c == spec.horizon()) return spec.bins();
  return locate(spec, c).bin;
}

enum class BinnedKind { kPch, kPcs };

struct BinnedHazard {
  BinnedKind kind = BinnedKind::kPch;
  std::vector<double> bin_values;  // per-step (PCH) or interval (PCS) hazards
  double tail_value = 0.0;         // per-step hazard past H; PCS ignores it
  double q0 = 0.0;                 // Pr(T = 0)

  void validate(const BinSpec& spec) const {
    if (bin_values.size() != spec.bins()) {
      throw std::invalid_argument("binned hazard has " + std::to_string(bin_values.size()) +
                                  " bins, spec has " + std::to_string(spec.bins()));
    }
    for (double v : bin_values) {
      if (!is_probability(v)) throw std::invalid_argument("bin hazard outside [0,1]");
    }
    if (!is_probability(tail_value) || !is_probability(q0)) {
      throw std::invalid_argument("tail or immediate-success probability outside [0,1]");
    }
  }
};

namespace detail {

inline void check_observation(const BinSpec& spec, std::int64_t tau, std::int64_t c, bool delta) {
  if (c < 0 || c > spec.horizon()) {
    throw std::invalid_argument("censoring time " + std::to_string(c) + " outside [0, H]");
  }
  if (delta && (tau < 0 || tau > c)) {
    throw std::invalid_argument("event time " + std::to_string(tau) + " not in [0, c]");
  }
  if (delta && tau >= spec.horizon()) {
    throw std::invalid_argument("event time must be < H on the bin clock");
  }
}

inline double log1m(double p) { return std::log1p(-clamp_probability(p)); }
inline double logp(double p) { return std::log(clamp_probability(p)); }

}  // namespace detail

/// PCH negative log-likelihood of one bin-clock observation.
inline double pch_nll_terms(const BinnedHazard& bh, const BinSpec& spec, std::int64_t tau,
                            std::int64_t c, bool delta) {
  bh.validate(spec);
  detail::check_observation(spec, tau, c, delta);
  const BinLocation at = locate(spec, delta ? tau : c);
  double ll = 0.0;
  for (std::size_t j = 0; j < at.bin; ++j) {
    ll += static_cast<double>(spec.length(j)) * detail::log1m(bh.bin_values[j]);
  }
  ll += static_cast<double>(at.offset) * detail::log1m(bh.bin_values[at.bin]);
  if (delta) ll += detail::logp(bh.bin_values[at.bin]);
  return -ll;
}

/// PCS negative log-likelihood; censored observations only count completed bins.
inline double pcs_nll_terms(const BinnedHazard& bh, const BinSpec& spec, std::int64_t tau,
                            std::int64_t c, bool delta) {
  bh.validate(spec);
  detail::check_observation(spec, tau, c, delta);
  const std::size_t survived = delta ? locate(spec, tau).bin : completed_bins(spec, c);
  double ll = 0.0;
  for (std::size_t j = 0; j < survived; ++j) ll += detail::log1m(bh.bin_values[j]);
  if (delta) ll += detail::logp(bh.bin_values[survived]);
  return -ll;
}

/// Real-time observation: composes q0 with the bin-clock terms of bh.kind.
inline double grouped_nll(const BinnedHazard& bh, const BinSpec& spec, std::int64_t tau,
                          std::int64_t c, bool delta) {
  if (delta && tau == 0) {
    if (c < 0 || c > spec.horizon()) throw std::invalid_argument("censoring time outside [0, H]");
    return -detail::logp(bh.q0);
  }
  const std::int64_t tau_bin = delta ? tau - 1 : 0;
  const double rest = bh.kind == BinnedKind::kPch ? pch_nll_terms(bh, spec, tau_bin, c, delta)
                                                  : pcs_nll_terms(bh, spec, tau_bin, c, delta);
  return rest - detail::log1m(bh.q0);
}

/// Discounted prefix sum over bin k under PCH: sum_{m<L} gamma^(b_k+m) (1-h)^m.
inline double pch_bin_discount(double gamma, std::int64_t start, std::int64_t length,
                               double hazard) {
  const double x = gamma * (1.0 - hazard);
  const double lead = std::pow(gamma, static_cast<double>(start));
  if (x == 1.0) return lead * static_cast<double>(length);
  return lead * (1.0 - std::pow(x, static_cast<double>(length))) / (1.0 - x);
}

inline double pch_value(const BinnedHazard& bh, const BinSpec& spec, Discount gamma) {
  bh.validate(spec);
  const double g = gamma.value();
  double survival = 1.0 - bh.q0;
  double acc = 0.0;
  for (std::size_t k = 0; k < spec.bins(); ++k) {
    const double h = bh.bin_values[k];
    acc += pch_bin_discount(g, spec.edge(k), spec.length(k), h) * survival;
    survival *= std::pow(1.0 - h, static_cast<double>(spec.length(k)));
  }
  acc += std::pow(g, static_cast<double>(spec.horizon())) * survival /
         (1.0 - g * (1.0 - bh.tail_value));
  return -acc;
}

inline double pcs_value(const BinnedHazard& bh, const BinSpec& spec, Discount gamma) {
  bh.validate(spec);
  const double g = gamma.value();
  double survival = 1.0 - bh.q0;
  double acc = 0.0;
  for (std::size_t k = 0; k < spec.bins(); ++k) {
    acc += survival * std::pow(g, static_cast<double>(spec.edge(k))) *
           (1.0 - std::pow(g, static_cast<double>(spec.length(k)))) / (1.0 - g);
    survival *= 1.0 - bh.bin_values[k];
  }
  acc += std::pow(g, static_cast<double>(spec.horizon())) * survival / (1.0 - g);
  return -acc;
}

/// Per-step hazards on the bin clock, u = 0..H-1 (PCH interpretation).
inline std::vector<double> expand_bin_clock(const BinnedHazard& bh, const BinSpec& spec) {
  std::vector<double> h;
  h.reserve(static_cast<std::size_t>(spec.horizon()));
  for (std::size_t k = 0; k < spec.bins(); ++k) {
    h.insert(h.end(), static_cast<std::size_t>(spec.length(k)), bh.bin_values[k]);
  }
  return h;
}

/// Real-time per-step hazards t = 0..H with the matching tail hazard.
///
/// PCH: h(0) = q0, h(t) = hbar of the bin holding t-1, tail hazard after H.
/// PCS: h(0) = q0, interval mass at each bin's right edge, S constant after H.
inline HazardCurve expand_real_time(const BinnedHazard& bh, const BinSpec& spec) {
  bh.validate(spec);
  std::vector<double> h(static_cast<std::size_t>(spec.horizon()) + 1, 0.0);
  h[0] = bh.q0;
  if (bh.kind == BinnedKind::kPch) {
    const auto per_step = expand_bin_clock(bh, spec);
    for (std::size_t u = 0; u < per_step.size(); ++u) h[u + 1] = per_step[u];
    return HazardCurve(std::move(h), bh.tail_value);
  }
  for (std::size_t k = 0; k < spec.bins(); ++k) {
    h[static_cast<std::size_t>(spec.edge(k + 1))] = bh.bin_values[k];
  }
  return HazardCurve(std::move(h), 0.0);
}

}  // namespace svl
