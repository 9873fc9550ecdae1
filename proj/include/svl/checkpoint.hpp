#pragma once

// Binary model container.
//
//   magic      8 bytes  "SVLCKPT\0"
//   version    u32      1
//   kind       u32      1 tabular hazard, 2 low-rank hazard net,
//                       3 flat policy, 4 hierarchical policy
//   shape_len  u32
//   shape      u64[shape_len]
//   count      u64      number of parameters
//   params     f64[count], row-major
//
// All integers and doubles are little-endian.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "svl/binary_io.hpp"
#include "svl/hsvl.hpp"
#include "svl/lowrank_net.hpp"
#include "svl/tabular_hazard.hpp"

namespace svl {

enum class CheckpointKind : std::uint32_t {
  kTabularHazard = 1,
  kLowRankHazard = 2,
  kFlatPolicy = 3,
  kHierPolicy = 4,
};

inline constexpr std::array<char, 8> kCheckpointMagic = {'S', 'V', 'L', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  CheckpointKind kind = CheckpointKind::kTabularHazard;
  std::vector<std::uint64_t> shape;
  std::vector<double> params;
};

inline void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  io::put_magic(os, kCheckpointMagic);
  io::put_u32(os, kCheckpointVersion);
  io::put_u32(os, static_cast<std::uint32_t>(ckpt.kind));
  io::put_u32(os, static_cast<std::uint32_t>(ckpt.shape.size()));
  for (auto d : ckpt.shape) io::put_u64(os, d);
  io::put_u64(os, ckpt.params.size());
  for (double p : ckpt.params) io::put_f64(os, p);
  if (!os) throw std::runtime_error("failed writing checkpoint");
}

inline Checkpoint read_checkpoint(std::istream& is) {
  io::expect_magic(is, kCheckpointMagic, "checkpoint");
  if (const auto v = io::get_u32(is); v != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(v));
  }
  Checkpoint ckpt;
  const auto kind = io::get_u32(is);
  if (kind < 1 || kind > 4) throw std::runtime_error("unknown checkpoint kind " + std::to_string(kind));
  ckpt.kind = static_cast<CheckpointKind>(kind);
  const auto rank = io::get_u32(is);
  if (rank > 16) throw std::runtime_error("checkpoint shape table too long");
  for (std::uint32_t i = 0; i < rank; ++i) ckpt.shape.push_back(io::get_u64(is));
  const auto count = io::get_u64(is);
  if (count > (std::uint64_t{1} << 32)) throw std::runtime_error("checkpoint parameter count too large");
  ckpt.params.resize(count);
  for (auto& p : ckpt.params) p = io::get_f64(is);
  if (is.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error("trailing bytes after checkpoint");
  }
  return ckpt;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_checkpoint(os, ckpt);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  try {
    return read_checkpoint(is);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

namespace detail {

inline void expect_kind(const Checkpoint& c, CheckpointKind kind, std::size_t rank) {
  if (c.kind != kind) throw std::runtime_error("checkpoint holds a different model kind");
  if (c.shape.size() != rank) throw std::runtime_error("checkpoint shape table has wrong length");
}

inline void copy_params(const Checkpoint& c, std::span<double> dst) {
  if (c.params.size() != dst.size()) {
    throw std::runtime_error("checkpoint has " + std::to_string(c.params.size()) +
                             " parameters, model expects " + std::to_string(dst.size()));
  }
  std::copy(c.params.begin(), c.params.end(), dst.begin());
}

}  // namespace detail

inline Checkpoint to_checkpoint(const TabularHazard& m) {
  return {CheckpointKind::kTabularHazard,
          {m.num_states(), m.num_goals(), m.bins()},
          {m.params().begin(), m.params().end()}};
}

inline TabularHazard tabular_from_checkpoint(const Checkpoint& c) {
  detail::expect_kind(c, CheckpointKind::kTabularHazard, 3);
  TabularHazard m(c.shape[0], c.shape[1], c.shape[2]);
  detail::copy_params(c, m.params());
  return m;
}

inline Checkpoint to_checkpoint(const LowRankHazardNet& m) {
  const auto& cfg = m.config();
  return {CheckpointKind::kLowRankHazard,
          {cfg.input_dim, cfg.width, cfg.depth, cfg.basis_sets, cfg.rank, cfg.bins},
          {m.params().begin(), m.params().end()}};
}

/// Features are not stored; attach them with set_features after loading.
inline LowRankHazardNet lowrank_from_checkpoint(const Checkpoint& c) {
  detail::expect_kind(c, CheckpointKind::kLowRankHazard, 6);
  LowRankConfig cfg;
  cfg.input_dim = c.shape[0];
  cfg.width = c.shape[1];
  cfg.depth = c.shape[2];
  cfg.basis_sets = c.shape[3];
  cfg.rank = c.shape[4];
  cfg.bins = c.shape[5];
  LowRankHazardNet m(cfg);
  detail::copy_params(c, m.params());
  return m;
}

inline Checkpoint to_checkpoint(const TabularPolicy& pi) {
  return {CheckpointKind::kFlatPolicy,
          {pi.num_states(), pi.num_goals(), static_cast<std::uint64_t>(kNumActions)},
          {pi.table().begin(), pi.table().end()}};
}

inline TabularPolicy flat_policy_from_checkpoint(const Checkpoint& c) {
  detail::expect_kind(c, CheckpointKind::kFlatPolicy, 3);
  if (c.shape[2] != kNumActions) throw std::runtime_error("checkpoint action count mismatch");
  TabularPolicy pi(c.shape[0], c.shape[1]);
  detail::copy_params(c, pi.table());
  pi.validate();
  return pi;
}

inline Checkpoint to_checkpoint(const HierPolicy& pi) {
  Checkpoint c{CheckpointKind::kHierPolicy,
               {pi.num_states(), pi.num_goals(), static_cast<std::uint64_t>(pi.subgoal_step())},
               {}};
  c.params.assign(pi.high_table().begin(), pi.high_table().end());
  c.params.insert(c.params.end(), pi.low_table().begin(), pi.low_table().end());
  return c;
}

inline HierPolicy hier_policy_from_checkpoint(const Checkpoint& c) {
  detail::expect_kind(c, CheckpointKind::kHierPolicy, 3);
  HierPolicy pi(c.shape[0], c.shape[1], static_cast<std::int64_t>(c.shape[2]));
  auto high = pi.high_table();
  auto low = pi.low_table();
  if (c.params.size() != high.size() + low.size()) {
    throw std::runtime_error("hierarchical policy checkpoint has wrong parameter count");
  }
  std::copy_n(c.params.begin(), high.size(), high.begin());
  std::copy(c.params.begin() + static_cast<std::ptrdiff_t>(high.size()), c.params.end(), low.begin());
  pi.validate();
  return pi;
}

}  // namespace svl
