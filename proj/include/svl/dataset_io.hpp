#pragma once

// Survival-tuple dataset files.
//
// CSV: header "state,goal,tau,c,delta", one record per line, integers only,
// censored records carry tau = -1.
//
// Binary (little-endian):
//   magic "SVLDATA\0" | u32 version = 1 | u64 count |
//   count x { i32 state | i32 goal | i64 tau | i64 c | u8 delta }
//
// Trajectory files (little-endian):
//   magic "SVLTRAJ\0" | u32 version = 1 | u64 count |
//   count x { u64 transitions T | (T + 1) x i32 state | T x i32 action }

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "svl/binary_io.hpp"
#include "svl/likelihood.hpp"

namespace svl {

inline constexpr std::array<char, 8> kDatasetMagic{'S', 'V', 'L', 'D', 'A', 'T', 'A', '\0'};
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr const char* kDatasetCsvHeader = "state,goal,tau,c,delta";

inline void write_csv(std::ostream& os, std::span<const SurvivalTuple> data) {
  os << kDatasetCsvHeader << '\n';
  for (const auto& t : data) {
    os << t.state << ',' << t.goal << ',' << t.tau << ',' << t.c << ',' << (t.delta ? 1 : 0)
       << '\n';
  }
}

namespace detail {

template <class Int>
Int parse_int_field(std::string_view field, std::size_t line, const char* name) {
  Int value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw std::runtime_error("line " + std::to_string(line) + ": bad " + name + " field '" +
                             std::string(field) + "'");
  }
  return value;
}

}  // namespace detail

inline std::vector<SurvivalTuple> read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kDatasetCsvHeader) {
    throw std::runtime_error("line 1: expected header '" + std::string(kDatasetCsvHeader) + "'");
  }
  std::vector<SurvivalTuple> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 5) {
      throw std::runtime_error("line " + std::to_string(lineno) + ": expected 5 fields");
    }
    SurvivalTuple t;
    t.state = detail::parse_int_field<std::int32_t>(fields[0], lineno, "state");
    t.goal = detail::parse_int_field<std::int32_t>(fields[1], lineno, "goal");
    t.tau = detail::parse_int_field<std::int64_t>(fields[2], lineno, "tau");
    t.c = detail::parse_int_field<std::int64_t>(fields[3], lineno, "c");
    const int delta = detail::parse_int_field<int>(fields[4], lineno, "delta");
    if (delta != 0 && delta != 1) {
      throw std::runtime_error("line " + std::to_string(lineno) + ": delta must be 0 or 1");
    }
    t.delta = delta == 1;
    try {
      t.validate();
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("line " + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(t);
  }
  return out;
}

inline void write_binary(std::ostream& os, std::span<const SurvivalTuple> data) {
  io::put_magic(os, kDatasetMagic);
  io::put_u32(os, kDatasetVersion);
  io::put_u64(os, data.size());
  for (const auto& t : data) {
    io::put_i32(os, t.state);
    io::put_i32(os, t.goal);
    io::put_i64(os, t.tau);
    io::put_i64(os, t.c);
    io::put_u8(os, t.delta ? 1 : 0);
  }
}

inline std::vector<SurvivalTuple> read_binary(std::istream& is) {
  io::expect_magic(is, kDatasetMagic, "survival dataset");
  const auto version = io::get_u32(is);
  if (version != kDatasetVersion) {
    throw std::runtime_error("unsupported dataset version " + std::to_string(version));
  }
  const auto count = io::get_u64(is);
  std::vector<SurvivalTuple> out;
  out.reserve(std::min<std::uint64_t>(count, 1u << 20));
  for (std::uint64_t i = 0; i < count; ++i) {
    SurvivalTuple t;
    t.state = io::get_i32(is);
    t.goal = io::get_i32(is);
    t.tau = io::get_i64(is);
    t.c = io::get_i64(is);
    const auto delta = io::get_u8(is);
    if (delta > 1) throw std::runtime_error("record " + std::to_string(i) + ": bad delta byte");
    t.delta = delta == 1;
    t.validate();
    out.push_back(t);
  }
  return out;
}

inline void save_dataset_csv(const std::string& path, std::span<const SurvivalTuple> data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_csv(os, data);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline void save_dataset_binary(const std::string& path, std::span<const SurvivalTuple> data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_binary(os, data);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline std::vector<SurvivalTuple> load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  try {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) return read_csv(is);
    return read_binary(is);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

inline constexpr std::array<char, 8> kTrajectoryMagic{'S', 'V', 'L', 'T', 'R', 'A', 'J', '\0'};

inline void write_trajectories(std::ostream& os, std::span<const Trajectory> data) {
  io::put_magic(os, kTrajectoryMagic);
  io::put_u32(os, kDatasetVersion);
  io::put_u64(os, data.size());
  for (const auto& traj : data) {
    traj.validate();
    io::put_u64(os, traj.transitions());
    for (StateId s : traj.states) io::put_i32(os, s);
    for (int a : traj.actions) io::put_i32(os, a);
  }
}

inline std::vector<Trajectory> read_trajectories(std::istream& is) {
  io::expect_magic(is, kTrajectoryMagic, "trajectory");
  const auto version = io::get_u32(is);
  if (version != kDatasetVersion) {
    throw std::runtime_error("unsupported trajectory file version " + std::to_string(version));
  }
  const auto count = io::get_u64(is);
  std::vector<Trajectory> out;
  out.reserve(std::min<std::uint64_t>(count, 1u << 20));
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto T = io::get_u64(is);
    if (T > (std::uint64_t{1} << 32)) throw std::runtime_error("trajectory too long");
    Trajectory traj;
    traj.states.resize(T + 1);
    traj.actions.resize(T);
    for (auto& s : traj.states) s = io::get_i32(is);
    for (auto& a : traj.actions) a = io::get_i32(is);
    out.push_back(std::move(traj));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing bytes");
  return out;
}

inline void save_trajectories(const std::string& path, std::span<const Trajectory> data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_trajectories(os, data);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline std::vector<Trajectory> load_trajectories(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  try {
    return read_trajectories(is);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

}  // namespace svl
