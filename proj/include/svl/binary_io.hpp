#pragma once

// Little-endian primitive encoding shared by the dataset and checkpoint formats.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>

namespace svl::io {

template <class U>
void put_le(std::ostream& os, U value) {
  static_assert(std::is_unsigned_v<U>);
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
  }
  os.write(bytes.data(), bytes.size());
}

template <class U>
U get_le(std::istream& is) {
  static_assert(std::is_unsigned_v<U>);
  std::array<unsigned char, sizeof(U)> bytes{};
  is.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!is) throw std::runtime_error("unexpected end of binary stream");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

inline void put_u8(std::ostream& os, std::uint8_t v) { put_le<std::uint8_t>(os, v); }
inline void put_u32(std::ostream& os, std::uint32_t v) { put_le(os, v); }
inline void put_u64(std::ostream& os, std::uint64_t v) { put_le(os, v); }
inline void put_i32(std::ostream& os, std::int32_t v) { put_le(os, static_cast<std::uint32_t>(v)); }
inline void put_i64(std::ostream& os, std::int64_t v) { put_le(os, static_cast<std::uint64_t>(v)); }
inline void put_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint64_t>(v)); }

inline std::uint8_t get_u8(std::istream& is) { return get_le<std::uint8_t>(is); }
inline std::uint32_t get_u32(std::istream& is) { return get_le<std::uint32_t>(is); }
inline std::uint64_t get_u64(std::istream& is) { return get_le<std::uint64_t>(is); }
inline std::int32_t get_i32(std::istream& is) { return static_cast<std::int32_t>(get_u32(is)); }
inline std::int64_t get_i64(std::istream& is) { return static_cast<std::int64_t>(get_u64(is)); }
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

inline void put_magic(std::ostream& os, const std::array<char, 8>& magic) {
  os.write(magic.data(), magic.size());
}

inline void expect_magic(std::istream& is, const std::array<char, 8>& magic, const char* what) {
  std::array<char, 8> got{};
  is.read(got.data(), got.size());
  if (!is || got != magic) throw std::runtime_error(std::string("not a ") + what + " file");
}

/// 64-bit FNV-1a; stable across platforms, used for content fingerprints.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace svl::io
