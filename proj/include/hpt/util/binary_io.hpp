#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "hpt/errors.hpp"

// Little-endian scalar I/O for the artifact formats.

namespace hpt::io {

template <class U>
void write_le(std::ostream& os, U value) {
  static_assert(std::is_unsigned_v<U>);
  std::array<char, sizeof(U)> buf{};
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
  os.write(buf.data(), buf.size());
}

inline void write_u8(std::ostream& os, std::uint8_t v) { write_le(os, v); }
inline void write_u32(std::ostream& os, std::uint32_t v) { write_le(os, v); }
inline void write_f64(std::ostream& os, double v) { write_le(os, std::bit_cast<std::uint64_t>(v)); }
inline void write_f32(std::ostream& os, float v) { write_le(os, std::bit_cast<std::uint32_t>(v)); }
inline void write_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), magic.size()); }

template <class U>
U read_le(std::istream& is, const char* what) {
  std::array<unsigned char, sizeof(U)> buf{};
  is.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!is) throw FormatError(std::string("truncated file while reading ") + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

inline std::uint8_t read_u8(std::istream& is, const char* what) { return read_le<std::uint8_t>(is, what); }
inline std::uint32_t read_u32(std::istream& is, const char* what) { return read_le<std::uint32_t>(is, what); }
inline double read_f64(std::istream& is, const char* what) {
  return std::bit_cast<double>(read_le<std::uint64_t>(is, what));
}
inline float read_f32(std::istream& is, const char* what) {
  return std::bit_cast<float>(read_le<std::uint32_t>(is, what));
}

inline void expect_magic(std::istream& is, std::string_view magic, const char* what) {
  std::string buf(magic.size(), '\0');
  is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!is || buf != magic) throw FormatError(std::string(what) + ": bad magic, expected '" + std::string(magic) + "'");
}

inline void expect_version(std::uint32_t got, std::uint32_t want, const char* what) {
  if (got != want) {
    throw FormatError(std::string(what) + ": unsupported version " + std::to_string(got) +
                      " (expected " + std::to_string(want) + ")");
  }
}

}  // namespace hpt::io
