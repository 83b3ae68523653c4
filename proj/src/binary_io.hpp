#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "obqa/common.hpp"

// Little-endian fixed-width encoding shared by the index and checkpoint files.
namespace obqa::binary_io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <typename T>
  requires std::is_trivially_copyable_v<T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
  requires std::is_trivially_copyable_v<T>
T get(std::istream& in) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw DataError("unexpected end of binary file");
  }
  return value;
}

inline void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, std::uint32_t max_len = 1u << 26) {
  const auto n = get<std::uint32_t>(in);
  if (n > max_len) throw DataError("string length out of range in binary file");
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) throw DataError("unexpected end of binary file");
  return s;
}

inline void put_magic(std::ostream& out, const char (&magic)[9]) { out.write(magic, 8); }

inline void expect_magic(std::istream& in, const char (&magic)[9], const char* what) {
  char buf[8];
  if (!in.read(buf, 8) || std::string(buf, 8) != std::string(magic, 8)) {
    throw DataError(std::string("not a ") + what + " file (bad magic)");
  }
}

}  // namespace obqa::binary_io
