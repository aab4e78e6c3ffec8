#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "featdiff/errors.hpp"

// Little-endian primitives shared by every on-disk format in the project.
namespace featdiff::io {

using Magic = std::array<char, 4>;

template <typename T>
void write_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes{};
  is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
  if (!is) throw IoError("unexpected end of stream");
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  return std::bit_cast<T>(bytes);
}

void write_magic(std::ostream& os, const Magic& magic);
/// Throws IoError naming `what` if the next four bytes differ from `magic`.
void expect_magic(std::istream& is, const Magic& magic, const std::string& what);

void write_string(std::ostream& os, const std::string& s);
std::string read_string(std::istream& is);

void write_floats(std::ostream& os, std::span<const float> values);
std::vector<float> read_floats(std::istream& is, std::size_t count);

void write_doubles(std::ostream& os, std::span<const double> values);
std::vector<double> read_doubles(std::istream& is, std::size_t count);

void write_ints(std::ostream& os, std::span<const std::int32_t> values);
std::vector<std::int32_t> read_ints(std::istream& is, std::size_t count);

/// Length-prefixed opaque blob (used to embed serialized module weights).
void write_blob(std::ostream& os, const std::string& blob);
std::string read_blob(std::istream& is);

}  // namespace featdiff::io
