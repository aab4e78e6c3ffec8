#include "featdiff/binary_io.hpp"

#include <algorithm>

namespace featdiff::io {

void write_magic(std::ostream& os, const Magic& magic) { os.write(magic.data(), magic.size()); }

void expect_magic(std::istream& is, const Magic& magic, const std::string& what) {
  Magic got{};
  is.read(got.data(), got.size());
  if (!is || got != magic) throw IoError("not a " + what + " file (bad magic)");
}

void write_string(std::ostream& os, const std::string& s) {
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const auto n = read_le<std::uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw IoError("truncated string");
  return s;
}

void write_floats(std::ostream& os, std::span<const float> values) {
  for (float v : values) write_le(os, v);
}

std::vector<float> read_floats(std::istream& is, std::size_t count) {
  std::vector<float> out(count);
  for (auto& v : out) v = read_le<float>(is);
  return out;
}

void write_doubles(std::ostream& os, std::span<const double> values) {
  for (double v : values) write_le(os, v);
}

std::vector<double> read_doubles(std::istream& is, std::size_t count) {
  std::vector<double> out(count);
  for (auto& v : out) v = read_le<double>(is);
  return out;
}

void write_ints(std::ostream& os, std::span<const std::int32_t> values) {
  for (auto v : values) write_le(os, v);
}

std::vector<std::int32_t> read_ints(std::istream& is, std::size_t count) {
  std::vector<std::int32_t> out(count);
  for (auto& v : out) v = read_le<std::int32_t>(is);
  return out;
}

void write_blob(std::ostream& os, const std::string& blob) {
  write_le<std::uint64_t>(os, blob.size());
  os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

std::string read_blob(std::istream& is) {
  const auto n = read_le<std::uint64_t>(is);
  std::string blob(n, '\0');
  is.read(blob.data(), static_cast<std::streamsize>(n));
  if (!is) throw IoError("truncated blob");
  return blob;
}

}  // namespace featdiff::io
