#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace transnet {

// Flat little-endian array files. On a little-endian host these are straight
// memcpy streams; the byte swap branch keeps the on-disk format fixed.

namespace detail {

template <typename T>
void swap_bytes_all(std::vector<T>& v) {
  for (T& x : v) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(x);
    std::reverse(bytes.begin(), bytes.end());
    x = std::bit_cast<T>(bytes);
  }
}

}  // namespace detail

template <typename T>
void write_array_le(std::ostream& out, const std::vector<T>& v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(T)));
  } else {
    std::vector<T> tmp = v;
    detail::swap_bytes_all(tmp);
    out.write(reinterpret_cast<const char*>(tmp.data()),
              static_cast<std::streamsize>(tmp.size() * sizeof(T)));
  }
  if (!out) throw std::runtime_error("write failed");
}

template <typename T>
std::vector<T> read_array_le(std::istream& in, std::size_t count) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::vector<T> v(count);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(count * sizeof(T)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(T))
    throw std::runtime_error("short read: expected " +
                             std::to_string(count * sizeof(T)) + " bytes");
  if constexpr (std::endian::native == std::endian::big)
    detail::swap_bytes_all(v);
  return v;
}

// Round-trip-exact double formatting for text manifests.
std::string fmt_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace transnet
