#pragma once

#include <array>
#include <cstdint>
#include <cstddef>

namespace sinfer {

namespace detail {

inline const std::array<uint32_t, 256>& crc32_table() {
  static const std::array<uint32_t, 256> table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int b = 0; b < 8; ++b) c = c & 1 ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  return table;
}

}  // namespace detail

inline uint32_t crc32_update(uint32_t crc, const void* data, size_t n) {
  const auto& t = detail::crc32_table();
  const uint8_t* p = static_cast<const uint8_t*>(data);
  crc = ~crc;
  for (size_t i = 0; i < n; ++i) crc = t[(crc ^ p[i]) & 0xff] ^ (crc >> 8);
  return ~crc;
}

inline uint32_t crc32(const void* data, size_t n) {
  return crc32_update(0, data, n);
}

}  // namespace sinfer
