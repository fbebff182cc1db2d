#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace promptecho {

/// FNV-1a 64-bit over raw bytes. Used for content ids and cache keys;
/// stability across runs matters, cryptographic strength does not.
inline uint64_t fnv1a64(std::span<const uint8_t> bytes, uint64_t h = 0xcbf29ce484222325ULL) {
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64({reinterpret_cast<const uint8_t*>(s.data()), s.size()}, h);
}

inline std::string to_hex(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

inline std::string content_id(std::string_view s) { return to_hex(fnv1a64(s)); }

}  // namespace promptecho
