#pragma once

#include <bit>
#include <cstdint>
#include <string_view>

namespace pai {

// FNV-1a, 64 bit.
constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Order-sensitive combination used to derive independent random streams.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t v) {
  return splitmix64(seed ^ splitmix64(v + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t mix_seed(std::uint64_t seed, double v) {
  return mix_seed(seed, std::bit_cast<std::uint64_t>(v));
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view s) { return mix_seed(seed, fnv1a(s)); }

}  // namespace pai
