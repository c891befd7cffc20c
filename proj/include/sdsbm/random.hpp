#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sdsbm {

using Rng = std::mt19937_64;

namespace detail {

inline std::uint64_t fnv1a(std::string_view text, std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Independent generator for a named sub-stream of a run seed. Streams with
/// different names never share state, so adding or editing one consumer
/// leaves the draws of every other consumer untouched.
inline Rng substream(std::uint64_t seed, std::string_view name) {
  const std::uint64_t h = detail::fnv1a(name);
  const std::uint64_t a = detail::splitmix64(seed);
  const std::uint64_t b = detail::splitmix64(a ^ h);
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Rng(seq);
}

}  // namespace sdsbm
