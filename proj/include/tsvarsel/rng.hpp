#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace tsvarsel {

// All randomness in the library flows from one 64-bit seed. Consumers derive
// independent engines keyed by a purpose tag and a few integer keys, so that
// e.g. bucket 7 reproduces the same train/test split whether or not buckets
// 1..6 ran first.

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                                    std::initializer_list<std::uint64_t> keys = {}) noexcept {
  std::uint64_t h = detail::splitmix64(seed ^ detail::fnv1a(tag));
  for (auto k : keys) h = detail::splitmix64(h ^ detail::splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed, std::string_view tag,
                          std::initializer_list<std::uint64_t> keys = {}) {
  return Engine(derive_seed(seed, tag, keys));
}

}  // namespace tsvarsel
