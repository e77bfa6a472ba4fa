#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace postfault {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of an independent substream identified by (seed, stream, counter).
constexpr std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream,
                                       std::uint64_t counter = 0) noexcept {
  return mix64(mix64(mix64(seed) ^ stream) ^ counter);
}

constexpr std::uint64_t stream_tag(std::string_view tag) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline Rng make_rng(std::uint64_t seed, std::string_view tag, std::uint64_t counter = 0) {
  return Rng(substream_seed(seed, stream_tag(tag), counter));
}

}  // namespace postfault
