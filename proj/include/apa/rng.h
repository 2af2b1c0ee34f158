/// @file rng.h
/// @brief Counter-based seed derivation.
/// @details One global seed is split into independent named streams (sampling,
/// mismatching, per-transform draws). Each stream, and each item within a
/// stream, gets its own generator so that the draws of one stage never depend
/// on how many numbers another stage consumed or on thread scheduling.

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace apa {

/// @brief SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// @brief FNV-1a over bytes; used for stream names and fingerprints.
constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// @brief Seed for the named stream of a global seed.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::string_view stream) {
  return mix64(seed ^ mix64(fnv1a(stream)));
}

/// @brief Seed for item @p index of the named stream.
constexpr std::uint64_t item_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index) {
  return mix64(stream_seed(seed, stream) + mix64(index + 1));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::string_view stream) {
  return Rng(stream_seed(seed, stream));
}

inline Rng make_rng(std::uint64_t seed, std::string_view stream, std::uint64_t index) {
  return Rng(item_seed(seed, stream, index));
}

}  // namespace apa
