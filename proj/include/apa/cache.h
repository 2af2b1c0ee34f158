/// @file cache.h
/// @brief Binary embedding cache.
///
/// Layout (little-endian):
///   "APAE" | u32 version (=1) | u32 dim | u64 count | u32 json_len | json | count*dim f32 row-major
/// The JSON carries embedder_id, input_rate, regime, window_duration_s, fingerprint
/// and the loudness fallback counts.

#pragma once

#include <filesystem>

#include "apa/embed.h"

namespace apa {

inline constexpr std::uint32_t kCacheVersion = 1;

void write_cache(const EmbeddingSet& set, const std::filesystem::path& path);
EmbeddingSet read_cache(const std::filesystem::path& path);

}  // namespace apa
