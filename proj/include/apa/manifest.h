/// @file manifest.h
/// @brief Multitrack corpus description and loading.
///
/// Manifest JSON:
/// @code
/// {"version": 1, "sample_rate": 48000,
///  "songs": [{"id": "s01", "context": ["drums.wav", "keys.wav"], "stem": "bass.wav"}, ...]}
/// @endcode
/// Relative paths resolve against the manifest's directory. Context files are
/// summed at unity gain.

#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "apa/audio_io.h"

namespace apa {

inline constexpr int kManifestVersion = 1;

struct SongEntry {
  std::string id;
  std::vector<std::filesystem::path> context;
  std::filesystem::path stem;
};

struct PairManifest {
  int version = kManifestVersion;
  int sample_rate = kCanonicalRate;
  std::vector<SongEntry> songs;
};

/// @throws Error(InvalidManifest) for schema violations, duplicate ids or missing files.
PairManifest parse_manifest(const nlohmann::json& doc, const std::filesystem::path& base_dir);
PairManifest load_manifest(const std::filesystem::path& path);
nlohmann::json to_json(const PairManifest& manifest);

/// @brief Decoded song: summed context and stem at the manifest rate, trimmed to equal length.
struct SongAudio {
  std::string id;
  AudioBuffer context;
  AudioBuffer stem;

  std::size_t size() const { return context.size(); }
};

struct Corpus {
  std::vector<SongAudio> songs;
  int sample_rate = kCanonicalRate;
  /// Content hash of all decoded audio and ids.
  std::string fingerprint;
};

Corpus load_corpus(const PairManifest& manifest);
Corpus make_corpus(std::vector<SongAudio> songs, int sample_rate);

}  // namespace apa
