/// @file synth.h
/// @brief Synthetic multitrack corpus: keyed chord contexts with drums, and
/// stems that follow each song's key, harmony and tempo.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "apa/audio_io.h"
#include "apa/manifest.h"

namespace apa {

struct SynthOptions {
  std::size_t songs = 16;
  double seconds = 20.0;
  std::uint64_t seed = 7;
  int sample_rate = kCanonicalRate;
  WavEncoding encoding = WavEncoding::Pcm16;
};

enum class StemStyle { Bass, Lead, Clicks };

struct SynthSong {
  std::string id;
  int root_midi = 0;
  double bpm = 0.0;
  StemStyle style = StemStyle::Bass;
  AudioBuffer keys;   ///< context part
  AudioBuffer drums;  ///< context part
  AudioBuffer stem;
};

SynthSong synthesize_song(std::size_t index, const SynthOptions& opts);

/// @brief In-memory corpus, equivalent to loading what generate_corpus writes
/// (up to WAV quantization).
Corpus synthesize_corpus(const SynthOptions& opts);

/// @brief Writes keys/drums/stem WAVs per song plus manifest.json into @p dir.
/// @return path of the manifest.
std::filesystem::path generate_corpus(const std::filesystem::path& dir, const SynthOptions& opts);

}  // namespace apa
