/// @file audio_io.h
/// @brief WAV decoding/encoding, resampling and window extraction.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace apa {

/// Canonical processing rate; every buffer is resampled to it on ingest.
inline constexpr int kCanonicalRate = 48000;

/// @brief Mono PCM buffer.
struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate = kCanonicalRate;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }

  bool operator==(const AudioBuffer&) const = default;
};

/// @brief A fixed-length excerpt of a song.
struct Window {
  AudioBuffer buffer;
  std::string source_song_id;
  double source_offset_s = 0.0;
  double duration_s = 0.0;
};

/// @brief A (context, stem) window pair. `matched` is true when both sides
/// come from the same song at the same offset.
struct WindowPair {
  Window context;
  Window stem;
  bool matched = true;
};

enum class WavEncoding { Pcm16, Pcm24, Float32 };

/// @brief Decodes a RIFF/WAVE byte stream (PCM 16/24-bit or float32, 1-2 channels)
/// to mono at its native rate. Stereo is averaged per sample.
AudioBuffer decode_wav(std::span<const std::uint8_t> bytes);

/// @brief Encodes a mono buffer as a RIFF/WAVE byte stream.
std::vector<std::uint8_t> encode_wav(const AudioBuffer& buf, WavEncoding encoding = WavEncoding::Float32);

AudioBuffer load_audio(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioBuffer& buf,
               WavEncoding encoding = WavEncoding::Float32);

/// @brief Band-limited resampling to @p target_rate using a Kaiser-windowed sinc
/// kernel (64 taps at unity ratio, widened when decimating).
/// Output length is round(n * target_rate / sample_rate). Same-rate input is
/// returned unchanged.
AudioBuffer resample(const AudioBuffer& buf, int target_rate);

/// @brief Resamples raw samples by an arbitrary ratio (output/input rate).
/// Only the first @p max_output output samples are computed.
std::vector<float> resample_ratio(std::span<const float> input, double ratio,
                                  std::size_t max_output = static_cast<std::size_t>(-1));

/// @brief Copies the span [offset_s, offset_s + duration_s) out of @p buf.
/// @throws Error(OutOfRange) when the span does not fit inside the buffer.
Window extract_window(const AudioBuffer& buf, double offset_s, double duration_s,
                      std::string source_song_id = {});

/// Sample count of a duration at a rate.
std::size_t samples_for(double duration_s, int sample_rate);

}  // namespace apa
