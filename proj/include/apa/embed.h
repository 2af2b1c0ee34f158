/// @file embed.h
/// @brief Embedding extraction: the embedder interface, the built-in log-mel
/// embedder and per-window time averaging.

#pragma once

#include <Eigen/Core>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "apa/audio_io.h"

namespace apa {

/// Row-major N x D float matrix; one embedding per row.
using EmbeddingMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EmbedderSpec {
  std::string id;
  int dim = 0;
  int input_rate = kCanonicalRate;

  bool operator==(const EmbedderSpec&) const = default;
};

/// @brief Embeddings of a window set plus the provenance needed to reuse them.
struct EmbeddingSet {
  EmbeddingMatrix vectors;
  EmbedderSpec embedder;
  std::string regime_label;
  double window_duration_s = 0.0;
  std::string source_fingerprint;
  /// Windows whose context or stem loudness was measured ungated while mixing.
  std::size_t context_fallbacks = 0;
  std::size_t stem_fallbacks = 0;

  std::size_t count() const { return static_cast<std::size_t>(vectors.rows()); }
  int dim() const { return static_cast<int>(vectors.cols()); }
};

/// @brief Maps mono windows at spec().input_rate to fixed-size vectors.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual const EmbedderSpec& spec() const = 0;
  /// One row per window, in input order.
  virtual EmbeddingMatrix embed_batch(std::span<const AudioBuffer> windows) = 0;
};

/// @brief Embeds one mixdown, checking rate, dimension and finiteness.
/// @throws Error(InvalidArgument) on a rate mismatch, Error(DimensionMismatch),
/// Error(NumericalFailure) for non-finite output.
std::vector<float> embed_window(const AudioBuffer& mixdown, Embedder& embedder);

/// @brief Arithmetic mean over frames (rows) of a frames x dim block.
std::vector<float> time_average(std::span<const float> frames, int dim);

namespace logmel {
inline constexpr int kFrameSize = 2048;
inline constexpr int kHop = 512;
inline constexpr int kBands = 64;
inline constexpr double kMaxHz = 24000.0;
inline constexpr double kLogFloor = 1e-10;
inline constexpr int kDim = 2 * kBands;
inline constexpr const char* kId = "builtin-logmel-128";

double hz_to_mel(double hz);
double mel_to_hz(double mel);
}  // namespace logmel

/// @brief Deterministic stand-in embedder: per-band mean (64) then per-band
/// standard deviation (64) over frames of a natural-log mel power spectrogram
/// (2048-sample Hann frames, hop 512, 64 HTK-mel triangles over 0-24 kHz).
/// @throws Error(TooShort) under one frame, Error(InvalidArgument) unless 48 kHz.
std::vector<float> builtin_logmel_embed(const AudioBuffer& buf);

class BuiltinLogMelEmbedder final : public Embedder {
 public:
  const EmbedderSpec& spec() const override { return spec_; }
  EmbeddingMatrix embed_batch(std::span<const AudioBuffer> windows) override;

 private:
  EmbedderSpec spec_{logmel::kId, logmel::kDim, kCanonicalRate};
};

}  // namespace apa
