/// @file dynamics.h
/// @brief Peak and integrated-loudness (BS.1770-4) measurement, normalization,
/// look-ahead limiting and the seven context/stem mix regimes.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "apa/audio_io.h"
#include "apa/error.h"

namespace apa {

enum class RegimeKind { Peak, Loudness };

/// @brief Level rule applied to context and stem before summing.
/// Targets are dBFS peak for peak regimes and LUFS for loudness regimes.
struct MixRegime {
  std::string label;
  RegimeKind kind = RegimeKind::Peak;
  double context_target = 0.0;
  double stem_target = 0.0;
  bool preserve_relative = false;
};

/// @brief Looks up one of PP, P0, P1, P2, L0, L1, L2.
/// @throws Error(InvalidArgument) for any other label.
MixRegime mix_regime(std::string_view label);

/// All seven regime labels in table order.
const std::vector<std::string>& regime_labels();

struct LoudnessReading {
  double lufs = 0.0;
  std::size_t gated_blocks = 0;
};

/// @brief 20*log10(max |x|).
/// @throws Error(SilentAudio) for all-zero input, Error(InvalidArgument) for empty input.
double peak_of(std::span<const float> samples);

/// @brief Scalar gain so the peak lands at @p target_db dBFS.
std::vector<float> peak_normalize(std::span<const float> samples, double target_db);

/// @brief Integrated loudness: K-weighting, 400 ms blocks with 75 % overlap,
/// -70 LUFS absolute gate and a relative gate 10 LU under the abs-gated mean.
/// @throws Error(TooShort) under 400 ms, Error(SilentAudio) when no block passes the absolute gate.
LoudnessReading integrated_loudness(const AudioBuffer& buf);

/// @brief K-weighted mean-square loudness over the whole buffer, without gating.
/// @throws Error(SilentAudio) for digital silence.
double ungated_loudness(const AudioBuffer& buf);

/// @brief Integrated loudness, falling back to the ungated measure when the
/// gates reject every block of a non-silent buffer (sparse material).
/// @p fell_back is set when the fallback was used.
double loudness_with_fallback(const AudioBuffer& buf, bool* fell_back = nullptr);

AudioBuffer loudness_normalize(const AudioBuffer& buf, double target_lufs);

struct LimiterConfig {
  double lookahead_s = 0.005;
  double release_s = 0.050;
  /// Largest float not above 0.999.
  float ceiling = 0.99899995f;
};

/// @brief Look-ahead peak limiter. Output never exceeds the ceiling in magnitude;
/// input that never crosses the ceiling is returned bit-identical.
std::vector<float> limit(std::span<const float> samples, int sample_rate, const LimiterConfig& cfg = {});

/// Which input peak PP normalizes the mix to.
enum class PeakReference { LouderInput, MixPeak };

struct MixOptions {
  LimiterConfig limiter{};
  PeakReference pp_reference = PeakReference::LouderInput;
};

enum class PairSide { Context, Stem };

class SilentPartError : public Error {
 public:
  explicit SilentPartError(PairSide side)
      : Error(ErrorCode::SilentPart, side == PairSide::Context ? "context" : "stem"), side_(side) {}
  PairSide side() const noexcept { return side_; }

 private:
  PairSide side_;
};

/// @brief Per-part levels after regime normalization, before summing.
struct NormalizedParts {
  std::vector<float> context;
  std::vector<float> stem;
  bool context_fallback = false;  ///< loudness measured ungated
  bool stem_fallback = false;
};

/// @brief Applies the regime's per-part gains. PP returns the parts unchanged.
/// @throws Error(SilentPart) naming the silent side for P/L regimes.
NormalizedParts normalize_parts(const WindowPair& pair, const MixRegime& regime);

struct MixResult {
  AudioBuffer mix;
  bool context_fallback = false;
  bool stem_fallback = false;
};

/// @brief Down-mixes a pair under a regime: normalize parts, sum, limit.
MixResult mix_detailed(const WindowPair& pair, const MixRegime& regime, const MixOptions& opts = {});

AudioBuffer mix(const WindowPair& pair, const MixRegime& regime, const MixOptions& opts = {});

}  // namespace apa
