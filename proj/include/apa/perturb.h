/// @file perturb.h
/// @brief Stem transformations used to build candidate sets for validation.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "apa/audio_io.h"

namespace apa {

enum class TransformKind { True, Noise, TimeShift, PitchShift, TimePitchShift, Substitute, External };

struct TimeShiftRange {
  double min_s = 0.2;
  double max_s = 3.0;
};

struct SemitoneRange {
  int min = 1;
  int max = 7;
};

/// @brief A stem transformation and its parameters.
struct Transform {
  std::string label;
  TransformKind kind = TransformKind::True;
  /// True when adherence should be unaffected by the transform.
  bool invariant_class = true;
  TimeShiftRange shift_range{};
  SemitoneRange semitone_range{};
  double noise_offset_db = -20.0;
  std::string command;  ///< EXT only
};

/// @brief Looks up TRUE, NOISE, TS, PS, TPS or SUBS.
Transform transform_by_label(std::string_view label);

/// @brief External command transform (e.g. a neural codec round-trip). Treated as invariant.
Transform external_transform_spec(std::string label, std::string command, bool invariant_class = true);

/// Built-in labels in table order.
const std::vector<std::string>& builtin_transform_labels();

struct ShiftOptions {
  /// When set, |shift_s| must lie inside the range.
  std::optional<TimeShiftRange> enforce_range;
};

/// @brief Circularly rotates the stem by round(shift_s * rate) samples; positive delays.
/// @throws Error(OutOfRange) when |shift_s| is zero, exceeds the window, or leaves the enforced range.
Window time_shift(const Window& stem, double shift_s, const ShiftOptions& opts = {});

struct PitchOptions {
  /// Allows |semitones| outside [1, 7], including 0.
  bool test_mode = false;
};

/// @brief Resample-and-loop pitch shift by 2^(semitones/12), duration preserved.
Window pitch_shift(const Window& stem, int semitones, const PitchOptions& opts = {});

/// @brief pitch_shift followed by time_shift.
Window time_pitch_shift(const Window& stem, double shift_s, int semitones, const ShiftOptions& shift_opts = {},
                        const PitchOptions& pitch_opts = {});

/// @brief White Gaussian noise whose integrated loudness is the stem's loudness plus @p offset_db.
std::vector<float> make_noise(const Window& stem, std::uint64_t seed, double offset_db = -20.0);

/// @brief stem + make_noise(stem, seed, offset_db).
Window add_noise(const Window& stem, std::uint64_t seed, double offset_db = -20.0);

/// @brief Random permutation `perm` of [0, n) such that song_ids[perm[i]] != song_ids[i]
/// for every i. Draws are a pure function of the ids and @p seed.
/// @throws Error(TooFewPairs) for n < 2, Error(InfeasibleDerangement) when one song
/// holds more than half the entries.
std::vector<std::size_t> derange_by_song(const std::vector<std::string>& song_ids, std::uint64_t seed);

/// @brief Re-pairs stems across pairs so no stem lands on a context from its own song.
std::vector<WindowPair> substitute_stems(const std::vector<WindowPair>& pairs, std::uint64_t seed);

/// @brief Pipes the stem as a WAV through `/bin/sh -c command` and reads a WAV back.
/// `{sample_rate}` in the command is replaced by the stem's rate.
/// @throws Error(CommandFailed) on nonzero exit, Error(LengthMismatch) when length or rate change.
Window external_transform(const Window& stem, const std::string& command, double timeout_s = 600.0);

}  // namespace apa
