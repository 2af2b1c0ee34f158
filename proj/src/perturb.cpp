#include "apa/perturb.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "apa/dynamics.h"
#include "apa/error.h"
#include "apa/rng.h"
#include "apa/subprocess.h"

namespace apa {

namespace {

Window with_samples(const Window& like, std::vector<float> samples) {
  Window w = like;
  w.buffer.samples = std::move(samples);
  return w;
}

bool assignment_ok(const std::vector<std::string>& ids, const std::vector<std::size_t>& perm, std::size_t i) {
  return ids[perm[i]] != ids[i];
}

// Groups laid out contiguously and rotated by the largest group size; valid
// whenever no group exceeds half of the entries.
std::vector<std::size_t> rotation_derangement(const std::vector<std::string>& ids, Rng& rng) {
  const std::size_t n = ids.size();
  std::map<std::string, std::uint64_t> group_key;
  std::map<std::string, std::size_t> group_size;
  for (const auto& id : ids) ++group_size[id];
  for (const auto& [id, size] : group_size) group_key[id] = rng();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return group_key[ids[a]] < group_key[ids[b]]; });

  std::size_t largest = 0;
  for (const auto& [id, size] : group_size) largest = std::max(largest, size);
  std::vector<std::size_t> perm(n);
  for (std::size_t p = 0; p < n; ++p) perm[order[p]] = order[(p + largest) % n];
  return perm;
}

}  // namespace

Transform transform_by_label(std::string_view label) {
  Transform t;
  t.label = std::string(label);
  if (label == "TRUE") {
    t.kind = TransformKind::True;
  } else if (label == "NOISE") {
    t.kind = TransformKind::Noise;
  } else if (label == "TS") {
    t.kind = TransformKind::TimeShift;
    t.invariant_class = false;
  } else if (label == "PS") {
    t.kind = TransformKind::PitchShift;
    t.invariant_class = false;
  } else if (label == "TPS") {
    t.kind = TransformKind::TimePitchShift;
    t.invariant_class = false;
  } else if (label == "SUBS") {
    t.kind = TransformKind::Substitute;
    t.invariant_class = false;
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown transform '" + std::string(label) + "'");
  }
  return t;
}

Transform external_transform_spec(std::string label, std::string command, bool invariant_class) {
  Transform t;
  t.label = std::move(label);
  t.kind = TransformKind::External;
  t.invariant_class = invariant_class;
  t.command = std::move(command);
  return t;
}

const std::vector<std::string>& builtin_transform_labels() {
  static const std::vector<std::string> labels{"TRUE", "NOISE", "TS", "PS", "TPS", "SUBS"};
  return labels;
}

Window time_shift(const Window& stem, double shift_s, const ShiftOptions& opts) {
  const auto& buf = stem.buffer;
  const double magnitude = std::abs(shift_s);
  if (!(magnitude > 0.0) || magnitude > buf.duration_s() + 0.5 / buf.sample_rate) {
    throw Error(ErrorCode::OutOfRange, "time shift of " + std::to_string(shift_s) + " s");
  }
  if (opts.enforce_range && (magnitude < opts.enforce_range->min_s || magnitude > opts.enforce_range->max_s)) {
    throw Error(ErrorCode::OutOfRange, "time shift of " + std::to_string(shift_s) + " s outside configured range");
  }
  const auto n = static_cast<std::ptrdiff_t>(buf.size());
  if (n == 0) return stem;
  std::ptrdiff_t k = std::llround(shift_s * buf.sample_rate) % n;
  if (k < 0) k += n;
  std::vector<float> out(buf.samples.size());
  std::rotate_copy(buf.samples.begin(), buf.samples.end() - k, buf.samples.end(), out.begin());
  return with_samples(stem, std::move(out));
}

Window pitch_shift(const Window& stem, int semitones, const PitchOptions& opts) {
  const int magnitude = std::abs(semitones);
  if (!opts.test_mode && (magnitude < 1 || magnitude > 7)) {
    throw Error(ErrorCode::OutOfRange, "pitch shift of " + std::to_string(semitones) + " semitones");
  }
  if (semitones == 0) return stem;
  const double factor = std::pow(2.0, semitones / 12.0);
  // Shorter (higher) or longer (lower) version of the same material.
  std::vector<float> shifted = resample_ratio(stem.buffer.samples, 1.0 / factor, stem.buffer.size());
  if (shifted.empty()) throw Error(ErrorCode::OutOfRange, "window too short to pitch shift");
  std::vector<float> out(stem.buffer.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = shifted[i % shifted.size()];
  return with_samples(stem, std::move(out));
}

Window time_pitch_shift(const Window& stem, double shift_s, int semitones, const ShiftOptions& shift_opts,
                        const PitchOptions& pitch_opts) {
  // Validate both before doing any work.
  if (!pitch_opts.test_mode && (std::abs(semitones) < 1 || std::abs(semitones) > 7)) {
    throw Error(ErrorCode::OutOfRange, "pitch shift of " + std::to_string(semitones) + " semitones");
  }
  return time_shift(pitch_shift(stem, semitones, pitch_opts), shift_s, shift_opts);
}

std::vector<float> make_noise(const Window& stem, std::uint64_t seed, double offset_db) {
  const double stem_lufs = loudness_with_fallback(stem.buffer);
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  AudioBuffer noise;
  noise.sample_rate = stem.buffer.sample_rate;
  noise.samples.resize(stem.buffer.size());
  for (float& v : noise.samples) v = static_cast<float>(gauss(rng));
  const double noise_lufs = loudness_with_fallback(noise);
  const double gain = std::pow(10.0, (stem_lufs + offset_db - noise_lufs) / 20.0);
  for (float& v : noise.samples) v = static_cast<float>(v * gain);
  return std::move(noise.samples);
}

Window add_noise(const Window& stem, std::uint64_t seed, double offset_db) {
  std::vector<float> noise = make_noise(stem, seed, offset_db);
  for (std::size_t i = 0; i < noise.size(); ++i) noise[i] += stem.buffer.samples[i];
  return with_samples(stem, std::move(noise));
}

std::vector<std::size_t> derange_by_song(const std::vector<std::string>& song_ids, std::uint64_t seed) {
  const std::size_t n = song_ids.size();
  if (n < 2) throw Error(ErrorCode::TooFewPairs, "need at least 2 pairs, got " + std::to_string(n));

  std::map<std::string, std::size_t> counts;
  for (const auto& id : song_ids) ++counts[id];
  for (const auto& [id, c] : counts) {
    if (2 * c > n) {
      throw Error(ErrorCode::InfeasibleDerangement,
                  "song '" + id + "' holds " + std::to_string(c) + " of " + std::to_string(n) + " pairs");
    }
  }

  Rng rng(seed);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  // Repair conflicts by swaps that fix both positions involved.
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (int pass = 0; pass < 16; ++pass) {
    bool clean = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (assignment_ok(song_ids, perm, i)) continue;
      clean = false;
      for (int attempt = 0; attempt < 64; ++attempt) {
        const std::size_t j = pick(rng);
        if (song_ids[perm[j]] != song_ids[i] && song_ids[perm[i]] != song_ids[j]) {
          std::swap(perm[i], perm[j]);
          break;
        }
      }
    }
    if (clean) return perm;
  }
  bool clean = true;
  for (std::size_t i = 0; i < n; ++i) clean = clean && assignment_ok(song_ids, perm, i);
  if (clean) return perm;
  return rotation_derangement(song_ids, rng);
}

std::vector<WindowPair> substitute_stems(const std::vector<WindowPair>& pairs, std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(pairs.size());
  for (const auto& p : pairs) ids.push_back(p.context.source_song_id);
  const auto perm = derange_by_song(ids, seed);

  std::vector<WindowPair> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& donor = pairs[perm[i]].stem;
    if (donor.buffer.size() != pairs[i].context.buffer.size() ||
        donor.buffer.sample_rate != pairs[i].context.buffer.sample_rate) {
      throw Error(ErrorCode::LengthMismatch, "pairs must share window length and rate");
    }
    out.push_back({pairs[i].context, donor, false});
  }
  return out;
}

Window external_transform(const Window& stem, const std::string& command, double timeout_s) {
  std::string cmd = command;
  const std::string placeholder = "{sample_rate}";
  for (auto pos = cmd.find(placeholder); pos != std::string::npos; pos = cmd.find(placeholder)) {
    cmd.replace(pos, placeholder.size(), std::to_string(stem.buffer.sample_rate));
  }

  const auto wav = encode_wav(stem.buffer, WavEncoding::Float32);
  std::vector<std::uint8_t> reply;
  Subprocess child(cmd, ErrorCode::CommandFailed);
  const auto deadline =
      Subprocess::Clock::now() + std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000.0));
  const int status = child.communicate(wav, reply, deadline);
  if (status != 0) {
    throw Error(ErrorCode::CommandFailed, "'" + cmd + "' exited with status " + std::to_string(status));
  }

  AudioBuffer decoded;
  try {
    decoded = decode_wav(reply);
  } catch (const Error& e) {
    throw Error(ErrorCode::CommandFailed, std::string("unreadable output: ") + e.what());
  }
  if (decoded.sample_rate != stem.buffer.sample_rate || decoded.size() != stem.buffer.size()) {
    throw Error(ErrorCode::LengthMismatch, "expected " + std::to_string(stem.buffer.size()) + " samples at " +
                                               std::to_string(stem.buffer.sample_rate) + " Hz, got " +
                                               std::to_string(decoded.size()) + " at " +
                                               std::to_string(decoded.sample_rate) + " Hz");
  }
  return with_samples(stem, std::move(decoded.samples));
}

}  // namespace apa
