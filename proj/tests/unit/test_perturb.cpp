#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "apa/dynamics.h"
#include "apa/perturb.h"
#include "oracles.h"
#include "test_util.h"

using namespace apa;
using Catch::Matchers::WithinAbs;
using test_util::code_of;
using test_util::noise;

namespace {

Window window_of(std::vector<float> samples, int rate = 48000, std::string song = "s") {
  Window w;
  w.buffer = {std::move(samples), rate};
  w.source_song_id = std::move(song);
  w.duration_s = w.buffer.duration_s();
  return w;
}

double snr_db(const std::vector<float>& ref, const std::vector<float>& test) {
  double sig = 0.0, err = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    sig += double(ref[i]) * ref[i];
    err += (double(test[i]) - ref[i]) * (double(test[i]) - ref[i]);
  }
  return err == 0.0 ? 1e9 : 10.0 * std::log10(sig / err);
}

std::size_t argmax_abs(const std::vector<float>& x) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i)
    if (std::abs(x[i]) > std::abs(x[best])) best = i;
  return best;
}

}  // namespace

TEST_CASE("transform table", "[perturb]") {
  const std::map<std::string, bool> invariant{{"TRUE", true}, {"NOISE", true}, {"TS", false},
                                              {"PS", false},  {"TPS", false},  {"SUBS", false}};
  REQUIRE(builtin_transform_labels().size() == 6);
  for (const auto& label : builtin_transform_labels()) {
    const Transform t = transform_by_label(label);
    REQUIRE(t.label == label);
    REQUIRE(t.invariant_class == invariant.at(label));
  }
  const Transform ts = transform_by_label("TS");
  REQUIRE(ts.shift_range.min_s == 0.2);
  REQUIRE(ts.shift_range.max_s == 3.0);
  REQUIRE(transform_by_label("PS").semitone_range.min == 1);
  REQUIRE(transform_by_label("PS").semitone_range.max == 7);
  REQUIRE(transform_by_label("NOISE").noise_offset_db == -20.0);
  REQUIRE(external_transform_spec("ENC", "cat").invariant_class);
  REQUIRE_FALSE(external_transform_spec("ENC", "cat", false).invariant_class);
  REQUIRE(code_of([] { transform_by_label("FOO"); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("time shift rotates the window", "[perturb]") {
  std::vector<float> impulse(5 * 48000, 0.0f);
  impulse[0] = 1.0f;
  const Window w = window_of(impulse);

  const Window one = time_shift(w, 1.0);
  REQUIRE(one.buffer.size() == w.buffer.size());
  REQUIRE(argmax_abs(one.buffer.samples) == 48000);
  REQUIRE(argmax_abs(time_shift(w, -1.0).buffer.samples) == 4 * 48000);

  REQUIRE(time_shift(w, 5.0).buffer == w.buffer);
  REQUIRE(time_shift(w, -5.0).buffer == w.buffer);

  const ShiftOptions enforce{TimeShiftRange{0.2, 3.0}};
  REQUIRE(code_of([&] { time_shift(w, 4.0, enforce); }) == ErrorCode::OutOfRange);
  REQUIRE(code_of([&] { time_shift(w, 0.1, enforce); }) == ErrorCode::OutOfRange);
  REQUIRE_NOTHROW(time_shift(w, 4.0));
  REQUIRE(code_of([&] { time_shift(w, 0.0); }) == ErrorCode::OutOfRange);
  REQUIRE(code_of([&] { time_shift(w, 6.0); }) == ErrorCode::OutOfRange);
}

TEST_CASE("time shift keeps samples and metadata", "[perturb][property]") {
  const Window w = window_of(noise(48000, 1), 48000, "song7");
  for (double s : {0.2, 0.5, -0.7, 0.999}) {
    const Window out = time_shift(w, s);
    REQUIRE(out.source_song_id == "song7");
    REQUIRE(out.buffer.sample_rate == 48000);
    auto a = w.buffer.samples, b = out.buffer.samples;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    REQUIRE(a == b);
  }
}

TEST_CASE("pitch shift moves a tone by the semitone ratio", "[perturb]") {
  const Window tone = window_of(oracle::sine(440.0, 0.5, 48000, 48000));
  const PitchOptions test_mode{true};

  const Window octave = pitch_shift(tone, 12, test_mode);
  REQUIRE(octave.buffer.size() == tone.buffer.size());
  REQUIRE_THAT(oracle::peak_frequency(octave.buffer.samples, 48000, 820, 940), WithinAbs(880.0, 1.0));

  const Window fifth = pitch_shift(tone, 7);
  REQUIRE_THAT(oracle::peak_frequency(fifth.buffer.samples, 48000, 600, 720), WithinAbs(659.26, 1.0));

  const Window down = pitch_shift(tone, -7);
  REQUIRE_THAT(oracle::peak_frequency(down.buffer.samples, 48000, 250, 350), WithinAbs(293.66, 1.0));

  REQUIRE(snr_db(tone.buffer.samples, pitch_shift(tone, 0, test_mode).buffer.samples) >= 60.0);
}

TEST_CASE("pitch shift range", "[perturb]") {
  const Window tone = window_of(oracle::sine(440.0, 0.5, 48000, 4800));
  REQUIRE(code_of([&] { pitch_shift(tone, 0); }) == ErrorCode::OutOfRange);
  REQUIRE(code_of([&] { pitch_shift(tone, 8); }) == ErrorCode::OutOfRange);
  REQUIRE(code_of([&] { pitch_shift(tone, -8); }) == ErrorCode::OutOfRange);
  for (int s : {-7, -1, 1, 7}) REQUIRE(pitch_shift(tone, s).buffer.size() == 4800);
}

TEST_CASE("time and pitch shift compose", "[perturb]") {
  const PitchOptions test_mode{true};
  const Window tone = window_of(oracle::sine(440.0, 0.5, 48000, 48000));
  REQUIRE(snr_db(tone.buffer.samples, time_pitch_shift(tone, 1.0, 0, {}, test_mode).buffer.samples) >= 60.0);

  const Window shifted = time_pitch_shift(tone, 0.25, 12, {}, test_mode);
  REQUIRE_THAT(oracle::peak_frequency(shifted.buffer.samples, 48000, 820, 940), WithinAbs(880.0, 1.0));
  REQUIRE(shifted.buffer == time_shift(pitch_shift(tone, 12, test_mode), 0.25).buffer);

  // An impulse riding on a quiet tone still lands at the rotation index.
  auto x = oracle::sine(440.0, 0.01, 48000, 48000);
  x[100] = 1.0f;
  const Window mixed = time_pitch_shift(window_of(x), 0.5, 0, {}, test_mode);
  REQUIRE(argmax_abs(mixed.buffer.samples) == 24100);

  const ShiftOptions enforce{TimeShiftRange{0.2, 3.0}};
  REQUIRE(code_of([&] { time_pitch_shift(tone, 0.1, 3, enforce); }) == ErrorCode::OutOfRange);
  REQUIRE(code_of([&] { time_pitch_shift(tone, 0.5, 9); }) == ErrorCode::OutOfRange);
}

TEST_CASE("noise is metered alone at the requested offset", "[perturb]") {
  const Window stem = window_of(loudness_normalize({noise(5 * 48000, 2, 0.5f), 48000}, -20.0).samples);
  REQUIRE_THAT(integrated_loudness(stem.buffer).lufs, WithinAbs(-20.0, 0.1));

  const auto n = make_noise(stem, 42);
  REQUIRE(n.size() == stem.buffer.size());
  REQUIRE_THAT(integrated_loudness({n, 48000}).lufs, WithinAbs(-40.0, 0.5));

  const Window noisy = add_noise(stem, 42);
  for (std::size_t i = 0; i < n.size(); ++i) REQUIRE(noisy.buffer.samples[i] == stem.buffer.samples[i] + n[i]);
  REQUIRE(add_noise(stem, 42).buffer == noisy.buffer);
  REQUIRE_FALSE(add_noise(stem, 43).buffer == noisy.buffer);

  const auto quieter = make_noise(stem, 42, -30.0);
  REQUIRE_THAT(integrated_loudness({quieter, 48000}).lufs, WithinAbs(-50.0, 0.5));

  REQUIRE(code_of([] { add_noise(window_of(std::vector<float>(48000, 0.0f)), 1); }) == ErrorCode::SilentAudio);
}

TEST_CASE("derangement examples", "[perturb]") {
  REQUIRE(derange_by_song({"a", "b"}, 5) == std::vector<std::size_t>{1, 0});
  REQUIRE(code_of([] { derange_by_song({"a", "a", "a"}, 1); }) == ErrorCode::InfeasibleDerangement);
  REQUIRE(code_of([] { derange_by_song({"a", "a", "a", "b"}, 1); }) == ErrorCode::InfeasibleDerangement);
  REQUIRE(code_of([] { derange_by_song({"a"}, 1); }) == ErrorCode::TooFewPairs);
  REQUIRE(code_of([] { derange_by_song({}, 1); }) == ErrorCode::TooFewPairs);
}

TEST_CASE("derangements never keep a song", "[perturb][property]") {
  for (unsigned songs : {2u, 3u, 7u}) {
    std::vector<std::string> ids;
    for (unsigned i = 0; i < 100; ++i) ids.push_back("song" + std::to_string(i % songs));
    std::set<std::vector<std::size_t>> seen;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto perm = derange_by_song(ids, seed);
      REQUIRE(perm.size() == ids.size());
      REQUIRE(std::set<std::size_t>(perm.begin(), perm.end()).size() == ids.size());
      for (std::size_t i = 0; i < perm.size(); ++i) {
        REQUIRE(perm[i] != i);
        REQUIRE(ids[perm[i]] != ids[i]);
      }
      REQUIRE(derange_by_song(ids, seed) == perm);
      seen.insert(perm);
    }
    REQUIRE(seen.size() > 1);
  }

  // Exactly half from one song is still feasible.
  const std::vector<std::string> half{"a", "a", "a", "b", "c", "d"};
  const auto perm = derange_by_song(half, 3);
  for (std::size_t i = 0; i < perm.size(); ++i) REQUIRE(half[perm[i]] != half[i]);
}

TEST_CASE("substitute_stems re-pairs across songs", "[perturb]") {
  std::vector<WindowPair> pairs;
  for (int i = 0; i < 12; ++i) {
    WindowPair p;
    const std::string song = "song" + std::to_string(i % 4);
    p.context = window_of(std::vector<float>(10, float(i)), 48000, song);
    p.stem = window_of(std::vector<float>(10, float(100 + i)), 48000, song);
    pairs.push_back(p);
  }
  const auto out = substitute_stems(pairs, 9);
  REQUIRE(out.size() == pairs.size());
  std::multiset<float> stems;
  for (std::size_t i = 0; i < out.size(); ++i) {
    REQUIRE_FALSE(out[i].matched);
    REQUIRE(out[i].context.buffer == pairs[i].context.buffer);
    REQUIRE(out[i].stem.source_song_id != out[i].context.source_song_id);
    stems.insert(out[i].stem.buffer.samples[0]);
  }
  REQUIRE(stems.size() == 12);
  REQUIRE(*stems.begin() == 100.0f);
  REQUIRE(*stems.rbegin() == 111.0f);

  std::vector<WindowPair> same(3, pairs[0]);
  REQUIRE(code_of([&] { substitute_stems(same, 1); }) == ErrorCode::InfeasibleDerangement);
  REQUIRE(code_of([&] { substitute_stems({pairs[0]}, 1); }) == ErrorCode::TooFewPairs);
}

TEST_CASE("external transform contract", "[perturb]") {
  const Window stem = window_of(noise(4800, 5));
  REQUIRE(external_transform(stem, "cat").buffer == stem.buffer);

  const auto other = std::filesystem::temp_directory_path() / "apa_test_perturb_other.wav";
  write_wav(other, {noise(100, 6), 48000});
  REQUIRE(code_of([&] { external_transform(stem, "cat >/dev/null; cat " + other.string()); }) ==
          ErrorCode::LengthMismatch);
  write_wav(other, {noise(4800, 6), 44100});
  REQUIRE(code_of([&] { external_transform(stem, "cat >/dev/null; cat " + other.string()); }) ==
          ErrorCode::LengthMismatch);
  std::filesystem::remove(other);

  REQUIRE(code_of([&] { external_transform(stem, "cat >/dev/null; exit 3"); }) == ErrorCode::CommandFailed);
  REQUIRE(code_of([&] { external_transform(stem, "test {sample_rate} = 44100 && cat"); }) ==
          ErrorCode::CommandFailed);
  REQUIRE(external_transform(stem, "test {sample_rate} = 48000 && cat").buffer == stem.buffer);
}
