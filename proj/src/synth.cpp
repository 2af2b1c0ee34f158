#include "apa/synth.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "apa/error.h"
#include "apa/rng.h"

namespace apa {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Triads of the major scale, in semitones above the tonic.
constexpr std::array<std::array<int, 3>, 6> kTriads{{
    {0, 4, 7},    // I
    {2, 5, 9},    // ii
    {4, 7, 11},   // iii
    {5, 9, 12},   // IV
    {7, 11, 14},  // V
    {9, 12, 16},  // vi
}};

double midi_hz(double midi) { return 440.0 * std::pow(2.0, (midi - 69.0) / 12.0); }

struct Tone {
  double start_s = 0.0;
  double freq = 0.0;
  double amp = 0.0;
  int harmonics = 1;
  double rolloff = 0.5;
  double decay_s = 0.3;
};

void add_tone(std::vector<float>& out, int rate, const Tone& t) {
  const auto start = static_cast<std::size_t>(t.start_s * rate);
  const auto length = static_cast<std::size_t>(6.0 * t.decay_s * rate);
  const std::size_t end = std::min(out.size(), start + length);
  for (std::size_t n = start; n < end; ++n) {
    const double time = static_cast<double>(n - start) / rate;
    const double env = std::min(1.0, time / 0.005) * std::exp(-time / t.decay_s);
    double v = 0.0;
    double a = 1.0;
    for (int h = 1; h <= t.harmonics; ++h, a *= t.rolloff) {
      if (t.freq * h >= 0.45 * rate) break;
      v += a * std::sin(kTwoPi * t.freq * h * time);
    }
    out[n] += static_cast<float>(t.amp * env * v);
  }
}

void add_kick(std::vector<float>& out, int rate, double start_s, double amp) {
  const auto start = static_cast<std::size_t>(start_s * rate);
  const std::size_t end = std::min(out.size(), start + static_cast<std::size_t>(0.5 * rate));
  double phase = 0.0;
  for (std::size_t n = start; n < end; ++n) {
    const double time = static_cast<double>(n - start) / rate;
    const double f = 45.0 + 75.0 * std::exp(-time / 0.04);
    phase += kTwoPi * f / rate;
    out[n] += static_cast<float>(amp * std::exp(-time / 0.12) * std::sin(phase));
  }
}

void add_noise_hit(std::vector<float>& out, int rate, double start_s, double amp, double decay_s, bool bright,
                   Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto start = static_cast<std::size_t>(start_s * rate);
  const std::size_t end = std::min(out.size(), start + static_cast<std::size_t>(6.0 * decay_s * rate));
  double prev = 0.0;
  for (std::size_t n = start; n < end; ++n) {
    const double time = static_cast<double>(n - start) / rate;
    const double w = gauss(rng);
    const double v = bright ? (w - prev) * 0.5 : w;  // first difference tilts toward highs
    prev = w;
    out[n] += static_cast<float>(amp * std::exp(-time / decay_s) * v);
  }
}

void scale_peak(std::vector<float>& x, double peak) {
  float m = 0.0f;
  for (float v : x) m = std::max(m, std::abs(v));
  if (m == 0.0f) return;
  const double g = peak / m;
  for (float& v : x) v = static_cast<float>(v * g);
}

}  // namespace

SynthSong synthesize_song(std::size_t index, const SynthOptions& opts) {
  Rng rng = make_rng(opts.seed, "synth", index);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  SynthSong song;
  char id[32];
  std::snprintf(id, sizeof(id), "song%03zu", index);
  song.id = id;
  song.root_midi = 40 + static_cast<int>(rng() % 24);
  song.bpm = uniform(84.0, 144.0);
  song.style = index % 3 == 2 ? StemStyle::Clicks : (rng() % 2 == 0 ? StemStyle::Bass : StemStyle::Lead);

  const int rate = opts.sample_rate;
  const auto n = static_cast<std::size_t>(opts.seconds * rate);
  const double beat = 60.0 / song.bpm;
  const auto n_beats = static_cast<std::size_t>(opts.seconds / beat) + 1;

  std::array<std::size_t, 4> progression{};
  for (auto& c : progression) c = rng() % kTriads.size();
  progression[0] = 0;
  auto chord_at = [&](std::size_t beat_index) { return kTriads[progression[(beat_index / 4) % 4]]; };

  // Context: sustained chords re-struck on every beat.
  std::vector<float> keys(n, 0.0f);
  const int key_harmonics = 3 + static_cast<int>(rng() % 4);
  const double key_rolloff = uniform(0.35, 0.7);
  for (std::size_t b = 0; b < n_beats; ++b) {
    const auto chord = chord_at(b);
    for (int interval : chord) {
      add_tone(keys, rate,
               {b * beat, midi_hz(song.root_midi + 12 + interval), 0.3, key_harmonics, key_rolloff, 0.7 * beat});
    }
  }

  // Context: kick, snare, hats and a hiss bed.
  std::vector<float> drums(n, 0.0f);
  const double hat_level = uniform(0.08, 0.25);
  for (std::size_t b = 0; b < n_beats; ++b) {
    const double t = b * beat;
    if (b % 2 == 0) add_kick(drums, rate, t, 0.9);
    else add_noise_hit(drums, rate, t, 0.35, 0.07, false, rng);
    add_noise_hit(drums, rate, t, hat_level, 0.03, true, rng);
    add_noise_hit(drums, rate, t + beat / 2, hat_level * 0.7, 0.03, true, rng);
  }
  {
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double bed = std::pow(10.0, uniform(-42.0, -28.0) / 20.0);
    for (float& v : drums) v += static_cast<float>(bed * gauss(rng));
  }

  // Stem: follows the song's harmony on an eighth-note grid.
  std::vector<float> stem(n, 0.0f);
  const double click_hz = uniform(1800.0, 4500.0);
  for (std::size_t e = 0; e < 2 * n_beats; ++e) {
    const double t = e * beat / 2;
    const auto chord = chord_at(e / 2);
    switch (song.style) {
      case StemStyle::Bass: {
        const int interval = e % 2 == 0 ? chord[0] : chord[2];
        add_tone(stem, rate, {t, midi_hz(song.root_midi - 12 + interval), 0.6, 4, 0.5, 0.4 * beat});
        break;
      }
      case StemStyle::Lead: {
        const int interval = chord[e % 3];
        add_tone(stem, rate, {t, midi_hz(song.root_midi + 24 + interval), 0.4, 3, 0.4, 0.35 * beat});
        break;
      }
      case StemStyle::Clicks: {
        add_tone(stem, rate, {t, click_hz, e % 2 == 0 ? 0.8 : 0.4, 2, 0.3, 0.012});
        add_tone(stem, rate, {t + beat / 4, click_hz * 1.5, 0.25, 1, 0.3, 0.008});
        break;
      }
    }
  }

  scale_peak(keys, 0.45);
  scale_peak(drums, 0.45);
  scale_peak(stem, 0.8);
  song.keys = {std::move(keys), rate};
  song.drums = {std::move(drums), rate};
  song.stem = {std::move(stem), rate};
  return song;
}

Corpus synthesize_corpus(const SynthOptions& opts) {
  std::vector<SongAudio> songs;
  for (std::size_t i = 0; i < opts.songs; ++i) {
    SynthSong s = synthesize_song(i, opts);
    SongAudio a;
    a.id = s.id;
    a.context = s.keys;
    for (std::size_t k = 0; k < a.context.size(); ++k) a.context.samples[k] += s.drums.samples[k];
    a.stem = std::move(s.stem);
    songs.push_back(std::move(a));
  }
  return make_corpus(std::move(songs), opts.sample_rate);
}

std::filesystem::path generate_corpus(const std::filesystem::path& dir, const SynthOptions& opts) {
  std::filesystem::create_directories(dir);
  nlohmann::json songs = nlohmann::json::array();
  for (std::size_t i = 0; i < opts.songs; ++i) {
    const SynthSong s = synthesize_song(i, opts);
    const std::string keys = s.id + "_keys.wav";
    const std::string drums = s.id + "_drums.wav";
    const std::string stem = s.id + "_stem.wav";
    write_wav(dir / keys, s.keys, opts.encoding);
    write_wav(dir / drums, s.drums, opts.encoding);
    write_wav(dir / stem, s.stem, opts.encoding);
    songs.push_back({{"id", s.id}, {"context", {keys, drums}}, {"stem", stem}});
  }
  const nlohmann::json manifest{{"version", kManifestVersion}, {"sample_rate", opts.sample_rate}, {"songs", songs}};
  const auto path = dir / "manifest.json";
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << manifest.dump(2) << "\n";
  return path;
}

}  // namespace apa
