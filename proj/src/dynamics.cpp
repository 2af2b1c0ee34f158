#include "apa/dynamics.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>

namespace apa {

namespace {

struct Biquad {
  std::array<double, 3> b{};
  std::array<double, 3> a{};  // a[0] == 1
};

// ITU-R BS.1770-4 table coefficients at 48 kHz.
constexpr Biquad kShelf48k{{1.53512485958697, -2.69169618940638, 1.19839281085285},
                           {1.0, -1.69065929318241, 0.73248077421585}};
constexpr Biquad kHighPass48k{{1.0, -2.0, 1.0}, {1.0, -1.99004745483398, 0.99007225036621}};

// Analog prototype parameters that reproduce the 48 kHz table at other rates.
Biquad shelf_for_rate(int rate) {
  if (rate == 48000) return kShelf48k;
  const double f0 = 1681.974450955533;
  const double gain_db = 3.999843853973347;
  const double q = 0.7071752369554196;
  const double k = std::tan(std::numbers::pi * f0 / rate);
  const double vh = std::pow(10.0, gain_db / 20.0);
  const double vb = std::pow(vh, 0.4996667741545416);
  const double a0 = 1.0 + k / q + k * k;
  return {{(vh + vb * k / q + k * k) / a0, 2.0 * (k * k - vh) / a0, (vh - vb * k / q + k * k) / a0},
          {1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0}};
}

Biquad highpass_for_rate(int rate) {
  if (rate == 48000) return kHighPass48k;
  const double f0 = 38.13547087602444;
  const double q = 0.5003270373238773;
  const double k = std::tan(std::numbers::pi * f0 / rate);
  const double a0 = 1.0 + k / q + k * k;
  return {{1.0, -2.0, 1.0}, {1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0}};
}

void run_biquad(const Biquad& f, std::vector<double>& x) {
  double z1 = 0.0, z2 = 0.0;
  for (double& v : x) {
    const double in = v;
    const double out = f.b[0] * in + z1;
    z1 = f.b[1] * in - f.a[1] * out + z2;
    z2 = f.b[2] * in - f.a[2] * out;
    v = out;
  }
}

std::vector<double> k_weighted(const AudioBuffer& buf) {
  std::vector<double> x(buf.samples.begin(), buf.samples.end());
  run_biquad(shelf_for_rate(buf.sample_rate), x);
  run_biquad(highpass_for_rate(buf.sample_rate), x);
  return x;
}

double to_lufs(double mean_square) { return -0.691 + 10.0 * std::log10(mean_square); }

bool is_silent(std::span<const float> x) {
  return std::all_of(x.begin(), x.end(), [](float v) { return v == 0.0f; });
}

std::vector<float> scaled(std::span<const float> x, double gain) {
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>(x[i] * gain);
  return out;
}

}  // namespace

MixRegime mix_regime(std::string_view label) {
  if (label == "PP") return {"PP", RegimeKind::Peak, 0.0, 0.0, true};
  if (label == "P0") return {"P0", RegimeKind::Peak, -3.0, -3.0, false};
  if (label == "P1") return {"P1", RegimeKind::Peak, -3.0, -6.0, false};
  if (label == "P2") return {"P2", RegimeKind::Peak, -3.0, -9.0, false};
  if (label == "L0") return {"L0", RegimeKind::Loudness, -20.0, -20.0, false};
  if (label == "L1") return {"L1", RegimeKind::Loudness, -20.0, -23.0, false};
  if (label == "L2") return {"L2", RegimeKind::Loudness, -20.0, -26.0, false};
  throw Error(ErrorCode::InvalidArgument, "unknown mix regime '" + std::string(label) + "'");
}

const std::vector<std::string>& regime_labels() {
  static const std::vector<std::string> labels{"PP", "P0", "P1", "P2", "L0", "L1", "L2"};
  return labels;
}

double peak_of(std::span<const float> samples) {
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "peak of empty sequence");
  float peak = 0.0f;
  for (float v : samples) peak = std::max(peak, std::abs(v));
  if (peak == 0.0f) throw Error(ErrorCode::SilentAudio, "all samples are zero");
  return 20.0 * std::log10(static_cast<double>(peak));
}

std::vector<float> peak_normalize(std::span<const float> samples, double target_db) {
  const double peak_db = peak_of(samples);
  if (peak_db == target_db) return {samples.begin(), samples.end()};
  return scaled(samples, std::pow(10.0, (target_db - peak_db) / 20.0));
}

LoudnessReading integrated_loudness(const AudioBuffer& buf) {
  const auto block = static_cast<std::size_t>(std::llround(0.4 * buf.sample_rate));
  const auto step = static_cast<std::size_t>(std::llround(0.1 * buf.sample_rate));
  if (buf.size() < block || block == 0) throw Error(ErrorCode::TooShort, "loudness needs at least 400 ms");

  const std::vector<double> y = k_weighted(buf);
  std::vector<double> prefix(y.size() + 1, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) prefix[i + 1] = prefix[i] + y[i] * y[i];

  const std::size_t n_blocks = (y.size() - block) / step + 1;
  std::vector<double> energies;
  energies.reserve(n_blocks);
  for (std::size_t j = 0; j < n_blocks; ++j) {
    const std::size_t start = j * step;
    energies.push_back((prefix[start + block] - prefix[start]) / static_cast<double>(block));
  }

  constexpr double kAbsoluteGate = -70.0;
  double sum = 0.0;
  std::size_t count = 0;
  for (double z : energies) {
    if (z > 0.0 && to_lufs(z) > kAbsoluteGate) {
      sum += z;
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorCode::SilentAudio, "no block above the absolute gate");

  const double relative_gate = to_lufs(sum / static_cast<double>(count)) - 10.0;
  sum = 0.0;
  count = 0;
  for (double z : energies) {
    if (z > 0.0) {
      const double l = to_lufs(z);
      if (l > kAbsoluteGate && l > relative_gate) {
        sum += z;
        ++count;
      }
    }
  }
  return {to_lufs(sum / static_cast<double>(count)), count};
}

double ungated_loudness(const AudioBuffer& buf) {
  if (buf.empty() || is_silent(buf.samples)) throw Error(ErrorCode::SilentAudio, "digital silence");
  const std::vector<double> y = k_weighted(buf);
  double sum = 0.0;
  for (double v : y) sum += v * v;
  if (sum <= 0.0) throw Error(ErrorCode::SilentAudio, "zero K-weighted energy");
  return to_lufs(sum / static_cast<double>(y.size()));
}

double loudness_with_fallback(const AudioBuffer& buf, bool* fell_back) {
  if (fell_back) *fell_back = false;
  try {
    return integrated_loudness(buf).lufs;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SilentAudio || is_silent(buf.samples)) throw;
  }
  if (fell_back) *fell_back = true;
  return ungated_loudness(buf);
}

AudioBuffer loudness_normalize(const AudioBuffer& buf, double target_lufs) {
  const double current = integrated_loudness(buf).lufs;
  AudioBuffer out;
  out.sample_rate = buf.sample_rate;
  out.samples = scaled(buf.samples, std::pow(10.0, (target_lufs - current) / 20.0));
  return out;
}

std::vector<float> limit(std::span<const float> samples, int sample_rate, const LimiterConfig& cfg) {
  const double ceiling = cfg.ceiling;
  const bool needs_gain = std::any_of(samples.begin(), samples.end(),
                                      [&](float v) { return std::abs(v) > cfg.ceiling; });
  if (!needs_gain) return {samples.begin(), samples.end()};

  const auto n = static_cast<std::ptrdiff_t>(samples.size());
  const auto lookahead = std::max<std::ptrdiff_t>(1, std::llround(cfg.lookahead_s * sample_rate));

  std::vector<double> required(samples.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double a = std::abs(static_cast<double>(samples[static_cast<std::size_t>(i)]));
    required[static_cast<std::size_t>(i)] = a > ceiling ? ceiling / a : 1.0;
  }

  // hold[k + L] = min(required[max(0,k) .. min(n-1, k+L)]) for k in [-L, n).
  std::vector<double> hold(static_cast<std::size_t>(n + lookahead));
  std::deque<std::ptrdiff_t> window;  // indices with increasing required values
  std::ptrdiff_t next = 0;
  for (std::ptrdiff_t k = -lookahead; k < n; ++k) {
    const std::ptrdiff_t last = std::min(n - 1, k + lookahead);
    for (; next <= last; ++next) {
      while (!window.empty() && required[static_cast<std::size_t>(window.back())] >=
                                    required[static_cast<std::size_t>(next)]) {
        window.pop_back();
      }
      window.push_back(next);
    }
    while (window.front() < std::max<std::ptrdiff_t>(0, k)) window.pop_front();
    hold[static_cast<std::size_t>(k + lookahead)] = required[static_cast<std::size_t>(window.front())];
  }

  // Moving average of hold over [i-L, i]; each term covers sample i, so the
  // average never exceeds required[i].
  std::vector<double> gain(samples.size());
  double acc = 0.0;
  for (std::ptrdiff_t k = 0; k <= lookahead; ++k) acc += hold[static_cast<std::size_t>(k)];
  const double inv = 1.0 / static_cast<double>(lookahead + 1);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (i > 0) {
      acc += hold[static_cast<std::size_t>(i + lookahead)] - hold[static_cast<std::size_t>(i - 1)];
    }
    gain[static_cast<std::size_t>(i)] = std::min(1.0, acc * inv);
  }

  const double release = 1.0 - std::exp(-1.0 / (cfg.release_s * sample_rate));
  std::vector<float> out(samples.size());
  double g = gain.empty() ? 1.0 : gain[0];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i > 0) g = std::min(gain[i], g + release * (1.0 - g));
    const double y = std::clamp(samples[i] * g, -ceiling, ceiling);
    out[i] = static_cast<float>(y);
  }
  return out;
}

NormalizedParts normalize_parts(const WindowPair& pair, const MixRegime& regime) {
  const auto& ctx = pair.context.buffer;
  const auto& stem = pair.stem.buffer;
  if (ctx.size() != stem.size() || ctx.sample_rate != stem.sample_rate) {
    throw Error(ErrorCode::LengthMismatch, "context and stem windows differ in length or rate");
  }

  NormalizedParts parts;
  if (regime.preserve_relative) {
    parts.context = ctx.samples;
    parts.stem = stem.samples;
    return parts;
  }

  if (is_silent(ctx.samples)) throw SilentPartError(PairSide::Context);
  if (is_silent(stem.samples)) throw SilentPartError(PairSide::Stem);

  if (regime.kind == RegimeKind::Peak) {
    parts.context = peak_normalize(ctx.samples, regime.context_target);
    parts.stem = peak_normalize(stem.samples, regime.stem_target);
    return parts;
  }

  const double ctx_lufs = loudness_with_fallback(ctx, &parts.context_fallback);
  const double stem_lufs = loudness_with_fallback(stem, &parts.stem_fallback);
  parts.context = scaled(ctx.samples, std::pow(10.0, (regime.context_target - ctx_lufs) / 20.0));
  parts.stem = scaled(stem.samples, std::pow(10.0, (regime.stem_target - stem_lufs) / 20.0));
  return parts;
}

MixResult mix_detailed(const WindowPair& pair, const MixRegime& regime, const MixOptions& opts) {
  NormalizedParts parts = normalize_parts(pair, regime);
  const int rate = pair.context.buffer.sample_rate;

  std::vector<float> sum(parts.context.size());
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = parts.context[i] + parts.stem[i];

  if (regime.preserve_relative && !is_silent(sum)) {
    double target_db = peak_of(sum);
    if (opts.pp_reference == PeakReference::LouderInput) {
      double ref = -std::numeric_limits<double>::infinity();
      if (!is_silent(parts.context)) ref = std::max(ref, peak_of(parts.context));
      if (!is_silent(parts.stem)) ref = std::max(ref, peak_of(parts.stem));
      target_db = ref;
    }
    sum = peak_normalize(sum, target_db);
  }

  MixResult result;
  result.mix.sample_rate = rate;
  result.mix.samples = limit(sum, rate, opts.limiter);
  result.context_fallback = parts.context_fallback;
  result.stem_fallback = parts.stem_fallback;
  return result;
}

AudioBuffer mix(const WindowPair& pair, const MixRegime& regime, const MixOptions& opts) {
  return mix_detailed(pair, regime, opts).mix;
}

}  // namespace apa
