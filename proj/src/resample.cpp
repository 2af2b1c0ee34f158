#include <algorithm>
#include <cmath>
#include <numbers>

#include "apa/audio_io.h"
#include "apa/error.h"

namespace apa {

namespace {

// Kernel half-width in zero crossings; 2 * kZeroCrossings taps at unity ratio.
constexpr int kZeroCrossings = 32;
constexpr int kTableResolution = 512;
constexpr double kKaiserBeta = 8.6;
constexpr double kRolloff = 0.95;

/// Windowed sinc sampled at kTableResolution points per zero crossing.
class SincTable {
 public:
  SincTable() : table_(kZeroCrossings * kTableResolution + 2, 0.0f) {
    const double norm = std::cyl_bessel_i(0.0, kKaiserBeta);
    for (std::size_t i = 0; i + 1 < table_.size(); ++i) {
      double x = static_cast<double>(i) / kTableResolution;
      double r = x / kZeroCrossings;
      if (r > 1.0) break;
      double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      double w = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - r * r)) / norm;
      table_[i] = static_cast<float>(sinc * w);
    }
  }

  /// @p pos: distance in table steps (zero crossings * kTableResolution), non-negative.
  double at(double pos) const {
    auto idx = static_cast<std::size_t>(pos);
    if (idx + 1 >= table_.size()) return 0.0;
    double frac = pos - static_cast<double>(idx);
    return table_[idx] + frac * (table_[idx + 1] - table_[idx]);
  }

 private:
  std::vector<float> table_;
};

const SincTable& sinc_table() {
  static const SincTable table;
  return table;
}

}  // namespace

std::vector<float> resample_ratio(std::span<const float> input, double ratio, std::size_t max_output) {
  if (!(ratio > 0.0) || !std::isfinite(ratio)) {
    throw Error(ErrorCode::InvalidArgument, "resample ratio must be positive");
  }
  if (ratio == 1.0) return {input.begin(), input.end()};

  const auto n_in = static_cast<std::ptrdiff_t>(input.size());
  const auto n_out =
      std::min(max_output, static_cast<std::size_t>(std::llround(static_cast<double>(input.size()) * ratio)));
  std::vector<float> out(n_out);
  if (n_in == 0) return out;

  const SincTable& table = sinc_table();
  const double cutoff = std::min(1.0, ratio) * kRolloff;
  const double half_width = kZeroCrossings / cutoff;
  const double scale = cutoff * kTableResolution;

  for (std::size_t j = 0; j < n_out; ++j) {
    const double t = static_cast<double>(j) / ratio;
    auto lo = static_cast<std::ptrdiff_t>(std::ceil(t - half_width));
    auto hi = static_cast<std::ptrdiff_t>(std::floor(t + half_width));
    lo = std::max<std::ptrdiff_t>(lo, 0);
    hi = std::min<std::ptrdiff_t>(hi, n_in - 1);
    double acc = 0.0;
    double pos = (t - static_cast<double>(lo)) * scale;
    for (std::ptrdiff_t i = lo; i <= hi; ++i, pos -= scale) {
      acc += input[static_cast<std::size_t>(i)] * table.at(std::abs(pos));
    }
    out[j] = static_cast<float>(cutoff * acc);
  }
  return out;
}

AudioBuffer resample(const AudioBuffer& buf, int target_rate) {
  if (target_rate <= 0) throw Error(ErrorCode::InvalidArgument, "target rate must be positive");
  if (buf.sample_rate <= 0) throw Error(ErrorCode::InvalidArgument, "source rate must be positive");
  if (target_rate == buf.sample_rate) return buf;

  AudioBuffer out;
  out.sample_rate = target_rate;
  out.samples = resample_ratio(buf.samples, static_cast<double>(target_rate) / buf.sample_rate);
  // Pin the length to integer arithmetic so it never depends on ratio rounding.
  const auto expected = static_cast<std::size_t>(
      std::llround(static_cast<double>(buf.size()) * target_rate / buf.sample_rate));
  out.samples.resize(expected, 0.0f);
  return out;
}

std::size_t samples_for(double duration_s, int sample_rate) {
  return static_cast<std::size_t>(std::llround(duration_s * sample_rate));
}

Window extract_window(const AudioBuffer& buf, double offset_s, double duration_s, std::string source_song_id) {
  if (!(duration_s > 0.0) || !(offset_s >= 0.0)) {
    throw Error(ErrorCode::OutOfRange, "window offset must be >= 0 and duration > 0");
  }
  const std::size_t start = samples_for(offset_s, buf.sample_rate);
  const std::size_t count = samples_for(duration_s, buf.sample_rate);
  if (start > buf.size() || count > buf.size() - start) {
    throw Error(ErrorCode::OutOfRange, "window [" + std::to_string(offset_s) + ", " +
                                           std::to_string(offset_s + duration_s) + ") s exceeds buffer of " +
                                           std::to_string(buf.duration_s()) + " s");
  }
  Window w;
  w.buffer.sample_rate = buf.sample_rate;
  w.buffer.samples.assign(buf.samples.begin() + static_cast<std::ptrdiff_t>(start),
                          buf.samples.begin() + static_cast<std::ptrdiff_t>(start + count));
  w.source_song_id = std::move(source_song_id);
  w.source_offset_s = offset_s;
  w.duration_s = duration_s;
  return w;
}

}  // namespace apa
