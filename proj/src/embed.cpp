#include "apa/embed.h"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>

#include "apa/error.h"

namespace apa {

namespace logmel {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace logmel

namespace {

struct MelBand {
  std::size_t first_bin = 0;
  std::vector<float> weights;
};

std::vector<MelBand> build_filterbank(int sample_rate) {
  using namespace logmel;
  const int n_bins = kFrameSize / 2 + 1;
  const double mel_max = hz_to_mel(kMaxHz);
  std::vector<double> edges(kBands + 2);
  for (int i = 0; i < kBands + 2; ++i) edges[i] = mel_to_hz(mel_max * i / (kBands + 1));

  std::vector<MelBand> bands(kBands);
  for (int b = 0; b < kBands; ++b) {
    const double lo = edges[b], center = edges[b + 1], hi = edges[b + 2];
    MelBand band;
    bool started = false;
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / kFrameSize;
      double w = 0.0;
      if (f > lo && f <= center) w = (f - lo) / (center - lo);
      else if (f > center && f < hi) w = (hi - f) / (hi - center);
      if (w > 0.0) {
        if (!started) {
          band.first_bin = static_cast<std::size_t>(k);
          started = true;
        }
        band.weights.resize(static_cast<std::size_t>(k) - band.first_bin + 1, 0.0f);
        band.weights.back() = static_cast<float>(w);
      }
    }
    bands[static_cast<std::size_t>(b)] = std::move(band);
  }
  return bands;
}

const std::vector<MelBand>& filterbank() {
  static const std::vector<MelBand> bank = build_filterbank(kCanonicalRate);
  return bank;
}

const std::vector<float>& hann() {
  static const std::vector<float> w = [] {
    std::vector<float> v(logmel::kFrameSize);
    for (int i = 0; i < logmel::kFrameSize; ++i) {
      v[static_cast<std::size_t>(i)] =
          static_cast<float>(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / logmel::kFrameSize));
    }
    return v;
  }();
  return w;
}

}  // namespace

std::vector<float> builtin_logmel_embed(const AudioBuffer& buf) {
  using namespace logmel;
  if (buf.sample_rate != kCanonicalRate) {
    throw Error(ErrorCode::InvalidArgument, "builtin embedder expects 48 kHz input");
  }
  if (buf.size() < static_cast<std::size_t>(kFrameSize)) {
    throw Error(ErrorCode::TooShort, "input shorter than one 2048-sample frame");
  }
  const std::size_t n_frames = (buf.size() - kFrameSize) / kHop + 1;
  const auto& bank = filterbank();
  const auto& window = hann();

  thread_local Eigen::FFT<float> fft = [] {
    Eigen::FFT<float> f;
    f.SetFlag(Eigen::FFT<float>::HalfSpectrum);
    return f;
  }();
  std::vector<float> frame(kFrameSize);
  std::vector<std::complex<float>> spectrum;
  std::vector<double> power(kFrameSize / 2 + 1);

  // Sums are taken relative to the first frame's value (shifted data), which
  // keeps the variance well conditioned and exact for constant bands.
  std::vector<double> first(kBands), sum(kBands, 0.0), sum_sq(kBands, 0.0);

  for (std::size_t t = 0; t < n_frames; ++t) {
    const float* src = buf.samples.data() + t * kHop;
    for (int i = 0; i < kFrameSize; ++i) frame[static_cast<std::size_t>(i)] = src[i] * window[static_cast<std::size_t>(i)];
    fft.fwd(spectrum, frame);
    for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(spectrum[k]);

    for (int b = 0; b < kBands; ++b) {
      const auto& band = bank[static_cast<std::size_t>(b)];
      double e = 0.0;
      for (std::size_t j = 0; j < band.weights.size(); ++j) e += band.weights[j] * power[band.first_bin + j];
      const double v = std::log(std::max(e, kLogFloor));
      const auto bi = static_cast<std::size_t>(b);
      if (t == 0) first[bi] = v;
      const double d = v - first[bi];
      sum[bi] += d;
      sum_sq[bi] += d * d;
    }
  }

  std::vector<float> out(kDim);
  const auto n = static_cast<double>(n_frames);
  for (std::size_t b = 0; b < static_cast<std::size_t>(kBands); ++b) {
    const double mean_shift = sum[b] / n;
    const double var = std::max(0.0, sum_sq[b] / n - mean_shift * mean_shift);
    out[b] = static_cast<float>(first[b] + mean_shift);
    out[b + kBands] = static_cast<float>(std::sqrt(var));
  }
  return out;
}

EmbeddingMatrix BuiltinLogMelEmbedder::embed_batch(std::span<const AudioBuffer> windows) {
  EmbeddingMatrix out(static_cast<Eigen::Index>(windows.size()), spec_.dim);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto v = builtin_logmel_embed(windows[i]);
    out.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXf>(v.data(), spec_.dim);
  }
  return out;
}

std::vector<float> embed_window(const AudioBuffer& mixdown, Embedder& embedder) {
  const auto& spec = embedder.spec();
  if (mixdown.sample_rate != spec.input_rate) {
    throw Error(ErrorCode::InvalidArgument, "mixdown at " + std::to_string(mixdown.sample_rate) +
                                                " Hz, embedder expects " + std::to_string(spec.input_rate));
  }
  EmbeddingMatrix m = embedder.embed_batch(std::span<const AudioBuffer>(&mixdown, 1));
  if (m.rows() != 1 || m.cols() != spec.dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "expected 1x" + std::to_string(spec.dim) + ", got " + std::to_string(m.rows()) + "x" +
                    std::to_string(m.cols()));
  }
  if (!m.allFinite()) throw Error(ErrorCode::NumericalFailure, "non-finite embedding");
  return {m.data(), m.data() + m.cols()};
}

std::vector<float> time_average(std::span<const float> frames, int dim) {
  if (dim <= 0 || frames.empty() || frames.size() % static_cast<std::size_t>(dim) != 0) {
    throw Error(ErrorCode::DimensionMismatch, "frame block is not a whole number of vectors");
  }
  const std::size_t n = frames.size() / static_cast<std::size_t>(dim);
  std::vector<double> acc(static_cast<std::size_t>(dim), 0.0);
  for (std::size_t f = 0; f < n; ++f) {
    for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += frames[f * acc.size() + d];
  }
  std::vector<float> out(acc.size());
  for (std::size_t d = 0; d < acc.size(); ++d) out[d] = static_cast<float>(acc[d] / static_cast<double>(n));
  return out;
}

}  // namespace apa
