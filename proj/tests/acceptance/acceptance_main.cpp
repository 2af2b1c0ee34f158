/// @file acceptance_main.cpp
/// @brief Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <sys/wait.h>

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "apa/bridge.h"
#include "apa/dynamics.h"
#include "apa/pipeline.h"
#include "apa/stats.h"
#include "apa/synth.h"
#include "oracles.h"

using namespace apa;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

/// Runs one criterion; @p body returns a detail string and sets @p ok.
void criterion(const std::string& name, const std::function<std::string(bool&)>& body) {
  bool ok = true;
  std::string detail;
  try {
    detail = body(ok);
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("exception: ") + e.what();
  }
  if (!ok) ++failures;
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

GaussianStats gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov) { return {std::move(mean), std::move(cov), 100}; }

GaussianStats random_gaussian(int d, std::mt19937& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(d, d);
  Eigen::VectorXd mu(d);
  for (int i = 0; i < d; ++i) {
    mu(i) = g(rng);
    for (int j = 0; j < d; ++j) a(i, j) = g(rng);
  }
  return gaussian(mu, a * a.transpose() / d + 0.01 * Eigen::MatrixXd::Identity(d, d));
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

std::string fad_oracle(bool& ok) {
  const auto start = Clock::now();
  const GaussianStats a1 = gaussian(vec({0.0}), Eigen::MatrixXd::Ones(1, 1));
  const GaussianStats b1 = gaussian(vec({1.0}), Eigen::MatrixXd::Ones(1, 1));
  const GaussianStats a2 = gaussian(vec({0, 0}), vec({1, 4}).asDiagonal());
  const GaussianStats b2 = gaussian(vec({0, 0}), vec({4, 1}).asDiagonal());
  const double same = frechet_distance(a2, gaussian(a2.mean, a2.cov));
  const double shifted = frechet_distance(a1, b1);
  const double diag = frechet_distance(a2, b2);
  ok = std::abs(same) <= 1e-8 && std::abs(shifted - 1.0) <= 1e-9 && std::abs(diag - 2.0) <= 1e-8;

  std::mt19937 rng(2024);
  double worst_sym = 0.0, worst_tri = -1e300;
  for (int i = 0; i < 200; ++i) {
    const GaussianStats a = random_gaussian(8, rng), b = random_gaussian(8, rng), c = random_gaussian(8, rng);
    const double ab = frechet_distance(a, b);
    worst_sym = std::max(worst_sym, std::abs(ab - frechet_distance(b, a)));
    worst_tri = std::max(worst_tri, std::sqrt(frechet_distance(a, c)) - std::sqrt(ab) -
                                        std::sqrt(frechet_distance(b, c)));
  }
  const double elapsed = seconds_since(start);
  ok = ok && worst_sym <= 1e-6 && worst_tri <= 1e-6 && elapsed < 5.0;
  return fmt("identical %.3g, 1-D %.12f, diagonal %.12f, max asymmetry %.3g, max triangle excess %.3g, %.2f s", same,
             shifted, diag, worst_sym, worst_tri, elapsed);
}

std::string apa_endpoints(bool& ok) {
  const GaussianStats r = gaussian(vec({0.0, 0.0}), Eigen::MatrixXd::Identity(2, 2));
  const GaussianStats rp = gaussian(vec({2.0, 0.0}), Eigen::MatrixXd::Identity(2, 2));
  const GaussianStats mid = gaussian(vec({1.0, 3.0}), Eigen::MatrixXd::Identity(2, 2));
  const GaussianStats beyond = gaussian(vec({-1.0, 0.0}), Eigen::MatrixXd::Identity(2, 2));
  const ApaResult top = apa_score(r, r, rp), bottom = apa_score(rp, r, rp), half = apa_score(mid, r, rp);
  const ApaResult clipped = apa_score(beyond, r, rp);
  ok = top.apa == 1.0 && bottom.apa == 0.0 && half.apa == 0.5 && !top.clipped && !bottom.clipped &&
       clipped.clipped && clipped.apa == 1.0 && clipped.apa_raw > 1.0;
  return fmt("c=r %.17g, c=r' %.17g, equidistant %.17g, clipped raw %.6g -> %.6g flag %d", top.apa, bottom.apa,
             half.apa, clipped.apa_raw, clipped.apa, clipped.clipped ? 1 : 0);
}

std::string bs1770(bool& ok) {
  AudioBuffer sine{oracle::sine(997.0, 1.0, 48000, 10 * 48000), 48000};
  const double lufs = integrated_loudness(sine).lufs;
  for (auto& v : sine.samples) v *= 0.5f;
  const double halved = integrated_loudness(sine).lufs;
  const double delta = halved - lufs;
  ok = std::abs(lufs + 3.01) <= 0.1 && std::abs(delta + 6.02) <= 0.05;
  return fmt("997 Hz 0 dBFS %.4f LUFS, -6.02 dB input -> %.4f LU", lufs, delta);
}

/// Random tonal context and noisy, optionally gated stem at random levels.
WindowPair random_pair(std::mt19937& rng) {
  std::uniform_real_distribution<double> level(0.02, 1.8), freq(50.0, 6000.0), u(0.0, 1.0);
  const std::size_t n = 2 * 48000;
  std::vector<float> ctx(n, 0.0f), stem(n, 0.0f);
  for (int k = 0; k < 3; ++k) {
    const auto part = oracle::sine(freq(rng), level(rng) / 3.0, 48000, n, u(rng) * 6.28);
    for (std::size_t i = 0; i < n; ++i) ctx[i] += part[i];
  }
  std::normal_distribution<float> g;
  const double amp = level(rng) / 3.0;
  const double gate_hz = 1.0 + 7.0 * u(rng);
  for (std::size_t i = 0; i < n; ++i) {
    const bool on = std::fmod(i * gate_hz / 48000.0, 1.0) < 0.6;
    stem[i] = on ? static_cast<float>(amp * g(rng)) : 0.0f;
  }
  WindowPair p;
  p.context.buffer = {std::move(ctx), 48000};
  p.stem.buffer = {std::move(stem), 48000};
  return p;
}

std::string mix_regimes(bool& ok) {
  const auto start = Clock::now();
  std::mt19937 rng(77);
  std::vector<WindowPair> pairs;
  for (int i = 0; i < 100; ++i) pairs.push_back(random_pair(rng));

  double worst_lu = 0.0, worst_db = 0.0, worst_pp = 0.0;
  float worst_sample = 0.0f;
  std::size_t fallbacks = 0;
  for (const auto& label : regime_labels()) {
    const MixRegime r = mix_regime(label);
    for (const WindowPair& p : pairs) {
      const NormalizedParts parts = normalize_parts(p, r);
      const AudioBuffer m = mix(p, r);
      for (float v : m.samples) worst_sample = std::max(worst_sample, std::abs(v));
      if (r.preserve_relative) {
        // The mix peak is the louder input's peak; above the ceiling the limiter takes over.
        const double target = std::max(peak_of(p.context.buffer.samples), peak_of(p.stem.buffer.samples));
        const double ceiling_db = 20.0 * std::log10(0.999);
        const double got = peak_of(m.samples);
        worst_pp = std::max(worst_pp, target < ceiling_db ? std::abs(got - target) : std::max(0.0, got - ceiling_db));
      } else if (r.kind == RegimeKind::Peak) {
        worst_db = std::max(worst_db, std::abs(peak_of(parts.context) - r.context_target));
        worst_db = std::max(worst_db, std::abs(peak_of(parts.stem) - r.stem_target));
      } else {
        bool fb = false;
        worst_lu = std::max(worst_lu, std::abs(loudness_with_fallback({parts.context, 48000}, &fb) - r.context_target));
        fallbacks += fb;
        worst_lu = std::max(worst_lu, std::abs(loudness_with_fallback({parts.stem, 48000}, &fb) - r.stem_target));
        fallbacks += fb;
      }
    }
  }
  const double elapsed = seconds_since(start);
  ok = worst_lu <= 0.1 && worst_db <= 1e-4 && worst_pp <= 1e-4 && worst_sample <= 0.999f && elapsed < 60.0;
  return fmt("7 regimes x 100 pairs: max loudness error %.3g LU, max peak error %.3g dB, PP peak error %.3g dB, "
             "max |sample| %.6f, %zu fallback parts, %.1f s",
             worst_lu, worst_db, worst_pp, worst_sample, fallbacks, elapsed);
}

std::string table2_ordering(bool& ok) {
  const auto start = Clock::now();
  const Corpus corpus = synthesize_corpus({});
  std::vector<Transform> transforms;
  for (const auto& label : builtin_transform_labels()) transforms.push_back(transform_by_label(label));
  RunConfig cfg;
  cfg.regime = "L0";
  cfg.projection = ProjectionMode::NP;
  cfg.n_windows = 1000;
  cfg.seed = 1;
  const ValidationReport report = run_validation(corpus, transforms, {cfg});
  std::map<std::string, double> apa;
  for (const auto& row : report.configs.at(0).rows) apa[row.transform] = row.result ? row.result->apa : -1.0;
  ok = apa["TRUE"] > apa["NOISE"] && apa["NOISE"] > apa["SUBS"] && apa["TRUE"] - apa["SUBS"] >= 0.5 &&
       apa["PS"] < apa["TRUE"] && apa["TPS"] < apa["TRUE"];
  const double elapsed = seconds_since(start);
  ok = ok && elapsed < 600.0;
  return fmt("TRUE %.4f NOISE %.4f TS %.4f PS %.4f TPS %.4f SUBS %.4f, CLES %.4f, %.0f s", apa["TRUE"], apa["NOISE"],
             apa["TS"], apa["PS"], apa["TPS"], apa["SUBS"], report.configs[0].cles.value_or(-1.0), elapsed);
}

std::string cles_bruteforce(bool& ok) {
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> len(1, 20), coarse(0, 8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int mismatches = 0, complement_failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(len(rng)), b(len(rng));
    const bool ties = trial % 2 == 1;
    for (auto& x : a) x = ties ? coarse(rng) / 8.0 : u(rng);
    for (auto& x : b) x = ties ? coarse(rng) / 8.0 : u(rng);
    if (cles(a, b) != oracle::brute_cles(a, b)) ++mismatches;
    if (!ties && cles(a, b) + cles(b, a) != 1.0) ++complement_failures;
  }
  ok = mismatches == 0 && complement_failures == 0;
  return fmt("100 list pairs: %d mismatches against pair enumeration, %d complement failures", mismatches,
             complement_failures);
}

int run_cli(const std::string& args, const fs::path& out) {
  const std::string cmd = std::string(APA_CLI_PATH) + " " + args + " >" + out.string() + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string determinism(bool& ok) {
  const fs::path dir = fs::temp_directory_path() / "apa_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path log = dir / "synth.txt";
  if (run_cli("synth " + (dir / "corpus").string(), log) != 0) {
    ok = false;
    return "synth failed";
  }
  const std::string args = "--seed 11 --windows 200 --no-cache validate " + (dir / "corpus" / "manifest.json").string();
  const int a = run_cli(args, dir / "a.csv");
  const int b = run_cli(args + " --json " + (dir / "b.json").string(), dir / "b.csv");
  const std::string csv_a = slurp(dir / "a.csv"), csv_b = slurp(dir / "b.csv");
  ok = a == 0 && b == 0 && !csv_a.empty() && csv_a == csv_b;
  const auto rows = std::count(csv_a.begin(), csv_a.end(), '\n');
  fs::remove_all(dir);
  return fmt("two validate runs (200 windows, seed 11): exit %d/%d, %ld CSV lines, byte-identical %s", a, b,
             static_cast<long>(rows), csv_a == csv_b ? "yes" : "no");
}

std::string pca_oracle(bool& ok) {
  std::mt19937 rng(9);
  std::normal_distribution<float> g;
  const int n = 400, d = 50;
  EmbeddingMatrix m(n, d);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) m(r, c) = g(rng) * (1.0f + 0.1f * c) + (c > 0 ? 0.3f * m(r, c - 1) : 0.0f);

  std::vector<std::vector<double>> rows(n, std::vector<double>(d));
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) rows[r][c] = m(r, c);
  const auto [values, vectors] = oracle::jacobi_eigen(oracle::covariance(rows));
  const PcaProjection p = fit_pca(m, d);
  double worst_value = 0.0, worst_vector = 0.0;
  for (int i = 0; i < d; ++i) {
    worst_value = std::max(worst_value, std::abs(p.explained_variance(i) - values[i]));
    double dot = 0.0;
    for (int j = 0; j < d; ++j) dot += p.components(i, j) * vectors[j][i];
    worst_vector = std::max(worst_vector, std::abs(1.0 - std::abs(dot)));
  }

  EmbeddingSet set;
  set.vectors = m;
  set.embedder = {"acceptance", d, 48000};
  const EmbeddingSet projected = project(fit_pca(set, ProjectionMode::NP), set);
  double worst_distance = 0.0;
  for (int i = 0; i < 60; ++i)
    for (int j = 0; j < 60; ++j) {
      const double before = (m.row(i) - m.row(j)).cast<double>().norm();
      const double after = (projected.vectors.row(i) - projected.vectors.row(j)).cast<double>().norm();
      worst_distance = std::max(worst_distance, std::abs(after - before));
    }
  ok = worst_value <= 1e-6 && worst_vector <= 1e-6 && worst_distance <= 1e-9;
  return fmt("50x50 covariance: max eigenvalue error %.3g, max eigenvector error %.3g; NP max distance change %.3g",
             worst_value, worst_vector, worst_distance);
}

std::string no_secondary(bool& ok) {
  BridgeEmbedder echo(std::string(APA_ECHO_BRIDGE_PATH) + " --dim 4");
  const std::vector<AudioBuffer> windows{{{0.1f, 0.2f, 0.3f, 0.4f, 0.5f}, 48000}};
  const EmbeddingMatrix row = echo.embed_batch(windows);
  BuiltinLogMelEmbedder builtin;
  ok = row.cols() == 4 && row(0, 3) == 0.4f && builtin.spec().dim == 128;
  return fmt("criteria above used %s; echo bridge '%s' answered %d dims", builtin.spec().id.c_str(),
             echo.spec().id.c_str(), static_cast<int>(row.cols()));
}

}  // namespace

int main() {
  criterion("fad-analytic-oracle", fad_oracle);
  criterion("apa-endpoints", apa_endpoints);
  criterion("bs1770-conformance", bs1770);
  criterion("mix-regime-contracts", mix_regimes);
  criterion("cles-bruteforce", cles_bruteforce);
  criterion("pca-oracle", pca_oracle);
  criterion("validate-determinism", determinism);
  criterion("table2-ordering", table2_ordering);
  criterion("no-secondary-component", no_secondary);
  std::printf("%s: %d failing criteria\n", failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL", failures);
  return failures == 0 ? 0 : 1;
}
