#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "apa/cache.h"
#include "test_util.h"

using namespace apa;
using test_util::code_of;

namespace {

EmbeddingSet sample_set(Eigen::Index rows, Eigen::Index cols, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> g;
  EmbeddingSet s;
  s.vectors.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) s.vectors(r, c) = g(rng);
  s.embedder = {"builtin-logmel-128", static_cast<int>(cols), 48000};
  s.regime_label = "L1";
  s.window_duration_s = 5.0;
  s.source_fingerprint = "abc123";
  s.context_fallbacks = 2;
  s.stem_fallbacks = 7;
  return s;
}

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void dump(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("cache round trip is exact", "[cache]") {
  const auto path = std::filesystem::temp_directory_path() / "apa_test_cache_rt.apae";
  for (unsigned seed = 0; seed < 3; ++seed) {
    const EmbeddingSet s = sample_set(10 + seed, 3 + seed, seed);
    write_cache(s, path);
    const EmbeddingSet r = read_cache(path);
    REQUIRE(r.vectors == s.vectors);
    REQUIRE(r.embedder == s.embedder);
    REQUIRE(r.regime_label == s.regime_label);
    REQUIRE(r.window_duration_s == s.window_duration_s);
    REQUIRE(r.source_fingerprint == s.source_fingerprint);
    REQUIRE(r.context_fallbacks == 2);
    REQUIRE(r.stem_fallbacks == 7);
  }
  const auto bytes = slurp(path);
  REQUIRE(std::string(bytes.begin(), bytes.begin() + 4) == "APAE");
  std::filesystem::remove(path);
}

TEST_CASE("malformed cache files are rejected", "[cache]") {
  const auto path = std::filesystem::temp_directory_path() / "apa_test_cache_bad.apae";
  write_cache(sample_set(20, 8, 1), path);
  const auto good = slurp(path);

  auto magic = good;
  magic[0] = 'X';
  dump(path, magic);
  REQUIRE(code_of([&] { read_cache(path); }) == ErrorCode::BadMagic);

  auto version = good;
  version[4] = 2;
  dump(path, version);
  REQUIRE(code_of([&] { read_cache(path); }) == ErrorCode::VersionUnsupported);

  dump(path, std::vector<char>(good.begin(), good.end() - 100));
  REQUIRE(code_of([&] { read_cache(path); }) == ErrorCode::TruncatedFile);
  dump(path, std::vector<char>(good.begin(), good.begin() + 10));
  REQUIRE(code_of([&] { read_cache(path); }) == ErrorCode::TruncatedFile);

  std::filesystem::remove(path);
  REQUIRE(code_of([&] { read_cache(path); }) == ErrorCode::IoError);
}
