#include "apa/cache.h"

#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "apa/error.h"

namespace apa {

namespace {

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(const std::vector<char>& bytes, std::size_t& pos) {
  if (bytes.size() - pos < sizeof(T)) throw Error(ErrorCode::TruncatedFile, "header ends early");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void write_cache(const EmbeddingSet& set, const std::filesystem::path& path) {
  const nlohmann::json meta{{"embedder_id", set.embedder.id},
                            {"input_rate", set.embedder.input_rate},
                            {"regime", set.regime_label},
                            {"window_duration_s", set.window_duration_s},
                            {"fingerprint", set.source_fingerprint},
                            {"context_fallbacks", set.context_fallbacks},
                            {"stem_fallbacks", set.stem_fallbacks}};
  const std::string json = meta.dump();

  // Write to a sibling temp file and rename so readers never see a partial cache.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write("APAE", 4);
    put<std::uint32_t>(out, kCacheVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(set.vectors.cols()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(set.vectors.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(json.size()));
    out.write(json.data(), static_cast<std::streamsize>(json.size()));
    out.write(reinterpret_cast<const char*>(set.vectors.data()),
              static_cast<std::streamsize>(set.vectors.size() * sizeof(float)));
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "rename to " + path.string() + ": " + ec.message());
}

EmbeddingSet read_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 4) throw Error(ErrorCode::TruncatedFile, "file shorter than magic");
  if (std::memcmp(bytes.data(), "APAE", 4) != 0) throw Error(ErrorCode::BadMagic, path.string());
  std::size_t pos = 4;
  const auto version = get<std::uint32_t>(bytes, pos);
  if (version != kCacheVersion) {
    throw Error(ErrorCode::VersionUnsupported, "cache version " + std::to_string(version));
  }
  const auto dim = get<std::uint32_t>(bytes, pos);
  const auto count = get<std::uint64_t>(bytes, pos);
  const auto json_len = get<std::uint32_t>(bytes, pos);
  if (bytes.size() - pos < json_len) throw Error(ErrorCode::TruncatedFile, "metadata ends early");
  const std::string json(bytes.data() + pos, json_len);
  pos += json_len;

  const std::uint64_t floats = count * dim;
  if ((bytes.size() - pos) / sizeof(float) < floats) throw Error(ErrorCode::TruncatedFile, "matrix ends early");

  EmbeddingSet set;
  try {
    const auto meta = nlohmann::json::parse(json);
    set.embedder.id = meta.at("embedder_id").get<std::string>();
    set.embedder.input_rate = meta.value("input_rate", kCanonicalRate);
    set.regime_label = meta.at("regime").get<std::string>();
    set.window_duration_s = meta.at("window_duration_s").get<double>();
    set.source_fingerprint = meta.at("fingerprint").get<std::string>();
    set.context_fallbacks = meta.value("context_fallbacks", std::size_t{0});
    set.stem_fallbacks = meta.value("stem_fallbacks", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("cache metadata: ") + e.what());
  }
  set.embedder.dim = static_cast<int>(dim);
  set.vectors.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  std::memcpy(set.vectors.data(), bytes.data() + pos, floats * sizeof(float));
  return set;
}

}  // namespace apa
