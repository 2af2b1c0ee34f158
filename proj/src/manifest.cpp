#include "apa/manifest.h"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>

#include "apa/error.h"
#include "apa/rng.h"

namespace apa {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t hash_samples(std::uint64_t h, const std::vector<float>& samples) {
  for (float s : samples) {
    std::uint32_t bits;
    std::memcpy(&bits, &s, 4);
    h = mix64(h ^ bits);
  }
  return h;
}

AudioBuffer load_at_rate(const std::filesystem::path& path, int rate) {
  return resample(load_audio(path), rate);
}

}  // namespace

PairManifest parse_manifest(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  PairManifest m;
  try {
    if (!doc.contains("version")) throw Error(ErrorCode::InvalidManifest, "missing version field");
    m.version = doc.at("version").get<int>();
    if (m.version != kManifestVersion) {
      throw Error(ErrorCode::InvalidManifest, "unsupported manifest version " + std::to_string(m.version));
    }
    m.sample_rate = doc.value("sample_rate", kCanonicalRate);
    if (m.sample_rate <= 0) throw Error(ErrorCode::InvalidManifest, "sample_rate must be positive");

    std::set<std::string> ids;
    for (const auto& song : doc.at("songs")) {
      SongEntry e;
      e.id = song.at("id").get<std::string>();
      if (!ids.insert(e.id).second) throw Error(ErrorCode::InvalidManifest, "duplicate song id '" + e.id + "'");
      const auto& ctx = song.at("context");
      if (ctx.is_string()) {
        e.context.push_back(resolve(base_dir, ctx.get<std::string>()));
      } else {
        for (const auto& c : ctx) e.context.push_back(resolve(base_dir, c.get<std::string>()));
      }
      if (e.context.empty()) throw Error(ErrorCode::InvalidManifest, "song '" + e.id + "' has no context files");
      e.stem = resolve(base_dir, song.at("stem").get<std::string>());
      for (const auto& p : e.context) {
        if (!std::filesystem::exists(p)) throw Error(ErrorCode::InvalidManifest, "missing file " + p.string());
      }
      if (!std::filesystem::exists(e.stem)) throw Error(ErrorCode::InvalidManifest, "missing file " + e.stem.string());
      m.songs.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidManifest, e.what());
  }
  if (m.songs.empty()) throw Error(ErrorCode::InvalidManifest, "manifest lists no songs");
  return m;
}

PairManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidManifest, path.string() + ": " + e.what());
  }
  return parse_manifest(doc, path.parent_path());
}

nlohmann::json to_json(const PairManifest& manifest) {
  nlohmann::json songs = nlohmann::json::array();
  for (const auto& s : manifest.songs) {
    nlohmann::json ctx = nlohmann::json::array();
    for (const auto& c : s.context) ctx.push_back(c.string());
    songs.push_back({{"id", s.id}, {"context", ctx}, {"stem", s.stem.string()}});
  }
  return {{"version", manifest.version}, {"sample_rate", manifest.sample_rate}, {"songs", songs}};
}

Corpus make_corpus(std::vector<SongAudio> songs, int sample_rate) {
  Corpus corpus;
  corpus.sample_rate = sample_rate;
  std::uint64_t h = fnv1a("corpus");
  for (auto& s : songs) {
    const std::size_t n = std::min(s.context.size(), s.stem.size());
    s.context.samples.resize(n);
    s.stem.samples.resize(n);
    h = fnv1a(s.id, h);
    h = hash_samples(h, s.context.samples);
    h = hash_samples(h, s.stem.samples);
  }
  corpus.songs = std::move(songs);
  corpus.fingerprint = hex(h);
  return corpus;
}

Corpus load_corpus(const PairManifest& manifest) {
  std::vector<SongAudio> songs;
  songs.reserve(manifest.songs.size());
  for (const auto& entry : manifest.songs) {
    SongAudio song;
    song.id = entry.id;
    song.context.sample_rate = manifest.sample_rate;
    for (const auto& path : entry.context) {
      AudioBuffer part = load_at_rate(path, manifest.sample_rate);
      if (song.context.samples.size() < part.size()) song.context.samples.resize(part.size(), 0.0f);
      for (std::size_t i = 0; i < part.size(); ++i) song.context.samples[i] += part.samples[i];
    }
    song.stem = load_at_rate(entry.stem, manifest.sample_rate);
    songs.push_back(std::move(song));
  }
  return make_corpus(std::move(songs), manifest.sample_rate);
}

}  // namespace apa
