#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / "apa_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run apa_cli(const std::string& args) {
  const fs::path out = work_dir() / "stdout.txt", err = work_dir() / "stderr.txt";
  const std::string cmd = std::string(APA_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

/// Four 6 s songs written once for the whole file.
const fs::path& corpus_manifest() {
  static const fs::path manifest = [] {
    const Run r = apa_cli("--seed 3 synth " + (work_dir() / "corpus").string() + " --songs 4 --seconds 6");
    REQUIRE(r.code == 0);
    return work_dir() / "corpus" / "manifest.json";
  }();
  return manifest;
}

const std::string kSmall = "--windows 20 --duration 2 --no-cache --workers 1";

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("missing manifest is a usage error", "[cli]") {
  const Run r = apa_cli("score /nonexistent/ref.json /nonexistent/cand.json");
  REQUIRE(r.code == 1);
  REQUIRE_FALSE(r.err.empty());
  REQUIRE(apa_cli("").code == 1);
  REQUIRE(apa_cli("--regime Z9 validate " + corpus_manifest().string()).code == 1);
  REQUIRE(apa_cli("--windows 1 validate " + corpus_manifest().string()).code == 1);
}

TEST_CASE("synth writes a loadable corpus", "[cli]") {
  const fs::path& m = corpus_manifest();
  REQUIRE(fs::exists(m));
  const auto doc = nlohmann::json::parse(slurp(m));
  REQUIRE(doc.at("songs").size() == 4);
  for (const auto& song : doc.at("songs")) {
    REQUIRE(song.at("context").size() == 2);
    REQUIRE(fs::exists(m.parent_path() / song.at("stem").get<std::string>()));
  }
}

TEST_CASE("validate prints one CSV row per transform", "[cli]") {
  const Run r = apa_cli(kSmall + " validate " + corpus_manifest().string());
  INFO(r.err);
  REQUIRE(r.code == 0);
  REQUIRE(r.out.rfind("config_id,regime,projection,embedder,transform,", 0) == 0);
  REQUIRE(line_count(r.out) == 1 + 6);
  for (const char* label : {",TRUE,", ",NOISE,", ",TS,", ",PS,", ",TPS,", ",SUBS,"}) {
    REQUIRE(r.out.find(label) != std::string::npos);
  }

  const fs::path csv = work_dir() / "grid.csv", json = work_dir() / "grid.json";
  const Run grid = apa_cli(kSmall + " --regime L0,P0 --out " + csv.string() + " validate " +
                           corpus_manifest().string() + " --transforms TRUE,SUBS --ext-cmd COPY=cat --json " +
                           json.string());
  INFO(grid.err);
  REQUIRE(grid.code == 0);
  REQUIRE(grid.out.empty());
  REQUIRE(line_count(slurp(csv)) == 1 + 2 * 3);
  REQUIRE(slurp(csv).find(",COPY,invariant,") != std::string::npos);
  REQUIRE(nlohmann::json::parse(slurp(json)).at("configs").size() == 2);
}

TEST_CASE("embed then fad of a cache against itself", "[cli]") {
  const fs::path cache = work_dir() / "ref.apae";
  const Run e = apa_cli(kSmall + " --out " + cache.string() + " embed " + corpus_manifest().string() +
                        " --set reference");
  INFO(e.err);
  REQUIRE(e.code == 0);
  REQUIRE(fs::exists(cache));

  const Run f = apa_cli("fad " + cache.string() + " " + cache.string());
  REQUIRE(f.code == 0);
  REQUIRE(nlohmann::json::parse(f.out).at("fad").get<double>() <= 1e-8);

  const fs::path other = work_dir() / "mm.apae";
  REQUIRE(apa_cli(kSmall + " --out " + other.string() + " embed " + corpus_manifest().string() +
                  " --set mismatched")
              .code == 0);
  REQUIRE(nlohmann::json::parse(apa_cli("fad " + cache.string() + " " + other.string()).out).at("fad").get<double>() >
          0.0);

  const fs::path junk = work_dir() / "junk.apae";
  std::ofstream(junk) << "not a cache";
  REQUIRE(apa_cli("fad " + junk.string() + " " + cache.string()).code == 2);
}

TEST_CASE("score reports JSON and caches by default", "[cli]") {
  const std::string m = corpus_manifest().string();
  const fs::path cache_dir = work_dir() / "cache";
  const std::string args = "--windows 20 --duration 2 --workers 1 --cache-dir " + cache_dir.string() + " score " + m + " " + m;
  const Run first = apa_cli(args);
  INFO(first.err);
  REQUIRE(first.code == 0);
  const auto doc = nlohmann::json::parse(first.out);
  REQUIRE(doc.at("schema") == "apa-report/1");
  const double apa = doc.at("result").at("apa").get<double>();
  REQUIRE(apa >= 0.0);
  REQUIRE(apa <= 1.0);
  REQUIRE(std::distance(fs::directory_iterator(cache_dir), {}) == 3);

  const auto again = nlohmann::json::parse(apa_cli(args).out);
  REQUIRE(again.at("result") == doc.at("result"));
}

TEST_CASE("score through the echo bridge", "[cli]") {
  const std::string m = corpus_manifest().string();
  const Run r = apa_cli(kSmall + " --bridge-cmd '" + std::string(APA_ECHO_BRIDGE_PATH) + " --dim 8' score " + m + " " + m);
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto doc = nlohmann::json::parse(r.out);
  REQUIRE(doc.at("config").at("embedder_id") == "bridge:echo");
  REQUIRE(doc.at("config").at("embedder_dim") == 8);

  const Run broken = apa_cli(kSmall + " --bridge-cmd '" + std::string(APA_ECHO_BRIDGE_PATH) +
                             " --mode die-after:3' score " + m + " " + m);
  REQUIRE(broken.code == 2);
  REQUIRE(broken.err.find("BridgeError") != std::string::npos);
}

TEST_CASE("unreadable audio is a data error", "[cli]") {
  const fs::path dir = work_dir() / "bad";
  fs::create_directories(dir);
  std::ofstream(dir / "ctx.wav") << "garbage";
  std::ofstream(dir / "stem.wav") << "garbage";
  std::ofstream(dir / "manifest.json")
      << R"({"version": 1, "sample_rate": 48000, "songs": [{"id": "a", "context": ["ctx.wav"], "stem": "stem.wav"}]})";
  const Run r = apa_cli(kSmall + " validate " + (dir / "manifest.json").string());
  REQUIRE(r.code == 2);
  REQUIRE_FALSE(r.err.empty());
}
