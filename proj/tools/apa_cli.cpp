// apa: command-line front end for embedding, scoring and validation.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "apa/cache.h"
#include "apa/error.h"
#include "apa/pipeline.h"
#include "apa/synth.h"

namespace {

struct CommonArgs {
  std::uint64_t seed = 0;
  std::vector<std::string> regimes{"L0"};
  std::vector<std::string> projections{"NP"};
  std::size_t windows = 10000;
  double duration = 5.0;
  std::string embedder = "builtin";
  std::string bridge_cmd;
  std::string out;
  std::string cache_dir;
  bool no_cache = false;
  unsigned workers = 0;
};

void emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw apa::Error(apa::ErrorCode::IoError, "cannot write " + out);
  f << text;
}

std::vector<apa::RunConfig> grid_from(const CommonArgs& a, bool embedder_given) {
  apa::RunConfig base;
  base.seed = a.seed;
  base.n_windows = a.windows;
  base.window_duration_s = a.duration;
  base.embedder = a.embedder;
  base.bridge_command = a.bridge_cmd;
  if (!embedder_given && !a.bridge_cmd.empty()) base.embedder = "bridge";
  base.workers = a.workers;
  if (!a.no_cache) base.cache_dir = a.cache_dir.empty() ? apa::default_cache_dir() : std::filesystem::path(a.cache_dir);

  std::vector<std::string> regimes = a.regimes;
  if (regimes.size() == 1 && regimes[0] == "all") regimes = apa::regime_labels();
  std::vector<std::string> projections = a.projections;
  if (projections.size() == 1 && projections[0] == "all") projections = {"NP", "PCA100", "PCA10"};

  std::vector<apa::RunConfig> grid;
  for (const auto& r : regimes) {
    for (const auto& p : projections) {
      apa::RunConfig cfg = base;
      cfg.regime = r;
      cfg.projection = apa::projection_mode(p);
      apa::validate_config(cfg);
      grid.push_back(cfg);
    }
  }
  return grid;
}

apa::RunConfig single_config(const CommonArgs& a, bool embedder_given) {
  auto grid = grid_from(a, embedder_given);
  if (grid.size() != 1) throw apa::Error(apa::ErrorCode::InvalidArgument, "give one regime and one projection");
  return grid.front();
}

apa::Corpus corpus_at(const std::string& manifest) { return apa::load_corpus(apa::load_manifest(manifest)); }

int exit_code(apa::ErrorCode code) {
  switch (apa::category_of(code)) {
    case apa::ErrorCategory::Usage: return 1;
    case apa::ErrorCategory::Data: return 2;
    case apa::ErrorCategory::Numerical: return 3;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Accompaniment prompt adherence (APA) and Frechet audio distance tools"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonArgs a;
  app.add_option("--seed", a.seed, "Global random seed")->capture_default_str();
  app.add_option("--regime", a.regimes, "Mix regime(s): PP P0 P1 P2 L0 L1 L2, or 'all'")
      ->delimiter(',')
      ->capture_default_str();
  app.add_option("--projection", a.projections, "Projection(s): NP PCA100 PCA10, or 'all'")
      ->delimiter(',')
      ->capture_default_str();
  app.add_option("--windows", a.windows, "Windows per set")->capture_default_str();
  app.add_option("--duration", a.duration, "Window duration in seconds")->capture_default_str();
  app.add_option("--embedder", a.embedder, "builtin or bridge")->check(CLI::IsMember({"builtin", "bridge"}));
  app.add_option("--bridge-cmd", a.bridge_cmd, "Shell command starting an embedder bridge");
  app.add_option("--out", a.out, "Write machine output here instead of stdout");
  app.add_option("--cache-dir", a.cache_dir, "Embedding cache directory (default: $APA_CACHE_DIR or ~/.cache/apa)");
  app.add_flag("--no-cache", a.no_cache, "Do not read or write embedding caches");
  app.add_option("--workers", a.workers, "Worker threads (0: one per core)");

  std::string manifest, candidate, set_name = "reference", cache_a, cache_b, json_out, synth_dir;
  std::vector<std::string> transforms, ext_cmds, ext_noninvariant;
  apa::SynthOptions synth;

  auto* embed = app.add_subcommand("embed", "Precompute the embedding cache of one window set");
  embed->add_option("manifest", manifest, "Pair manifest")->required()->check(CLI::ExistingFile);
  embed->add_option("--set", set_name, "reference, mismatched or candidate")
      ->check(CLI::IsMember({"reference", "mismatched", "candidate"}))
      ->capture_default_str();

  auto* score = app.add_subcommand("score", "APA of a candidate manifest against a reference manifest");
  score->add_option("reference", manifest, "Reference manifest")->required()->check(CLI::ExistingFile);
  score->add_option("candidate", candidate, "Candidate manifest")->required()->check(CLI::ExistingFile);

  auto* validate = app.add_subcommand("validate", "Perturbation validation grid with CLES per configuration");
  validate->add_option("manifest", manifest, "Pair manifest")->required()->check(CLI::ExistingFile);
  validate->add_option("--transforms", transforms, "Transform labels (default: all built-ins)")->delimiter(',');
  validate->add_option("--ext-cmd", ext_cmds, "External transform LABEL=COMMAND; repeatable");
  validate->add_option("--ext-noninvariant", ext_noninvariant, "External labels in the non-invariant class")
      ->delimiter(',');
  validate->add_option("--json", json_out, "Also write the full JSON report here");

  auto* fad = app.add_subcommand("fad", "Frechet distance between two embedding caches");
  fad->add_option("a", cache_a, "First cache")->required()->check(CLI::ExistingFile);
  fad->add_option("b", cache_b, "Second cache")->required()->check(CLI::ExistingFile);

  auto* gen = app.add_subcommand("synth", "Write the synthetic multitrack corpus and its manifest");
  gen->add_option("dir", synth_dir, "Output directory")->required();
  gen->add_option("--songs", synth.songs, "Number of songs")->capture_default_str();
  gen->add_option("--seconds", synth.seconds, "Song length in seconds")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  const bool embedder_given = app.count("--embedder") > 0;

  try {
    if (*embed) {
      const apa::RunConfig cfg = single_config(a, embedder_given);
      if (a.out.empty()) throw apa::Error(apa::ErrorCode::InvalidArgument, "embed needs --out");
      const apa::Role role = set_name == "reference"    ? apa::Role::Reference
                             : set_name == "mismatched" ? apa::Role::Mismatched
                                                        : apa::Role::Candidate;
      apa::write_cache(apa::embed_role(corpus_at(manifest), role, cfg), a.out);
    } else if (*score) {
      const apa::RunConfig cfg = single_config(a, embedder_given);
      const apa::Corpus ref = corpus_at(manifest);
      const apa::Corpus cand = candidate == manifest ? ref : corpus_at(candidate);
      const apa::ApaReport report = apa::compute_apa(ref, cand, cfg);
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
      emit(apa::to_json(report).dump(2) + "\n", a.out);
    } else if (*validate) {
      const auto grid = grid_from(a, embedder_given);
      std::vector<apa::Transform> list;
      if (transforms.empty() && ext_cmds.empty()) transforms = apa::builtin_transform_labels();
      for (const auto& label : transforms) list.push_back(apa::transform_by_label(label));
      for (const auto& spec : ext_cmds) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0) {
          throw apa::Error(apa::ErrorCode::InvalidArgument, "--ext-cmd expects LABEL=COMMAND");
        }
        const std::string label = spec.substr(0, eq);
        const bool invariant =
            std::find(ext_noninvariant.begin(), ext_noninvariant.end(), label) == ext_noninvariant.end();
        list.push_back(apa::external_transform_spec(label, spec.substr(eq + 1), invariant));
      }
      const apa::ValidationReport report = apa::run_validation(corpus_at(manifest), list, grid);
      for (const auto& c : report.configs) {
        for (const auto& w : c.warnings) std::cerr << "warning: " << c.config_id << ": " << w << "\n";
      }
      emit(apa::to_csv(report), a.out);
      if (!json_out.empty()) emit(apa::to_json(report).dump(2) + "\n", json_out);
    } else if (*fad) {
      const apa::EmbeddingSet x = apa::read_cache(cache_a);
      const apa::EmbeddingSet y = apa::read_cache(cache_b);
      if (x.dim() != y.dim()) throw apa::Error(apa::ErrorCode::DimensionMismatch, "caches differ in dimension");
      const double d = apa::frechet_distance(apa::fit_gaussian(x), apa::fit_gaussian(y));
      emit(nlohmann::json{{"fad", d}}.dump() + "\n", a.out);
    } else if (*gen) {
      if (app.count("--seed") > 0) synth.seed = a.seed;
      const auto path = apa::generate_corpus(synth_dir, synth);
      std::cout << path.string() << "\n";
    }
  } catch (const apa::Error& e) {
    std::cerr << "apa: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "apa: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
