/// @file pipeline.h
/// @brief Seeded window sampling, end-to-end APA computation, the perturbation
/// validation grid and report serialization.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "apa/dynamics.h"
#include "apa/embed.h"
#include "apa/manifest.h"
#include "apa/perturb.h"
#include "apa/stats.h"

namespace apa {

/// Bumped whenever a change alters embeddings for unchanged inputs; part of every cache key.
inline constexpr int kPipelineVersion = 1;

/// @brief Start of a window inside a corpus song.
struct WindowRef {
  std::size_t song = 0;
  std::size_t offset = 0;  ///< samples

  bool operator==(const WindowRef&) const = default;
};

/// @brief Lightweight WindowPair: audio is copied out of the corpus on demand.
struct PairRef {
  WindowRef context;
  WindowRef stem;
  bool matched = true;

  bool operator==(const PairRef&) const = default;
};

struct SamplingOptions {
  /// Redraw windows whose context or stem is digital silence.
  bool skip_silent = true;
};

/// @brief Draws @p n matched pairs: song uniform over songs long enough for the
/// window, offset uniform in [0, len - window]. A pure function of the corpus,
/// @p seed and @p stream.
/// @throws Error(SongTooShort) when no song fits the window. Excluded songs are
/// appended to @p warnings.
std::vector<PairRef> sample_pair_refs(const Corpus& corpus, std::size_t n, double duration_s, std::uint64_t seed,
                                      std::string_view stream, const SamplingOptions& opts = {},
                                      std::vector<std::string>* warnings = nullptr);

/// @brief Copies the audio of @p ref out of the corpus.
WindowPair materialize(const Corpus& corpus, const PairRef& ref, double duration_s);

/// @brief Re-pairs stems across songs (see derange_by_song); matched=false.
std::vector<PairRef> mismatch_refs(const Corpus& corpus, const std::vector<PairRef>& refs, std::uint64_t seed);

/// @brief Materialized matched pairs from the "reference" stream.
std::vector<WindowPair> sample_window_pairs(const Corpus& corpus, std::size_t n, double duration_s, std::uint64_t seed,
                                            const SamplingOptions& opts = {});

struct RunConfig {
  std::string regime = "L0";
  /// "builtin", or "bridge" together with bridge_command.
  std::string embedder = "builtin";
  std::string bridge_command;
  ProjectionMode projection = ProjectionMode::NP;
  double window_duration_s = 5.0;
  std::size_t n_windows = 10000;
  std::uint64_t seed = 0;
  /// Embedding cache directory; empty disables caching.
  std::filesystem::path cache_dir;
  /// Worker threads for mixing and embedding; 0 uses the hardware concurrency.
  unsigned workers = 0;
  std::size_t batch_size = 16;
  MixOptions mix{};
  SamplingOptions sampling{};
};

/// @throws Error(InvalidArgument) when n_windows < 2, window_duration_s <= 0,
/// the regime is unknown or a bridge lacks a command.
void validate_config(const RunConfig& cfg);

/// @brief Produces one embedder per worker.
using EmbedderFactory = std::function<std::unique_ptr<Embedder>()>;
EmbedderFactory embedder_factory(const RunConfig& cfg);

/// @brief Per-run tallies.
struct RunCounts {
  std::size_t reference = 0;
  std::size_t mismatched = 0;
  std::size_t candidate = 0;
  std::size_t context_fallbacks = 0;  ///< windows whose context was metered ungated
  std::size_t stem_fallbacks = 0;

  bool operator==(const RunCounts&) const = default;
};

/// @brief The configuration values that determine a score.
struct ConfigSummary {
  std::string regime;
  std::string projection;
  std::string embedder_id;
  int embedder_dim = 0;
  double window_duration_s = 0.0;
  std::size_t n_windows = 0;
  std::uint64_t seed = 0;

  bool operator==(const ConfigSummary&) const = default;
};

struct ApaReport {
  ConfigSummary config;
  std::string fingerprint;
  ApaResult result;
  RunCounts counts;
  double wall_clock_s = 0.0;
  std::vector<std::string> warnings;
};

inline constexpr const char* kApaReportSchema = "apa-report/1";
nlohmann::json to_json(const ApaReport& report);
/// @throws Error(InvalidArgument) on schema violations.
ApaReport apa_report_from_json(const nlohmann::json& doc);

enum class Role { Reference, Mismatched, Candidate };

/// @brief Embeds one role's window set under @p cfg, reusing the cache when possible.
EmbeddingSet embed_role(const Corpus& corpus, Role role, const RunConfig& cfg);

/// @brief R from @p reference, R' by mismatching R, C from @p candidate.
ApaReport compute_apa(const Corpus& reference, const Corpus& candidate, const RunConfig& cfg);
/// @brief As above with pre-built candidate pairs (e.g. generated stems on known contexts).
ApaReport compute_apa(const Corpus& reference, const std::vector<WindowPair>& candidate, const RunConfig& cfg);
ApaReport compute_apa(const PairManifest& reference, const PairManifest& candidate, const RunConfig& cfg);

/// @brief Applies a transform to a candidate stem. Randomness comes from the
/// item's own stream, so the result depends only on (seed, label, index).
/// SUBS is set-level and handled by the caller.
Window apply_transform(const Transform& t, const Window& stem, std::uint64_t seed, std::size_t index);

struct TransformRow {
  std::string transform;
  bool invariant_class = true;
  std::optional<ApaResult> result;
  std::string error;  ///< set when the transform failed
};

struct ConfigResult {
  std::string config_id;
  ConfigSummary config;
  std::vector<TransformRow> rows;
  /// CLES of invariant over non-invariant APA values; absent when either group is empty.
  std::optional<double> cles;
  RunCounts counts;
  std::vector<std::string> warnings;
};

struct ValidationReport {
  std::vector<ConfigResult> configs;
  std::string fingerprint;
  double wall_clock_s = 0.0;
};

/// @brief For every config and transform: sample candidate pairs, transform the
/// stems, score against the untransformed reference. Transform failures are
/// recorded in their row.
/// @throws Error(EmptyInput) for an empty transform list or grid.
ValidationReport run_validation(const Corpus& corpus, const std::vector<Transform>& transforms,
                                const std::vector<RunConfig>& grid);

/// @brief config_id,regime,projection,embedder,transform,invariant_class,apa,fad_cr,fad_crp,fad_rrp,clipped
std::string to_csv(const ValidationReport& report);
nlohmann::json to_json(const ValidationReport& report);

/// @brief "<regime>-<projection>-<embedder id>".
std::string config_id(const ConfigSummary& config);

/// @brief APA_CACHE_DIR, else $XDG_CACHE_HOME/apa, else ~/.cache/apa.
std::filesystem::path default_cache_dir();

}  // namespace apa
