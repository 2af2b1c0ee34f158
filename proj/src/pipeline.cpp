#include "apa/pipeline.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <map>
#include <sstream>
#include <thread>

#include "apa/bridge.h"
#include "apa/cache.h"
#include "apa/error.h"
#include "apa/rng.h"

namespace apa {

namespace {

using Clock = std::chrono::steady_clock;

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool all_zero(const std::vector<float>& x, std::size_t offset, std::size_t n) {
  return std::all_of(x.begin() + static_cast<std::ptrdiff_t>(offset),
                     x.begin() + static_cast<std::ptrdiff_t>(offset + n), [](float v) { return v == 0.0f; });
}

Window copy_window(const SongAudio& song, const AudioBuffer& buf, std::size_t offset, std::size_t n,
                   double duration_s) {
  Window w;
  const auto first = buf.samples.begin() + static_cast<std::ptrdiff_t>(offset);
  w.buffer.samples.assign(first, first + static_cast<std::ptrdiff_t>(n));
  w.buffer.sample_rate = buf.sample_rate;
  w.source_song_id = song.id;
  w.source_offset_s = static_cast<double>(offset) / buf.sample_rate;
  w.duration_s = duration_s;
  return w;
}

std::uint64_t hash_pairs(const std::vector<WindowPair>& pairs) {
  std::uint64_t h = fnv1a("pairs");
  auto add = [&h](const Window& w) {
    h = fnv1a(w.source_song_id, h);
    h = mix64(h ^ static_cast<std::uint64_t>(w.buffer.sample_rate));
    for (float s : w.buffer.samples) {
      std::uint32_t bits;
      std::memcpy(&bits, &s, 4);
      h = mix64(h ^ bits);
    }
  };
  for (const auto& p : pairs) {
    add(p.context);
    add(p.stem);
  }
  return h;
}

/// Lazily creates one embedder per worker.
class EmbedderPool {
 public:
  EmbedderPool(EmbedderFactory factory, unsigned size) : factory_(std::move(factory)), slots_(size) {}

  Embedder& at(std::size_t worker) {
    if (!slots_[worker]) slots_[worker] = factory_();
    return *slots_[worker];
  }
  const EmbedderSpec& spec() { return at(0).spec(); }
  std::size_t size() const { return slots_.size(); }

 private:
  EmbedderFactory factory_;
  std::vector<std::unique_ptr<Embedder>> slots_;
};

using PairSource = std::function<WindowPair(std::size_t)>;

unsigned worker_count(const RunConfig& cfg) {
  if (cfg.workers > 0) return cfg.workers;
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string transform_key(const Transform& t) {
  std::ostringstream s;
  s << t.label << '/' << static_cast<int>(t.kind) << '/' << fmt_double(t.shift_range.min_s) << '/'
    << fmt_double(t.shift_range.max_s) << '/' << t.semitone_range.min << '/' << t.semitone_range.max << '/'
    << fmt_double(t.noise_offset_db) << '/' << t.command;
  return s.str();
}

double draw_shift(const Transform& t, const Window& stem, Rng& rng) {
  const double lo = t.shift_range.min_s;
  const double hi = std::max(lo, std::min(t.shift_range.max_s, stem.buffer.duration_s()));
  const double magnitude = std::uniform_real_distribution<double>(lo, hi)(rng);
  return (rng() & 1) ? magnitude : -magnitude;
}

int draw_semitones(const Transform& t, Rng& rng) {
  const int magnitude = std::uniform_int_distribution<int>(t.semitone_range.min, t.semitone_range.max)(rng);
  return (rng() & 1) ? magnitude : -magnitude;
}

/// Mixes, embeds and caches window sets for one RunConfig.
class Engine {
 public:
  Engine(const RunConfig& cfg, std::map<std::string, EmbeddingSet>* memo = nullptr)
      : cfg_(cfg), regime_(mix_regime(cfg.regime)), pool_(embedder_factory(cfg), worker_count(cfg)), memo_(memo) {}

  const EmbedderSpec& spec() { return pool_.spec(); }
  std::vector<std::string>& warnings() { return warnings_; }

  std::string cache_key(const std::string& corpus_fp, const std::string& role, std::size_t count) {
    const EmbedderSpec& s = spec();
    const LimiterConfig& lim = cfg_.mix.limiter;
    std::ostringstream k;
    k << "v" << kPipelineVersion << '|' << corpus_fp << '|' << role << '|' << cfg_.seed << '|' << count << '|'
      << fmt_double(cfg_.window_duration_s) << '|' << regime_.label << '|' << s.id << '|' << s.dim << '|'
      << s.input_rate << '|' << fmt_double(lim.lookahead_s) << '|' << fmt_double(lim.release_s) << '|'
      << fmt_double(lim.ceiling) << '|' << static_cast<int>(cfg_.mix.pp_reference) << '|'
      << cfg_.sampling.skip_silent;
    return hex(fnv1a(k.str()));
  }

  EmbeddingSet embed(const std::string& corpus_fp, const std::string& role, std::size_t count,
                     const PairSource& source) {
    const std::string key = cache_key(corpus_fp, role, count);
    if (memo_) {
      if (auto it = memo_->find(key); it != memo_->end()) return it->second;
    }
    std::filesystem::path path;
    if (!cfg_.cache_dir.empty()) {
      path = cfg_.cache_dir / (key + ".apae");
      if (auto cached = load(path, key, count)) return remember(key, std::move(*cached));
    }

    EmbeddingSet set = compute(count, source);
    set.source_fingerprint = key;
    if (!path.empty()) {
      try {
        std::filesystem::create_directories(cfg_.cache_dir);
        write_cache(set, path);
      } catch (const std::exception& e) {
        warnings_.push_back(std::string("cache not written: ") + e.what());
      }
    }
    return remember(key, std::move(set));
  }

 private:
  EmbeddingSet remember(const std::string& key, EmbeddingSet set) {
    if (memo_) (*memo_)[key] = set;
    return set;
  }

  std::optional<EmbeddingSet> load(const std::filesystem::path& path, const std::string& key, std::size_t count) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    try {
      EmbeddingSet set = read_cache(path);
      const EmbedderSpec& s = spec();
      if (set.source_fingerprint == key && set.count() == count && set.embedder.id == s.id &&
          set.dim() == s.dim) {
        return set;
      }
      warnings_.push_back("stale cache " + path.string() + " recomputed");
    } catch (const Error& e) {
      warnings_.push_back("unreadable cache " + path.string() + " recomputed: " + e.what());
    }
    return std::nullopt;
  }

  EmbeddingSet compute(std::size_t count, const PairSource& source) {
    const EmbedderSpec spec = pool_.spec();
    EmbeddingSet set;
    set.embedder = spec;
    set.regime_label = regime_.label;
    set.window_duration_s = cfg_.window_duration_s;
    set.vectors.resize(static_cast<Eigen::Index>(count), spec.dim);

    const std::size_t batch = std::max<std::size_t>(1, cfg_.batch_size);
    const std::size_t chunks = (count + batch - 1) / batch;
    std::vector<std::exception_ptr> errors(chunks);
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> first_failure{chunks};
    std::atomic<std::size_t> context_fallbacks{0};
    std::atomic<std::size_t> stem_fallbacks{0};

    auto work = [&](std::size_t worker) {
      for (;;) {
        const std::size_t c = next.fetch_add(1);
        if (c >= chunks) return;
        if (c > first_failure.load()) continue;
        try {
          Embedder& embedder = pool_.at(worker);
          const std::size_t begin = c * batch;
          const std::size_t end = std::min(count, begin + batch);
          std::vector<AudioBuffer> mixes;
          mixes.reserve(end - begin);
          for (std::size_t i = begin; i < end; ++i) {
            MixResult m = mix_detailed(source(i), regime_, cfg_.mix);
            context_fallbacks += m.context_fallback ? 1 : 0;
            stem_fallbacks += m.stem_fallback ? 1 : 0;
            if (m.mix.sample_rate != spec.input_rate) m.mix = resample(m.mix, spec.input_rate);
            mixes.push_back(std::move(m.mix));
          }
          const EmbeddingMatrix rows = embedder.embed_batch(mixes);
          if (rows.rows() != static_cast<Eigen::Index>(mixes.size()) || rows.cols() != spec.dim) {
            throw Error(ErrorCode::DimensionMismatch, "embedder returned " + std::to_string(rows.rows()) + "x" +
                                                          std::to_string(rows.cols()) + " block");
          }
          if (!rows.allFinite()) throw Error(ErrorCode::NumericalFailure, "non-finite embedding");
          set.vectors.middleRows(static_cast<Eigen::Index>(begin), rows.rows()) = rows;
        } catch (...) {
          errors[c] = std::current_exception();
          std::size_t seen = first_failure.load();
          while (c < seen && !first_failure.compare_exchange_weak(seen, c)) {
          }
        }
      }
    };

    if (pool_.size() == 1) {
      work(0);
    } else {
      std::vector<std::jthread> threads;
      for (std::size_t w = 0; w < pool_.size(); ++w) threads.emplace_back(work, w);
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    set.context_fallbacks = context_fallbacks.load();
    set.stem_fallbacks = stem_fallbacks.load();
    return set;
  }

  const RunConfig& cfg_;
  MixRegime regime_;
  EmbedderPool pool_;
  std::map<std::string, EmbeddingSet>* memo_;
  std::vector<std::string> warnings_;
};

PairSource corpus_source(const Corpus& corpus, const std::vector<PairRef>& refs, double duration_s) {
  return [&corpus, &refs, duration_s](std::size_t i) { return materialize(corpus, refs[i], duration_s); };
}

void add_fallback_warnings(const EmbeddingSet& set, const std::string& role, std::vector<std::string>& warnings) {
  if (set.context_fallbacks > 0) {
    warnings.push_back(role + ": " + std::to_string(set.context_fallbacks) +
                       " context windows metered ungated (gates rejected every block)");
  }
  if (set.stem_fallbacks > 0) {
    warnings.push_back(role + ": " + std::to_string(set.stem_fallbacks) +
                       " stem windows metered ungated (gates rejected every block)");
  }
}

ConfigSummary summarize(const RunConfig& cfg, const EmbedderSpec& spec) {
  return {cfg.regime,   std::string(to_string(cfg.projection)), spec.id, spec.dim, cfg.window_duration_s,
          cfg.n_windows, cfg.seed};
}

/// R and R' embeddings with the projection fitted on R.
struct Anchors {
  EmbeddingSet reference;
  EmbeddingSet mismatched;
  PcaProjection projection;
  GaussianStats r;
  GaussianStats r_prime;
};

Anchors build_anchors(Engine& engine, const Corpus& corpus, const RunConfig& cfg, std::vector<std::string>& warnings) {
  const auto refs = sample_pair_refs(corpus, cfg.n_windows, cfg.window_duration_s, cfg.seed, "reference",
                                     cfg.sampling, &warnings);
  const auto mismatched = mismatch_refs(corpus, refs, stream_seed(cfg.seed, "mismatch"));
  Anchors a;
  a.reference = engine.embed(corpus.fingerprint, "reference", refs.size(),
                             corpus_source(corpus, refs, cfg.window_duration_s));
  a.mismatched = engine.embed(corpus.fingerprint, "mismatched", mismatched.size(),
                              corpus_source(corpus, mismatched, cfg.window_duration_s));
  add_fallback_warnings(a.reference, "reference", warnings);
  add_fallback_warnings(a.mismatched, "mismatched", warnings);
  a.projection = fit_pca(a.reference, cfg.projection);
  for (const auto& w : a.projection.warnings) warnings.push_back(w);
  a.r = fit_gaussian(project(a.projection, a.reference));
  a.r_prime = fit_gaussian(project(a.projection, a.mismatched));
  return a;
}

ApaResult score_candidate(const Anchors& a, const EmbeddingSet& candidate) {
  return apa_score(fit_gaussian(project(a.projection, candidate)), a.r, a.r_prime);
}

void note_clipping(const ApaResult& r, const std::string& what, std::vector<std::string>& warnings) {
  if (r.clipped) warnings.push_back(what + ": APA clipped from raw value " + fmt_double(r.apa_raw));
}

ApaReport finish_report(const RunConfig& cfg, Engine& engine, const Anchors& a, const EmbeddingSet& candidate,
                        std::vector<std::string> warnings, Clock::time_point start) {
  ApaReport report;
  report.config = summarize(cfg, engine.spec());
  report.result = score_candidate(a, candidate);
  add_fallback_warnings(candidate, "candidate", warnings);
  note_clipping(report.result, "candidate", warnings);
  report.counts = {a.reference.count(), a.mismatched.count(), candidate.count(),
                   a.reference.context_fallbacks + a.mismatched.context_fallbacks + candidate.context_fallbacks,
                   a.reference.stem_fallbacks + a.mismatched.stem_fallbacks + candidate.stem_fallbacks};
  report.fingerprint = hex(fnv1a(a.reference.source_fingerprint + a.mismatched.source_fingerprint +
                                 candidate.source_fingerprint + std::string(to_string(cfg.projection))));
  for (auto& w : engine.warnings()) warnings.push_back(w);
  report.warnings = std::move(warnings);
  report.wall_clock_s = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

nlohmann::json result_json(const ApaResult& r) {
  return {{"fad_cr", r.fad_cr},   {"fad_crp", r.fad_crp}, {"fad_rrp", r.fad_rrp},
          {"apa_raw", r.apa_raw}, {"apa", r.apa},         {"clipped", r.clipped}};
}

ApaResult result_from_json(const nlohmann::json& j) {
  ApaResult r;
  r.fad_cr = j.at("fad_cr").get<double>();
  r.fad_crp = j.at("fad_crp").get<double>();
  r.fad_rrp = j.at("fad_rrp").get<double>();
  r.apa_raw = j.at("apa_raw").get<double>();
  r.apa = j.at("apa").get<double>();
  r.clipped = j.at("clipped").get<bool>();
  return r;
}

nlohmann::json summary_json(const ConfigSummary& c) {
  return {{"regime", c.regime},
          {"projection", c.projection},
          {"embedder_id", c.embedder_id},
          {"embedder_dim", c.embedder_dim},
          {"window_duration_s", c.window_duration_s},
          {"n_windows", c.n_windows},
          {"seed", c.seed}};
}

ConfigSummary summary_from_json(const nlohmann::json& j) {
  ConfigSummary c;
  c.regime = j.at("regime").get<std::string>();
  c.projection = j.at("projection").get<std::string>();
  c.embedder_id = j.at("embedder_id").get<std::string>();
  c.embedder_dim = j.at("embedder_dim").get<int>();
  c.window_duration_s = j.at("window_duration_s").get<double>();
  c.n_windows = j.at("n_windows").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

nlohmann::json counts_json(const RunCounts& c) {
  return {{"reference", c.reference},
          {"mismatched", c.mismatched},
          {"candidate", c.candidate},
          {"context_fallbacks", c.context_fallbacks},
          {"stem_fallbacks", c.stem_fallbacks}};
}

RunCounts counts_from_json(const nlohmann::json& j) {
  return {j.at("reference").get<std::size_t>(), j.at("mismatched").get<std::size_t>(),
          j.at("candidate").get<std::size_t>(), j.at("context_fallbacks").get<std::size_t>(),
          j.at("stem_fallbacks").get<std::size_t>()};
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::vector<PairRef> sample_pair_refs(const Corpus& corpus, std::size_t n, double duration_s, std::uint64_t seed,
                                      std::string_view stream, const SamplingOptions& opts,
                                      std::vector<std::string>* warnings) {
  if (!(duration_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "window duration must be positive");
  const std::size_t window = samples_for(duration_s, corpus.sample_rate);
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < corpus.songs.size(); ++i) {
    if (window > 0 && corpus.songs[i].size() >= window) {
      eligible.push_back(i);
    } else if (warnings) {
      warnings->push_back("SongTooShort: song '" + corpus.songs[i].id + "' is shorter than the " +
                          fmt_double(duration_s) + " s window and was excluded");
    }
  }
  if (eligible.empty()) {
    throw Error(ErrorCode::SongTooShort, "no song is at least " + fmt_double(duration_s) + " s long");
  }

  Rng rng = make_rng(seed, stream);
  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  std::vector<PairRef> refs;
  refs.reserve(n);
  const std::size_t max_draws = 100 * n + 1000;
  for (std::size_t draws = 0; refs.size() < n; ++draws) {
    if (draws == max_draws) {
      throw Error(ErrorCode::SilentAudio, "could not find " + std::to_string(n) + " windows with audible parts");
    }
    const std::size_t song = eligible[pick(rng)];
    const SongAudio& s = corpus.songs[song];
    const std::size_t offset = std::uniform_int_distribution<std::size_t>(0, s.size() - window)(rng);
    if (opts.skip_silent &&
        (all_zero(s.context.samples, offset, window) || all_zero(s.stem.samples, offset, window))) {
      continue;
    }
    refs.push_back({{song, offset}, {song, offset}, true});
  }
  return refs;
}

WindowPair materialize(const Corpus& corpus, const PairRef& ref, double duration_s) {
  const std::size_t window = samples_for(duration_s, corpus.sample_rate);
  const SongAudio& cs = corpus.songs.at(ref.context.song);
  const SongAudio& ss = corpus.songs.at(ref.stem.song);
  if (ref.context.offset + window > cs.size() || ref.stem.offset + window > ss.size()) {
    throw Error(ErrorCode::OutOfRange, "window reference outside its song");
  }
  return {copy_window(cs, cs.context, ref.context.offset, window, duration_s),
          copy_window(ss, ss.stem, ref.stem.offset, window, duration_s), ref.matched};
}

std::vector<PairRef> mismatch_refs(const Corpus& corpus, const std::vector<PairRef>& refs, std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(refs.size());
  for (const auto& r : refs) ids.push_back(corpus.songs.at(r.context.song).id);
  const auto perm = derange_by_song(ids, seed);
  std::vector<PairRef> out;
  out.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) out.push_back({refs[i].context, refs[perm[i]].stem, false});
  return out;
}

std::vector<WindowPair> sample_window_pairs(const Corpus& corpus, std::size_t n, double duration_s, std::uint64_t seed,
                                            const SamplingOptions& opts) {
  std::vector<WindowPair> pairs;
  for (const auto& ref : sample_pair_refs(corpus, n, duration_s, seed, "reference", opts)) {
    pairs.push_back(materialize(corpus, ref, duration_s));
  }
  return pairs;
}

void validate_config(const RunConfig& cfg) {
  if (cfg.n_windows < 2) throw Error(ErrorCode::InvalidArgument, "n_windows must be at least 2");
  if (!(cfg.window_duration_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "window duration must be positive");
  mix_regime(cfg.regime);
  if (cfg.embedder == "bridge" && cfg.bridge_command.empty()) {
    throw Error(ErrorCode::InvalidArgument, "bridge embedder needs a command");
  }
  if (cfg.embedder != "builtin" && cfg.embedder != "bridge") {
    throw Error(ErrorCode::InvalidArgument, "unknown embedder '" + cfg.embedder + "'");
  }
}

EmbedderFactory embedder_factory(const RunConfig& cfg) {
  if (cfg.embedder == "builtin") return [] { return std::make_unique<BuiltinLogMelEmbedder>(); };
  if (cfg.embedder == "bridge") {
    if (cfg.bridge_command.empty()) throw Error(ErrorCode::InvalidArgument, "bridge embedder needs a command");
    return [cmd = cfg.bridge_command] { return std::make_unique<BridgeEmbedder>(cmd); };
  }
  throw Error(ErrorCode::InvalidArgument, "unknown embedder '" + cfg.embedder + "'");
}

nlohmann::json to_json(const ApaReport& report) {
  return {{"schema", kApaReportSchema},
          {"config", summary_json(report.config)},
          {"fingerprint", report.fingerprint},
          {"result", result_json(report.result)},
          {"counts", counts_json(report.counts)},
          {"wall_clock_s", report.wall_clock_s},
          {"warnings", report.warnings}};
}

ApaReport apa_report_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("schema").get<std::string>() != kApaReportSchema) {
      throw Error(ErrorCode::InvalidArgument, "unexpected report schema " + doc.at("schema").dump());
    }
    ApaReport r;
    r.config = summary_from_json(doc.at("config"));
    r.fingerprint = doc.at("fingerprint").get<std::string>();
    r.result = result_from_json(doc.at("result"));
    r.counts = counts_from_json(doc.at("counts"));
    r.wall_clock_s = doc.at("wall_clock_s").get<double>();
    r.warnings = doc.at("warnings").get<std::vector<std::string>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed report: ") + e.what());
  }
}

EmbeddingSet embed_role(const Corpus& corpus, Role role, const RunConfig& cfg) {
  validate_config(cfg);
  Engine engine(cfg);
  const char* stream = role == Role::Candidate ? "candidate" : "reference";
  auto refs = sample_pair_refs(corpus, cfg.n_windows, cfg.window_duration_s, cfg.seed, stream, cfg.sampling);
  std::string name = stream;
  if (role == Role::Mismatched) {
    refs = mismatch_refs(corpus, refs, stream_seed(cfg.seed, "mismatch"));
    name = "mismatched";
  }
  return engine.embed(corpus.fingerprint, name, refs.size(), corpus_source(corpus, refs, cfg.window_duration_s));
}

ApaReport compute_apa(const Corpus& reference, const Corpus& candidate, const RunConfig& cfg) {
  const auto start = Clock::now();
  validate_config(cfg);
  Engine engine(cfg);
  std::vector<std::string> warnings;
  const Anchors anchors = build_anchors(engine, reference, cfg, warnings);
  const auto refs = sample_pair_refs(candidate, cfg.n_windows, cfg.window_duration_s, cfg.seed, "candidate",
                                     cfg.sampling, &warnings);
  const EmbeddingSet c = engine.embed(candidate.fingerprint, "candidate", refs.size(),
                                      corpus_source(candidate, refs, cfg.window_duration_s));
  return finish_report(cfg, engine, anchors, c, std::move(warnings), start);
}

ApaReport compute_apa(const Corpus& reference, const std::vector<WindowPair>& candidate, const RunConfig& cfg) {
  const auto start = Clock::now();
  validate_config(cfg);
  if (candidate.size() < 2) throw Error(ErrorCode::TooFewSamples, "candidate set needs at least 2 pairs");
  Engine engine(cfg);
  std::vector<std::string> warnings;
  const Anchors anchors = build_anchors(engine, reference, cfg, warnings);
  const EmbeddingSet c = engine.embed(hex(hash_pairs(candidate)), "candidate-pairs", candidate.size(),
                                      [&candidate](std::size_t i) { return candidate[i]; });
  return finish_report(cfg, engine, anchors, c, std::move(warnings), start);
}

ApaReport compute_apa(const PairManifest& reference, const PairManifest& candidate, const RunConfig& cfg) {
  return compute_apa(load_corpus(reference), load_corpus(candidate), cfg);
}

Window apply_transform(const Transform& t, const Window& stem, std::uint64_t seed, std::size_t index) {
  Rng rng = make_rng(seed, "transform:" + t.label, index);
  switch (t.kind) {
    case TransformKind::True:
      return stem;
    case TransformKind::Noise:
      return add_noise(stem, rng(), t.noise_offset_db);
    case TransformKind::TimeShift:
      return time_shift(stem, draw_shift(t, stem, rng));
    case TransformKind::PitchShift:
      return pitch_shift(stem, draw_semitones(t, rng));
    case TransformKind::TimePitchShift: {
      const int semitones = draw_semitones(t, rng);
      return time_pitch_shift(stem, draw_shift(t, stem, rng), semitones);
    }
    case TransformKind::External:
      return external_transform(stem, t.command);
    case TransformKind::Substitute:
      break;
  }
  throw Error(ErrorCode::InvalidArgument, "transform " + t.label + " acts on whole sets, not single stems");
}

ValidationReport run_validation(const Corpus& corpus, const std::vector<Transform>& transforms,
                                const std::vector<RunConfig>& grid) {
  if (transforms.empty()) throw Error(ErrorCode::EmptyInput, "no transforms to validate");
  if (grid.empty()) throw Error(ErrorCode::EmptyInput, "no configurations to validate");
  const auto start = Clock::now();
  for (const auto& cfg : grid) validate_config(cfg);

  ValidationReport report;
  std::map<std::string, EmbeddingSet> memo;
  std::string fingerprints;
  for (const RunConfig& cfg : grid) {
    Engine engine(cfg, &memo);
    ConfigResult cr;
    cr.config = summarize(cfg, engine.spec());
    cr.config_id = config_id(cr.config);

    const Anchors anchors = build_anchors(engine, corpus, cfg, cr.warnings);
    if (!(frechet_distance(anchors.r, anchors.r_prime) > kAnchorEpsilon)) {
      throw Error(ErrorCode::DegenerateAnchor, cr.config_id + ": reference and mismatched sets coincide");
    }
    cr.counts.reference = anchors.reference.count();
    cr.counts.mismatched = anchors.mismatched.count();
    cr.counts.context_fallbacks = anchors.reference.context_fallbacks + anchors.mismatched.context_fallbacks;
    cr.counts.stem_fallbacks = anchors.reference.stem_fallbacks + anchors.mismatched.stem_fallbacks;
    fingerprints += anchors.reference.source_fingerprint + anchors.mismatched.source_fingerprint;

    const auto base = sample_pair_refs(corpus, cfg.n_windows, cfg.window_duration_s, cfg.seed, "candidate",
                                       cfg.sampling, &cr.warnings);
    std::vector<double> invariant;
    std::vector<double> noninvariant;
    for (const Transform& t : transforms) {
      TransformRow row{t.label, t.invariant_class, std::nullopt, {}};
      try {
        EmbeddingSet c;
        const std::string role = "candidate:" + transform_key(t);
        if (t.kind == TransformKind::Substitute) {
          const auto subs = mismatch_refs(corpus, base, stream_seed(cfg.seed, "transform:" + t.label));
          c = engine.embed(corpus.fingerprint, role, subs.size(), corpus_source(corpus, subs, cfg.window_duration_s));
        } else {
          c = engine.embed(corpus.fingerprint, role, base.size(),
                           [&corpus, &base, &t, &cfg](std::size_t i) {
                             WindowPair p = materialize(corpus, base[i], cfg.window_duration_s);
                             p.stem = apply_transform(t, p.stem, cfg.seed, i);
                             return p;
                           });
        }
        row.result = score_candidate(anchors, c);
        cr.counts.candidate += c.count();
        cr.counts.context_fallbacks += c.context_fallbacks;
        cr.counts.stem_fallbacks += c.stem_fallbacks;
        add_fallback_warnings(c, t.label, cr.warnings);
        note_clipping(*row.result, t.label, cr.warnings);
        fingerprints += c.source_fingerprint;
        (t.invariant_class ? invariant : noninvariant).push_back(row.result->apa);
      } catch (const Error& e) {
        row.error = e.what();
        cr.warnings.push_back(t.label + " failed: " + e.what());
      }
      cr.rows.push_back(std::move(row));
    }
    if (!invariant.empty() && !noninvariant.empty()) cr.cles = cles(invariant, noninvariant);
    for (auto& w : engine.warnings()) cr.warnings.push_back(w);
    fingerprints += std::string(to_string(cfg.projection));
    report.configs.push_back(std::move(cr));
  }
  report.fingerprint = hex(fnv1a(fingerprints));
  report.wall_clock_s = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

std::string config_id(const ConfigSummary& config) {
  return config.regime + "-" + config.projection + "-" + config.embedder_id;
}

std::string to_csv(const ValidationReport& report) {
  std::string out = "config_id,regime,projection,embedder,transform,invariant_class,apa,fad_cr,fad_crp,fad_rrp,clipped\n";
  for (const auto& cr : report.configs) {
    for (const auto& row : cr.rows) {
      out += csv_field(cr.config_id) + ',' + csv_field(cr.config.regime) + ',' + csv_field(cr.config.projection) +
             ',' + csv_field(cr.config.embedder_id) + ',' + csv_field(row.transform) + ',' +
             (row.invariant_class ? "invariant" : "non-invariant") + ',';
      if (row.result) {
        const ApaResult& r = *row.result;
        out += fmt_double(r.apa) + ',' + fmt_double(r.fad_cr) + ',' + fmt_double(r.fad_crp) + ',' +
               fmt_double(r.fad_rrp) + ',' + (r.clipped ? "true" : "false");
      } else {
        out += ",,,,";
      }
      out += '\n';
    }
  }
  return out;
}

nlohmann::json to_json(const ValidationReport& report) {
  nlohmann::json configs = nlohmann::json::array();
  for (const auto& cr : report.configs) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : cr.rows) {
      rows.push_back({{"transform", row.transform},
                      {"invariant_class", row.invariant_class},
                      {"result", row.result ? result_json(*row.result) : nlohmann::json(nullptr)},
                      {"error", row.error}});
    }
    configs.push_back({{"config_id", cr.config_id},
                       {"config", summary_json(cr.config)},
                       {"cles", cr.cles ? nlohmann::json(*cr.cles) : nlohmann::json(nullptr)},
                       {"counts", counts_json(cr.counts)},
                       {"warnings", cr.warnings},
                       {"rows", rows}});
  }
  return {{"schema", "apa-validation/1"},
          {"fingerprint", report.fingerprint},
          {"wall_clock_s", report.wall_clock_s},
          {"configs", configs}};
}

std::filesystem::path default_cache_dir() {
  if (const char* dir = std::getenv("APA_CACHE_DIR"); dir && *dir) return dir;
  if (const char* xdg = std::getenv("XDG_CACHE_HOME"); xdg && *xdg) return std::filesystem::path(xdg) / "apa";
  if (const char* home = std::getenv("HOME"); home && *home) return std::filesystem::path(home) / ".cache" / "apa";
  return std::filesystem::temp_directory_path() / "apa-cache";
}

}  // namespace apa
