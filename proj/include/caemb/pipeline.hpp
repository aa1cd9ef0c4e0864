#pragma once

// End-to-end experiment runner: corpus -> vocabulary -> co-occurrence counts
// -> transforms -> truncated SVD -> word-similarity reports and diagnostics,
// with content-hashed artifacts and per-stage caching.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "caemb/cooccur.hpp"
#include "caemb/corpus.hpp"
#include "caemb/diagnostics.hpp"
#include "caemb/eval.hpp"
#include "caemb/factorize.hpp"
#include "caemb/transforms.hpp"

namespace caemb {

namespace fs = std::filesystem;

inline constexpr const char* kCacheEnv = "CAEMB_CACHE_DIR";

struct ExperimentConfig {
  std::string corpus;
  TokenizeRules rules;
  std::uint64_t min_count = 100;
  CountOptions counting;
  std::vector<TransformSpec> transforms;
  bool gsvd = false;     // also run PMI-GSVD from the PMI matrix
  bool no_svd = false;   // also evaluate the matrix rows without reduction
  bool diagnostics = true;
  std::vector<Eigen::Index> k_grid;
  std::vector<double> p_grid{0.0};
  std::vector<std::string> datasets;
  std::string output;
  std::string cache;  // empty: $CAEMB_CACHE_DIR, else <output>/.cache
  std::uint64_t seed = 0;
  std::size_t top = 10;
  Eigen::Index contribution_dims = 100;
  QuartileRule quartiles = QuartileRule::linear;

  void validate() const {
    if (corpus.empty()) throw ConfigError("config: corpus is required");
    if (!fs::exists(corpus)) throw ConfigError("config: corpus '" + corpus + "' does not exist");
    for (const auto& d : datasets)
      if (!fs::exists(d)) throw ConfigError("config: dataset '" + d + "' does not exist");
    if (output.empty()) throw ConfigError("config: output directory is required");
    if (transforms.empty()) throw ConfigError("config: transform list is empty");
    if (k_grid.empty()) throw ConfigError("config: k grid is empty");
    if (p_grid.empty()) throw ConfigError("config: p grid is empty");
    for (auto k : k_grid)
      if (k < 1) throw ConfigError("config: k grid values must be >= 1");
    for (auto p : p_grid)
      if (!(p >= 0)) throw ConfigError("config: p grid values must be >= 0");
    if (min_count < 1) throw ConfigError("config: min_count must be >= 1");
    if (counting.window < 1) throw ConfigError("config: window must be >= 1");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

inline std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  for (auto part : split(v, ',')) {
    auto t = trim(part);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

inline std::string resolve(const std::string& base, const std::string& path) {
  if (path.empty() || base.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base) / path).lexically_normal().string();
}

}  // namespace detail

// Applies one `key = value` setting. Paths are resolved against `base_dir`.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value,
                          const std::string& base_dir = {}) {
  auto num = [&](auto& out) {
    if (!parse_int(value, out)) throw ConfigError("config: '" + key + "' expects an integer, got '" + value + "'");
  };
  if (key == "corpus") cfg.corpus = detail::resolve(base_dir, value);
  else if (key == "lowercase") cfg.rules.lowercase = detail::parse_bool(key, value);
  else if (key == "strip_punct") cfg.rules.strip_punct = detail::parse_bool(key, value);
  else if (key == "strip_digits") cfg.rules.strip_digits = detail::parse_bool(key, value);
  else if (key == "segment_lines") cfg.rules.segment_lines = detail::parse_bool(key, value);
  else if (key == "min_count") num(cfg.min_count);
  else if (key == "window") num(cfg.counting.window);
  else if (key == "weighting") cfg.counting.weighting = parse_weighting(value);
  else if (key == "oov") cfg.counting.oov = parse_oov_policy(value);
  else if (key == "transforms") {
    cfg.transforms.clear();
    for (const auto& t : detail::parse_list(value)) cfg.transforms.push_back(parse_transform(t));
  } else if (key == "gsvd") cfg.gsvd = detail::parse_bool(key, value);
  else if (key == "no_svd") cfg.no_svd = detail::parse_bool(key, value);
  else if (key == "diagnostics") cfg.diagnostics = detail::parse_bool(key, value);
  else if (key == "k_grid") {
    cfg.k_grid.clear();
    for (const auto& t : detail::parse_list(value)) {
      Eigen::Index k = 0;
      if (!parse_int(t, k)) throw ConfigError("config: bad k '" + t + "'");
      cfg.k_grid.push_back(k);
    }
  } else if (key == "p_grid") {
    cfg.p_grid.clear();
    for (const auto& t : detail::parse_list(value)) {
      double p = 0;
      if (!parse_double(t, p)) throw ConfigError("config: bad p '" + t + "'");
      cfg.p_grid.push_back(p);
    }
  } else if (key == "datasets") {
    cfg.datasets.clear();
    for (const auto& t : detail::parse_list(value)) cfg.datasets.push_back(detail::resolve(base_dir, t));
  } else if (key == "output") cfg.output = detail::resolve(base_dir, value);
  else if (key == "cache") cfg.cache = detail::resolve(base_dir, value);
  else if (key == "seed") num(cfg.seed);
  else if (key == "top") num(cfg.top);
  else if (key == "contribution_dims") num(cfg.contribution_dims);
  else if (key == "quartiles") cfg.quartiles = parse_quartile_rule(value);
  else throw ConfigError("config: unknown key '" + key + "'");
}

// Plain `key = value` lines; '#' starts a comment.
inline ExperimentConfig parse_config(std::string_view text, const std::string& base_dir = {}) {
  ExperimentConfig cfg;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto t = detail::trim(line);
    if (t.empty()) return;
    auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected key = value");
    try {
      apply_setting(cfg, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)), base_dir);
    } catch (const ConfigError& e) {
      throw ParseError(line_no, e.what());
    }
  });
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  return parse_config(read_file(path), fs::path(path).parent_path().string());
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string file;  // relative to the output directory
  std::string step;
  std::string params;
  std::string hash;  // sha256 of the file content
};

struct RunManifest {
  std::vector<ManifestEntry> entries;

  std::string to_tsv() const {
    std::string out = "file\tstep\tparams\tsha256\n";
    for (const auto& e : entries) out += e.file + '\t' + e.step + '\t' + e.params + '\t' + e.hash + '\n';
    return out;
  }

  const ManifestEntry* find(std::string_view file) const {
    for (const auto& e : entries)
      if (e.file == file) return &e;
    return nullptr;
  }
};

class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const std::string& what, RunManifest partial)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)), partial_(std::move(partial)) {}
  const std::string& stage() const noexcept { return stage_; }
  const RunManifest& partial_manifest() const noexcept { return partial_; }

 private:
  std::string stage_;
  RunManifest partial_;
};

struct RunResult {
  RunManifest manifest;
  std::vector<EvalReport> reports;
  // Steps served from the cache in this run.
  std::vector<std::string> cached_steps;
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// Summary
// ---------------------------------------------------------------------------

// Best-k row per (dataset, method, p) and a Total block summing the best rho
// over datasets. Ties in rho pick the smaller k.
inline std::string emit_summary(const std::vector<EvalReport>& reports) {
  struct Key {
    std::string dataset, method;
    double p;
    bool operator<(const Key& o) const {
      return std::tie(dataset, method, p) < std::tie(o.dataset, o.method, o.p);
    }
  };
  std::map<Key, const EvalReport*> best;
  for (const auto& r : reports) {
    Key key{r.dataset, r.method, r.p};
    auto it = best.find(key);
    if (it == best.end() || r.rho > it->second->rho || (r.rho == it->second->rho && r.k < it->second->k))
      best[key] = &r;
  }
  std::string out = "block\tmethod\tp\tk\trho\n";
  std::map<std::pair<std::string, double>, double> totals;
  for (const auto& [key, r] : best) {
    out += key.dataset + '\t' + key.method + '\t' + format_double(key.p) + '\t' + std::to_string(r->k) + '\t' +
           format_double(r->rho) + '\n';
    totals[{key.method, key.p}] += r->rho;
  }
  for (const auto& [mp, total] : totals)
    out += "Total\t" + mp.first + '\t' + format_double(mp.second) + "\t\t" + format_double(total) + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

namespace detail {

class StageRunner {
 public:
  StageRunner(fs::path out, fs::path cache, RunResult& result) : out_(std::move(out)), cache_(std::move(cache)), result_(result) {
    fs::create_directories(out_);
    fs::create_directories(cache_);
  }

  // Runs `produce` unless a cache record for (step, params, inputs) exists
  // and every listed output is present with the recorded hash. `produce`
  // returns (relative file, content) pairs.
  template <typename Produce>
  std::vector<std::string> stage(const std::string& step, const std::string& params,
                                 const std::vector<std::string>& input_hashes, Produce&& produce) {
    std::string key_src = step + '\n' + params + '\n';
    for (const auto& h : input_hashes) key_src += h + '\n';
    const std::string key = sha256_hex(key_src);
    const fs::path record = cache_ / (key + ".tsv");

    try {
      if (auto hit = lookup(record)) {
        result_.cached_steps.push_back(step);
        std::vector<std::string> hashes;
        for (const auto& [file, hash] : *hit) {
          result_.manifest.entries.push_back({file, step, params, hash});
          hashes.push_back(hash);
        }
        return hashes;
      }
      std::vector<std::pair<std::string, std::string>> files = produce();
      std::string rec;
      std::vector<std::string> hashes;
      for (const auto& [file, content] : files) {
        const std::string hash = sha256_hex(content);
        write_file((out_ / file).string(), content);
        result_.manifest.entries.push_back({file, step, params, hash});
        rec += file + '\t' + hash + '\n';
        hashes.push_back(hash);
      }
      write_file(record.string(), rec);
      return hashes;
    } catch (const PipelineError&) {
      throw;
    } catch (const std::exception& e) {
      throw PipelineError(step, e.what(), result_.manifest);
    }
  }

  std::string read(const std::string& file) const { return read_file((out_ / file).string()); }

 private:
  std::optional<std::vector<std::pair<std::string, std::string>>> lookup(const fs::path& record) const {
    if (!fs::exists(record)) return std::nullopt;
    std::vector<std::pair<std::string, std::string>> files;
    bool ok = true;
    for_each_line(read_file(record.string()), [&](std::size_t, std::string_view line) {
      if (line.empty()) return;
      auto f = split(line, '\t');
      if (f.size() != 2) {
        ok = false;
        return;
      }
      files.emplace_back(std::string(f[0]), std::string(f[1]));
    });
    if (!ok || files.empty()) return std::nullopt;
    for (const auto& [file, hash] : files) {
      const fs::path p = out_ / file;
      if (!fs::exists(p) || sha256_hex(read_file(p.string())) != hash) return std::nullopt;
    }
    return files;
  }

  fs::path out_;
  fs::path cache_;
  RunResult& result_;
};

inline std::string slug(std::string s) {
  for (auto& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.')) c = '_';
  return s;
}

inline std::string rules_params(const TokenizeRules& r) {
  return r.id() + ";segment_lines=" + (r.segment_lines ? "1" : "0");
}

}  // namespace detail

inline RunResult run_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  RunResult result;
  fs::path out(cfg.output);
  fs::path cache = !cfg.cache.empty() ? fs::path(cfg.cache)
                   : std::getenv(kCacheEnv) ? fs::path(std::getenv(kCacheEnv))
                                            : out / ".cache";
  detail::StageRunner runner(out, cache, result);

  // Stage inputs are identified by content, never by path.
  std::string corpus_text;
  std::string corpus_hash;
  try {
    corpus_text = read_file(cfg.corpus);
    corpus_hash = sha256_hex(corpus_text);
  } catch (const std::exception& e) {
    throw PipelineError("read-corpus", e.what(), result.manifest);
  }
  std::optional<TokenStream> stream;
  auto get_stream = [&]() -> const TokenStream& {
    if (!stream) stream = tokenize(corpus_text, cfg.rules);
    return *stream;
  };

  // Vocabulary.
  const std::string vocab_params = detail::rules_params(cfg.rules) + ";min_count=" + std::to_string(cfg.min_count);
  auto vocab_hash = runner.stage("vocab", vocab_params, {corpus_hash}, [&] {
    return std::vector<std::pair<std::string, std::string>>{
        {"vocab.tsv", build_vocabulary(get_stream(), cfg.min_count).to_tsv()}};
  })[0];
  const Vocabulary vocab = [&] {
    auto v = Vocabulary::from_tsv(runner.read("vocab.tsv"));
    return Vocabulary(v.terms(), v.counts(), cfg.rules.id());
  }();

  // Co-occurrence counts.
  const std::string count_params = detail::rules_params(cfg.rules) + ";window=" + std::to_string(cfg.counting.window) +
                                   ";weighting=" + to_string(cfg.counting.weighting) +
                                   ";oov=" + to_string(cfg.counting.oov);
  auto cooccur_hash = runner.stage("cooccur", count_params, {corpus_hash, vocab_hash}, [&] {
    return std::vector<std::pair<std::string, std::string>>{
        {"cooccur.tsv", count_cooccurrences(get_stream(), vocab, cfg.counting).to_triplets()}};
  })[0];
  const CooccurrenceMatrix counts = CooccurrenceMatrix::from_triplets(runner.read("cooccur.tsv"));
  const CountTable table = drop_empty(counts);

  // Transforms.
  struct Transformed {
    TransformSpec spec;
    std::string file;
    std::string hash;
    TransformedMatrix matrix;
  };
  std::vector<Transformed> matrices;
  for (const auto& spec : cfg.transforms) {
    std::string file = "transform_" + detail::slug(spec.token()) + ".tsv";
    auto h = runner.stage("transform", "transform=" + spec.token(), {cooccur_hash}, [&] {
      return std::vector<std::pair<std::string, std::string>>{{file, apply_transform(table, spec).to_triplets()}};
    })[0];
    matrices.push_back({spec, file, h, TransformedMatrix::from_triplets(runner.read(file))});
  }

  // Factorizations at the largest requested k; smaller k reuse the leading
  // components.
  struct Factored {
    std::string label;
    Factorization f;
  };
  std::vector<Factored> factorizations;
  const Eigen::Index k_req = *std::max_element(cfg.k_grid.begin(), cfg.k_grid.end());
  auto factor_stage = [&](const std::string& label, const std::string& params, const std::string& input_hash,
                          auto&& compute) {
    const std::string base = "factor_" + detail::slug(label);
    runner.stage("factorize", params, {input_hash}, [&] {
      Factorization f = compute();
      for (const auto& w : f.warnings) result.warnings.push_back(label + ": " + w);
      auto files = write_factorization(f);
      return std::vector<std::pair<std::string, std::string>>{
          {base + ".sigma.tsv", files.sigma}, {base + ".U.tsv", files.u}, {base + ".V.tsv", files.v}};
    });
    Factorization f = read_factorization(
        {runner.read(base + ".sigma.tsv"), runner.read(base + ".U.tsv"), runner.read(base + ".V.tsv")});
    factorizations.push_back({label, std::move(f)});
  };
  for (const auto& m : matrices) {
    const Eigen::Index k = std::min({k_req, m.matrix.rows(), m.matrix.cols()});
    const std::string params = "transform=" + m.spec.token() + ";k=" + std::to_string(k) + ";seed=" + std::to_string(cfg.seed);
    factor_stage(m.spec.svd_label(), params, m.hash, [&] { return truncated_svd(m.matrix, k, cfg.seed); });
  }
  if (cfg.gsvd) {
    auto pmi = std::find_if(matrices.begin(), matrices.end(), [](const Transformed& t) { return t.spec.kind == TransformKind::pmi; });
    std::string pmi_hash;
    std::optional<TransformedMatrix> own;
    if (pmi == matrices.end()) {
      own = pmi_matrix(proportions(table));
      pmi_hash = sha256_hex(own->to_triplets());
    } else {
      pmi_hash = pmi->hash;
    }
    const TransformedMatrix& base = own ? *own : pmi->matrix;
    const Eigen::Index k = std::min({k_req, base.rows(), base.cols()});
    const std::string params = "gsvd=PMI;k=" + std::to_string(k) + ";seed=" + std::to_string(cfg.seed);
    factor_stage("PMI-GSVD", params, pmi_hash, [&] { return gsvd_factorize(base, k, cfg.seed); });
  }

  // Evaluation.
  std::vector<SimilarityDataset> datasets;
  std::vector<std::string> dataset_hashes;
  for (const auto& path : cfg.datasets) {
    try {
      datasets.push_back(load_dataset(path));
      dataset_hashes.push_back(sha256_hex(read_file(path)));
    } catch (const std::exception& e) {
      throw PipelineError("load-dataset", e.what(), result.manifest);
    }
  }
  if (!datasets.empty()) {
    std::vector<std::string> eval_inputs{vocab_hash};
    for (const auto& m : matrices) eval_inputs.push_back(m.hash);
    for (const auto& f : factorizations)
      for (const char* part : {".sigma.tsv", ".U.tsv", ".V.tsv"})
        if (const auto* e = result.manifest.find("factor_" + detail::slug(f.label) + part)) eval_inputs.push_back(e->hash);
    eval_inputs.insert(eval_inputs.end(), dataset_hashes.begin(), dataset_hashes.end());
    std::string grid = "k_grid=";
    for (auto k : cfg.k_grid) grid += std::to_string(k) + ',';
    grid += ";p_grid=";
    for (auto p : cfg.p_grid) grid += format_double(p) + ',';
    grid += ";no_svd=" + std::string(cfg.no_svd ? "1" : "0");

    runner.stage("evaluate", grid, eval_inputs, [&] {
      std::vector<EvalReport> reports;
      for (const auto& d : datasets) {
        if (cfg.no_svd)
          for (const auto& m : matrices)
            reports.push_back(evaluate(MatrixRowSimilarity(m.matrix, vocab.size()), d, vocab, m.spec.matrix_label(), 0, 0));
        for (const auto& fz : factorizations)
          for (auto k : cfg.k_grid) {
            if (k > fz.f.k_max()) continue;
            for (auto p : cfg.p_grid)
              reports.push_back(evaluate(embeddings(fz.f, EmbeddingSpec(k, p)), d, vocab, fz.label, k));
          }
      }
      return std::vector<std::pair<std::string, std::string>>{{"reports.tsv", write_reports(reports)},
                                                              {"summary.tsv", emit_summary(reports)}};
    });
    result.reports = read_reports(runner.read("reports.tsv"));
  }

  // Diagnostics: Tukey fences over the count support and row contributions
  // of the most extreme rows.
  if (cfg.diagnostics) {
    std::vector<std::string> inputs{cooccur_hash};
    for (const auto& m : matrices) inputs.push_back(m.hash);
    for (const auto& f : factorizations)
      if (const auto* e = result.manifest.find("factor_" + detail::slug(f.label) + ".U.tsv")) inputs.push_back(e->hash);
    const std::string params = "top=" + std::to_string(cfg.top) + ";dims=" + std::to_string(cfg.contribution_dims) +
                               ";quartiles=" + (cfg.quartiles == QuartileRule::linear ? "linear" : "nearest-rank");
    runner.stage("diagnose", params, inputs, [&] {
      std::vector<std::pair<std::string, std::string>> files;
      std::string fences = fence_header();
      for (std::size_t t = 0; t < matrices.size(); ++t) {
        const auto& m = matrices[t];
        FenceReport fr = tukey_fences(m.matrix, counts.entries(), cfg.top, cfg.quartiles);
        fences += fence_line(m.spec.matrix_label(), fr);
        const auto& fz = factorizations[t].f;
        auto rows = top_extreme_rows(fr, cfg.top);
        if (rows.empty()) continue;
        const Eigen::Index dims = std::min(cfg.contribution_dims, fz.k_max());
        files.emplace_back("contrib_" + detail::slug(factorizations[t].label) + ".tsv",
                           write_dimension_contributions(dimension_contributions(fz, rows, dims), vocab));
      }
      files.insert(files.begin(), {"fences.tsv", fences});
      return files;
    });
  }

  write_file((out / "manifest.tsv").string(), result.manifest.to_tsv());
  return result;
}

}  // namespace caemb
