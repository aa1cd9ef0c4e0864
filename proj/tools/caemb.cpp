// caemb: count-based word embeddings from co-occurrence matrices.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "caemb/caemb.hpp"

namespace fs = std::filesystem;
using namespace caemb;

namespace {

void add_rule_flags(CLI::App* cmd, TokenizeRules& r) {
  cmd->add_flag("--lowercase,!--no-lowercase", r.lowercase, "Lowercase tokens (default on)");
  cmd->add_flag("--strip-punct,!--no-strip-punct", r.strip_punct, "Delete ASCII punctuation (default on)");
  cmd->add_flag("--strip-digits,!--no-strip-digits", r.strip_digits, "Delete ASCII digits (default on)");
  cmd->add_flag("--segment-lines", r.segment_lines, "Windows do not cross line breaks");
}

Vocabulary load_vocab(const std::string& path, const std::optional<TokenizeRules>& rules = std::nullopt) {
  auto v = Vocabulary::from_tsv(read_file(path));
  if (!rules) return v;
  return Vocabulary(v.terms(), v.counts(), rules->id());
}

FactorizationFiles factor_files(const std::string& prefix) {
  return {read_file(prefix + ".sigma.tsv"), read_file(prefix + ".U.tsv"), read_file(prefix + ".V.tsv")};
}

template <typename T>
std::vector<T> parse_grid(const std::string& text) {
  std::vector<T> out;
  for (auto part : split(text, ',')) {
    if (part.empty()) continue;
    T v{};
    bool ok;
    if constexpr (std::is_floating_point_v<T>)
      ok = parse_double(part, v);
    else
      ok = parse_int(part, v);
    if (!ok) throw ConfigError("bad grid value '" + std::string(part) + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("grid is empty");
  return out;
}

void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-")
    std::cout << content;
  else
    write_file(path, content);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Word embeddings by correspondence analysis and PMI"};
  app.require_subcommand(1);

  // vocab
  TokenizeRules vocab_rules;
  std::string vocab_corpus, vocab_out;
  std::uint64_t min_count = 100;
  auto* vocab = app.add_subcommand("vocab", "Build a vocabulary from a raw corpus");
  vocab->add_option("--corpus", vocab_corpus, "Corpus text file")->required()->check(CLI::ExistingFile);
  vocab->add_option("--out", vocab_out, "Output TSV (default stdout)");
  vocab->add_option("--min-count", min_count, "Minimum term frequency")->capture_default_str();
  add_rule_flags(vocab, vocab_rules);

  // cooccur
  TokenizeRules co_rules;
  CountOptions co_opt;
  std::string co_corpus, co_vocab, co_out, co_weighting = "harmonic", co_oov = "delete";
  auto* cooccur = app.add_subcommand("cooccur", "Count windowed co-occurrences");
  cooccur->add_option("--corpus", co_corpus, "Corpus text file")->required()->check(CLI::ExistingFile);
  cooccur->add_option("--vocab", co_vocab, "Vocabulary TSV")->required()->check(CLI::ExistingFile);
  cooccur->add_option("--out", co_out, "Output triplet file (default stdout)");
  cooccur->add_option("--window", co_opt.window, "Symmetric window size")->capture_default_str();
  cooccur->add_option("--weighting", co_weighting, "harmonic or uniform")->capture_default_str();
  cooccur->add_option("--oov", co_oov, "delete or hold-position")->capture_default_str();
  cooccur->add_option("--threads", co_opt.threads, "Worker threads (0 = hardware)");
  add_rule_flags(cooccur, co_rules);

  // transform
  std::string tr_in, tr_out, tr_spec;
  auto* transform = app.add_subcommand("transform", "Transform a count matrix");
  transform->add_option("--cooccur", tr_in, "Co-occurrence triplet file")->required()->check(CLI::ExistingFile);
  transform->add_option("--transform", tr_spec, "TTEST, PMI, PPMI, WPMI, STRATOS or POWER_CA:<delta>")->required();
  transform->add_option("--out", tr_out, "Output triplet file (default stdout)");

  // factorize
  std::string fa_matrix, fa_prefix, fa_emb, fa_vocab, fa_coords = "alternative";
  Eigen::Index fa_k = 0;
  double fa_p = 0;
  std::uint64_t fa_seed = 0;
  bool fa_gsvd = false;
  auto* factorize = app.add_subcommand("factorize", "Truncated SVD of a transformed matrix");
  factorize->add_option("--matrix", fa_matrix, "Transformed matrix file")->required()->check(CLI::ExistingFile);
  factorize->add_option("--k", fa_k, "Number of components")->required();
  factorize->add_option("--seed", fa_seed, "Random seed")->capture_default_str();
  factorize->add_option("--out-prefix", fa_prefix, "Writes <prefix>.sigma.tsv, .U.tsv, .V.tsv")->required();
  factorize->add_flag("--gsvd", fa_gsvd, "Decompose a PMI matrix as PMI-GSVD");
  factorize->add_option("--embeddings", fa_emb, "Also write an embedding file");
  factorize->add_option("--vocab", fa_vocab, "Vocabulary TSV (needed with --embeddings)");
  factorize->add_option("--p", fa_p, "Singular value exponent")->capture_default_str();
  factorize->add_option("--coords", fa_coords, "alternative, standard or principal")->capture_default_str();

  // evaluate
  std::string ev_vocab, ev_factor, ev_matrix, ev_datasets, ev_kgrid, ev_pgrid = "0", ev_out;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Spearman correlation on word-similarity datasets");
  evaluate_cmd->add_option("--vocab", ev_vocab, "Vocabulary TSV")->required()->check(CLI::ExistingFile);
  auto* ev_f = evaluate_cmd->add_option("--factor", ev_factor, "Factorization prefix");
  auto* ev_m = evaluate_cmd->add_option("--matrix", ev_matrix, "Transformed matrix, rows used without SVD");
  ev_f->excludes(ev_m);
  evaluate_cmd->add_option("--datasets", ev_datasets, "Comma-separated dataset files")->required();
  evaluate_cmd->add_option("--k-grid", ev_kgrid, "Comma-separated k values (default: all computed)");
  evaluate_cmd->add_option("--p-grid", ev_pgrid, "Comma-separated p values")->capture_default_str();
  evaluate_cmd->add_option("--out", ev_out, "Report TSV (default stdout)");

  // diagnose
  std::string dg_matrix, dg_mask, dg_vocab, dg_factor, dg_rule = "linear", dg_out = ".";
  std::size_t dg_top = 10;
  Eigen::Index dg_dims = 100;
  auto* diagnose = app.add_subcommand("diagnose", "Tukey fences and dimension contributions");
  diagnose->add_option("--matrix", dg_matrix, "Transformed matrix file")->required()->check(CLI::ExistingFile);
  diagnose->add_option("--mask", dg_mask, "Co-occurrence file restricting cells")->check(CLI::ExistingFile);
  diagnose->add_option("--vocab", dg_vocab, "Vocabulary TSV (for contribution output)");
  diagnose->add_option("--factor", dg_factor, "Factorization prefix (for contribution output)");
  diagnose->add_option("--top", dg_top, "Number of extreme entries and rows")->capture_default_str();
  diagnose->add_option("--dims", dg_dims, "Dimensions in the contribution output")->capture_default_str();
  diagnose->add_option("--rule", dg_rule, "Quartile rule: linear or nearest-rank")->capture_default_str();
  diagnose->add_option("--out-dir", dg_out, "Output directory")->capture_default_str();

  // pipeline
  std::string pl_config;
  std::vector<std::string> pl_sets;
  auto* pipeline = app.add_subcommand("pipeline", "Run an experiment from a config file");
  pipeline->add_option("--config", pl_config, "key = value config file")->required()->check(CLI::ExistingFile);
  pipeline->add_option("--set", pl_sets, "Override a config key (key=value)");

  // summary
  std::string su_reports, su_out;
  auto* summary = app.add_subcommand("summary", "Best-k summary of report files");
  summary->add_option("--reports", su_reports, "Report TSV")->required()->check(CLI::ExistingFile);
  summary->add_option("--out", su_out, "Summary TSV (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*vocab) {
      auto stream = tokenize(read_file(vocab_corpus), vocab_rules);
      emit(vocab_out, build_vocabulary(stream, min_count).to_tsv());
    } else if (*cooccur) {
      co_opt.weighting = parse_weighting(co_weighting);
      co_opt.oov = parse_oov_policy(co_oov);
      auto stream = tokenize(read_file(co_corpus), co_rules);
      emit(co_out, count_cooccurrences(stream, load_vocab(co_vocab, co_rules), co_opt).to_triplets());
    } else if (*transform) {
      auto counts = CooccurrenceMatrix::from_triplets(read_file(tr_in));
      emit(tr_out, apply_transform(drop_empty(counts), parse_transform(tr_spec)).to_triplets());
    } else if (*factorize) {
      auto m = TransformedMatrix::from_triplets(read_file(fa_matrix));
      Factorization f = fa_gsvd ? gsvd_factorize(m, fa_k, fa_seed) : truncated_svd(m, fa_k, fa_seed);
      for (const auto& w : f.warnings) std::cerr << "warning: " << w << '\n';
      auto files = write_factorization(f);
      write_file(fa_prefix + ".sigma.tsv", files.sigma);
      write_file(fa_prefix + ".U.tsv", files.u);
      write_file(fa_prefix + ".V.tsv", files.v);
      if (!fa_emb.empty()) {
        if (fa_vocab.empty()) throw ConfigError("--embeddings needs --vocab");
        auto e = embeddings(f, EmbeddingSpec(fa_k, fa_p), Side::target, parse_coordinates(fa_coords));
        write_file(fa_emb, write_embeddings(e, load_vocab(fa_vocab)));
      }
    } else if (*evaluate_cmd) {
      if (ev_factor.empty() && ev_matrix.empty()) throw ConfigError("one of --factor or --matrix is required");
      const Vocabulary v = load_vocab(ev_vocab);
      std::vector<SimilarityDataset> sets;
      for (auto path : split(ev_datasets, ','))
        if (!path.empty()) sets.push_back(load_dataset(std::string(path)));
      std::vector<EvalReport> reports;
      if (!ev_matrix.empty()) {
        auto m = TransformedMatrix::from_triplets(read_file(ev_matrix));
        MatrixRowSimilarity sim(m, v.size());
        for (const auto& d : sets) reports.push_back(evaluate(sim, d, v, m.spec.matrix_label(), 0, 0));
      } else {
        Factorization f = read_factorization(factor_files(ev_factor));
        std::vector<Eigen::Index> ks = ev_kgrid.empty() ? default_dimension_grid(f.k_max())
                                                        : parse_grid<Eigen::Index>(ev_kgrid);
        auto ps = parse_grid<double>(ev_pgrid);
        for (const auto& d : sets)
          for (auto k : ks)
            for (auto p : ps) reports.push_back(evaluate(embeddings(f, EmbeddingSpec(k, p)), d, v, f.label(), k));
      }
      emit(ev_out, write_reports(reports));
    } else if (*diagnose) {
      auto m = TransformedMatrix::from_triplets(read_file(dg_matrix));
      const QuartileRule rule = parse_quartile_rule(dg_rule);
      SparseMatrix mask;
      if (!dg_mask.empty()) mask = CooccurrenceMatrix::from_triplets(read_file(dg_mask)).entries();
      FenceReport fr = dg_mask.empty() ? tukey_fences(m, m.stored, dg_top, rule) : tukey_fences(m, mask, dg_top, rule);
      fs::create_directories(dg_out);
      write_file((fs::path(dg_out) / "fences.tsv").string(), fence_header() + fence_line(m.spec.matrix_label(), fr));
      if (!dg_factor.empty()) {
        if (dg_vocab.empty()) throw ConfigError("--factor needs --vocab");
        Factorization f = read_factorization(factor_files(dg_factor));
        auto rows = top_extreme_rows(fr, dg_top);
        auto dc = dimension_contributions(f, rows, std::min(dg_dims, f.k_max()));
        write_file((fs::path(dg_out) / "contributions.tsv").string(),
                   write_dimension_contributions(dc, load_vocab(dg_vocab)));
      }
    } else if (*pipeline) {
      ExperimentConfig cfg = load_config(pl_config);
      for (const auto& kv : pl_sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        apply_setting(cfg, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)),
                      fs::current_path().string());
      }
      RunResult r = run_pipeline(cfg);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
      std::cerr << r.manifest.entries.size() << " artifacts, " << r.reports.size() << " reports, "
                << r.cached_steps.size() << " cached steps\n";
      if (!r.reports.empty()) std::cout << emit_summary(r.reports);
    } else if (*summary) {
      emit(su_out, emit_summary(read_reports(read_file(su_reports))));
    }
  } catch (const PipelineError& e) {
    std::cerr << "error: " << e.what() << '\n' << e.partial_manifest().to_tsv();
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
