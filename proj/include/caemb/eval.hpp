#pragma once

// Word-similarity evaluation: cosine similarities against human scores,
// compared by Spearman's rank correlation.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "caemb/corpus.hpp"
#include "caemb/factorize.hpp"
#include "caemb/transforms.hpp"

namespace caemb {

struct WordPair {
  std::string first;
  std::string second;
  double score = 0;
};

struct SimilarityDataset {
  std::string name;
  std::vector<WordPair> pairs;
  // Repeated unordered pairs found while loading; only the first is kept.
  std::size_t duplicates_dropped = 0;
};

// Records of `word1 word2 score`, whitespace or tab separated. A first line
// whose third field is not numeric is taken as a header. Lines starting with
// '#' are comments. Words are lowercased.
inline SimilarityDataset parse_dataset(std::string_view text, std::string name) {
  SimilarityDataset d;
  d.name = std::move(name);
  std::set<std::pair<std::string, std::string>> seen;
  bool first_record = true;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    auto fields = split_whitespace(line);
    if (fields.empty() || fields[0].front() == '#') return;
    double score = 0;
    bool numeric = fields.size() == 3 && parse_double(fields[2], score);
    if (first_record && !numeric && fields.size() >= 3) {
      first_record = false;
      return;
    }
    first_record = false;
    if (fields.size() != 3) throw ParseError(line_no, "expected 3 fields, found " + std::to_string(fields.size()));
    if (!numeric || !std::isfinite(score)) throw ParseError(line_no, "score is not a finite number");
    auto lower = [](std::string_view w) {
      std::string s(w);
      for (auto& c : s)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      return s;
    };
    WordPair p{lower(fields[0]), lower(fields[1]), score};
    auto key = std::minmax(p.first, p.second);
    if (!seen.emplace(key.first, key.second).second) {
      ++d.duplicates_dropped;
      return;
    }
    d.pairs.push_back(std::move(p));
  });
  return d;
}

inline SimilarityDataset load_dataset(const std::string& path, std::string name = {}) {
  if (name.empty()) {
    auto slash = path.find_last_of('/');
    name = slash == std::string::npos ? path : path.substr(slash + 1);
    if (auto dot = name.find_last_of('.'); dot != std::string::npos && dot > 0) name.resize(dot);
  }
  return parse_dataset(read_file(path), std::move(name));
}

// Pairs whose words are both in the vocabulary.
inline SimilarityDataset filter_oov(const SimilarityDataset& d, const Vocabulary& v) {
  SimilarityDataset out;
  out.name = d.name;
  out.duplicates_dropped = d.duplicates_dropped;
  for (const auto& p : d.pairs)
    if (v.contains(p.first) && v.contains(p.second)) out.pairs.push_back(p);
  return out;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("cosine of vectors with different lengths");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) throw UndefinedValueError("cosine similarity with a zero vector");
  double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return cosine(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
}

namespace detail {

// Twice the average rank (1-based) of each value; integers by construction.
inline std::vector<std::int64_t> doubled_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<std::int64_t> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    // Positions i..j (0-based) share the average rank (i + j)/2 + 1.
    const auto twice = static_cast<std::int64_t>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = twice;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

// Pearson correlation of average ranks. Sums are formed exactly in integer
// arithmetic over doubled ranks, so the result depends only on the rank
// vectors.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("spearman: lists differ in length");
  if (a.size() < 2) throw InsufficientDataError("spearman needs at least 2 observations");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw ConfigError("spearman: non-finite value");
  auto ra = detail::doubled_ranks(a), rb = detail::doubled_ranks(b);
  const auto n = static_cast<__int128>(a.size());
  __int128 sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sa += ra[i];
    sb += rb[i];
    saa += static_cast<__int128>(ra[i]) * ra[i];
    sbb += static_cast<__int128>(rb[i]) * rb[i];
    sab += static_cast<__int128>(ra[i]) * rb[i];
  }
  const __int128 cov = n * sab - sa * sb;
  const __int128 va = n * saa - sa * sa;
  const __int128 vb = n * sbb - sb * sb;
  if (va == 0 || vb == 0) throw UndefinedValueError("spearman: constant list has zero rank variance");
  const double rho = static_cast<double>(cov) / std::sqrt(static_cast<double>(va) * static_cast<double>(vb));
  return std::clamp(rho, -1.0, 1.0);
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return spearman(std::span<const double>(a), std::span<const double>(b));
}

// ---------------------------------------------------------------------------
// Similarity sources
// ---------------------------------------------------------------------------

// Cosines between rows of an embedding set, addressed by vocabulary index.
class EmbeddingSimilarity {
 public:
  EmbeddingSimilarity(const EmbeddingSet& e, std::size_t vocab_size) : e_(e), row_(vocab_size, -1) {
    for (std::size_t r = 0; r < e.ids.size(); ++r) {
      auto id = e.ids[r];
      if (id >= 0 && static_cast<std::size_t>(id) < vocab_size) row_[static_cast<std::size_t>(id)] = static_cast<Eigen::Index>(r);
    }
  }

  // Throws UndefinedValueError when either word has no (or a zero) vector.
  double operator()(std::size_t a, std::size_t b) const {
    auto ra = row_.at(a), rb = row_.at(b);
    if (ra < 0 || rb < 0) throw UndefinedValueError("word has no embedding row");
    Eigen::VectorXd va = e_.vectors.row(ra).transpose(), vb = e_.vectors.row(rb).transpose();
    return cosine(va, vb);
  }

 private:
  const EmbeddingSet& e_;
  std::vector<Eigen::Index> row_;
};

// Cosines between full rows of a transformed matrix (no dimensionality
// reduction).
class MatrixRowSimilarity {
 public:
  MatrixRowSimilarity(const TransformedMatrix& m, std::size_t vocab_size) : m_(m), row_(vocab_size, -1) {
    for (std::size_t r = 0; r < m.row_ids.size(); ++r) {
      auto id = m.row_ids[r];
      if (id >= 0 && static_cast<std::size_t>(id) < vocab_size) row_[static_cast<std::size_t>(id)] = static_cast<Eigen::Index>(r);
    }
  }

  double operator()(std::size_t a, std::size_t b) const {
    auto ra = row_.at(a), rb = row_.at(b);
    if (ra < 0 || rb < 0) throw UndefinedValueError("word has no matrix row");
    return cosine(dense_row(ra), dense_row(rb));
  }

  Eigen::VectorXd dense_row(Eigen::Index r) const {
    Eigen::VectorXd v(m_.cols());
    if (m_.has_offset)
      v = -m_.row_offset[r] * m_.col_offset;
    else
      v.setZero();
    for (SparseMatrix::InnerIterator it(m_.stored, r); it; ++it) v[it.col()] = it.value();
    return v;
  }

 private:
  const TransformedMatrix& m_;
  std::vector<Eigen::Index> row_;
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalReport {
  std::string dataset;
  std::string method;  // e.g. "ROOTROOT-CA" or "ROOT-TTEST"
  Eigen::Index k = 0;  // 0 when rows of the matrix are used without SVD
  double p = 0;
  std::size_t pairs_used = 0;
  // Pairs skipped because one of the words has a zero or missing vector.
  std::size_t zero_vector_pairs = 0;
  double rho = 0;
};

// Spearman's rho between model cosines and human scores over the in-vocabulary
// pairs of `d`. `similarity(i, j)` takes vocabulary indices.
template <typename Similarity>
EvalReport evaluate(const Similarity& similarity, const SimilarityDataset& d, const Vocabulary& v,
                    std::string method = {}, Eigen::Index k = 0, double p = 0) {
  EvalReport r;
  r.dataset = d.name;
  r.method = std::move(method);
  r.k = k;
  r.p = p;
  std::vector<double> model, human;
  for (const auto& pair : d.pairs) {
    auto a = v.find(pair.first), b = v.find(pair.second);
    if (!a || !b) continue;
    double c = 0;
    try {
      c = similarity(*a, *b);
    } catch (const UndefinedValueError&) {
      ++r.zero_vector_pairs;
      continue;
    }
    model.push_back(c);
    human.push_back(pair.score);
  }
  r.pairs_used = model.size();
  if (model.size() < 2)
    throw InsufficientDataError("dataset " + d.name + ": only " + std::to_string(model.size()) + " usable pairs");
  r.rho = spearman(model, human);
  return r;
}

inline EvalReport evaluate(const EmbeddingSet& e, const SimilarityDataset& d, const Vocabulary& v,
                           std::string method = {}, Eigen::Index k = -1) {
  return evaluate(EmbeddingSimilarity(e, v.size()), d, v, std::move(method), k < 0 ? e.k() : k, e.p);
}

inline std::string report_header() { return "dataset\ttransform\tk\tp\tpairs_used\trho\tzero_vector_pairs\n"; }

inline std::string report_line(const EvalReport& r) {
  return r.dataset + '\t' + r.method + '\t' + std::to_string(r.k) + '\t' + format_double(r.p) + '\t' +
         std::to_string(r.pairs_used) + '\t' + format_double(r.rho) + '\t' + std::to_string(r.zero_vector_pairs) + '\n';
}

inline std::string write_reports(const std::vector<EvalReport>& reports) {
  std::string out = report_header();
  for (const auto& r : reports) out += report_line(r);
  return out;
}

inline std::vector<EvalReport> read_reports(std::string_view text) {
  std::vector<EvalReport> out;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (line.empty() || line.substr(0, 8) == "dataset\t") return;
    auto f = split(line, '\t');
    if (f.size() < 6) throw ParseError(line_no, "expected at least 6 report columns");
    EvalReport r;
    r.dataset = std::string(f[0]);
    r.method = std::string(f[1]);
    if (!parse_int(f[2], r.k) || !parse_double(f[3], r.p) || !parse_int(f[4], r.pairs_used) || !parse_double(f[5], r.rho))
      throw ParseError(line_no, "malformed report row");
    if (f.size() > 6 && !parse_int(f[6], r.zero_vector_pairs)) throw ParseError(line_no, "malformed zero_vector_pairs");
    out.push_back(std::move(r));
  });
  return out;
}

}  // namespace caemb
