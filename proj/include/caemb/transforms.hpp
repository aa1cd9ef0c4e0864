#pragma once

// Matrices derived from a co-occurrence table: standardized residuals (TTEST,
// power-delta CA), PMI, PPMI, WPMI and the ROOT-CCA (STRATOS) matrix.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "caemb/cooccur.hpp"
#include "caemb/sparse_io.hpp"

namespace caemb {

using IndexList = std::vector<Eigen::Index>;

// Non-negative counts with a mapping from matrix rows/columns back to
// vocabulary indices.
struct CountTable {
  SparseMatrix counts;
  IndexList row_ids;
  IndexList col_ids;
};

inline IndexList identity_ids(Eigen::Index n) {
  IndexList ids(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
  return ids;
}

inline CountTable as_table(const CooccurrenceMatrix& x) {
  return {x.entries(), identity_ids(x.dim()), identity_ids(x.dim())};
}

inline CountTable as_table(SparseMatrix counts) {
  CountTable t{std::move(counts), {}, {}};
  // Explicit zeros would otherwise enter the support.
  t.counts.prune([](Eigen::Index, Eigen::Index, double v) { return v != 0.0; });
  t.counts.makeCompressed();
  t.row_ids = identity_ids(t.counts.rows());
  t.col_ids = identity_ids(t.counts.cols());
  return t;
}

// Removes rows and columns whose total is zero; row_ids/col_ids keep the
// original positions of the survivors.
inline CountTable drop_empty(const CountTable& in) {
  const SparseMatrix& x = in.counts;
  Eigen::VectorXd rs = Eigen::VectorXd::Zero(x.rows()), cs = Eigen::VectorXd::Zero(x.cols());
  for (Eigen::Index i = 0; i < x.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(x, i); it; ++it) {
      rs[i] += it.value();
      cs[it.col()] += it.value();
    }
  std::vector<Eigen::Index> row_new(static_cast<std::size_t>(x.rows()), -1), col_new(static_cast<std::size_t>(x.cols()), -1);
  CountTable out;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    if (rs[i] > 0) {
      row_new[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(out.row_ids.size());
      out.row_ids.push_back(in.row_ids[static_cast<std::size_t>(i)]);
    }
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    if (cs[j] > 0) {
      col_new[static_cast<std::size_t>(j)] = static_cast<Eigen::Index>(out.col_ids.size());
      out.col_ids.push_back(in.col_ids[static_cast<std::size_t>(j)]);
    }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(x.nonZeros()));
  for (Eigen::Index i = 0; i < x.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(x, i); it; ++it) {
      auto ni = row_new[static_cast<std::size_t>(i)], nj = col_new[static_cast<std::size_t>(it.col())];
      if (ni >= 0 && nj >= 0 && it.value() != 0.0) trips.emplace_back(static_cast<int>(ni), static_cast<int>(nj), it.value());
    }
  out.counts.resize(static_cast<Eigen::Index>(out.row_ids.size()), static_cast<Eigen::Index>(out.col_ids.size()));
  out.counts.setFromTriplets(trips.begin(), trips.end());
  out.counts.makeCompressed();
  return out;
}

inline CountTable drop_empty(const CooccurrenceMatrix& x) { return drop_empty(as_table(x)); }

// ---------------------------------------------------------------------------
// Proportions
// ---------------------------------------------------------------------------

struct ProportionTable {
  SparseMatrix p;               // p_ij = x_ij / x_++
  Eigen::VectorXd row_margins;  // p_i+
  Eigen::VectorXd col_margins;  // p_+j
  double grand_total = 0;       // x_++
  IndexList row_ids;
  IndexList col_ids;
};

inline ProportionTable proportions(const CountTable& table) {
  const SparseMatrix& x = table.counts;
  double total = 0;
  for (Eigen::Index i = 0; i < x.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(x, i); it; ++it) {
      if (it.value() < 0 || !std::isfinite(it.value()))
        throw DegenerateInputError("negative or non-finite count at (" + std::to_string(i) + ", " +
                                   std::to_string(it.col()) + ")");
      total += it.value();
    }
  if (!(total > 0)) throw DegenerateInputError("all-zero matrix has no proportions");

  ProportionTable t;
  t.grand_total = total;
  t.p = x / total;
  t.p.makeCompressed();
  t.row_margins = Eigen::VectorXd::Zero(x.rows());
  t.col_margins = Eigen::VectorXd::Zero(x.cols());
  for (Eigen::Index i = 0; i < t.p.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(t.p, i); it; ++it) {
      t.row_margins[i] += it.value();
      t.col_margins[it.col()] += it.value();
    }
  t.row_ids = table.row_ids;
  t.col_ids = table.col_ids;
  return t;
}

inline ProportionTable proportions(const CooccurrenceMatrix& x) { return proportions(as_table(x)); }

// ---------------------------------------------------------------------------
// Transform specification
// ---------------------------------------------------------------------------

enum class TransformKind { ttest, pmi, ppmi, wpmi, stratos, power_ca };

struct TransformSpec {
  TransformKind kind = TransformKind::ttest;
  double delta = 1.0;  // used by power_ca only

  TransformSpec() = default;
  TransformSpec(TransformKind k, double d = 1.0) : kind(k), delta(d) {
    if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("delta must lie in (0, 1], got " + format_double(delta));
  }

  // Residual matrices, i.e. the inputs of correspondence analysis.
  bool is_ca() const { return kind == TransformKind::ttest || kind == TransformKind::power_ca; }

  // Text of the `%transform` header: "PMI", "POWER_CA delta=0.25".
  std::string header() const {
    switch (kind) {
      case TransformKind::ttest: return "TTEST";
      case TransformKind::pmi: return "PMI";
      case TransformKind::ppmi: return "PPMI";
      case TransformKind::wpmi: return "WPMI";
      case TransformKind::stratos: return "STRATOS";
      case TransformKind::power_ca: return "POWER_CA delta=" + format_double(delta);
    }
    return {};
  }

  // Single-token form, e.g. "PMI" or "POWER_CA:0.25".
  std::string token() const {
    if (kind == TransformKind::power_ca) return "POWER_CA:" + format_double(delta);
    return header();
  }

  // Name of the matrix when its rows are used directly as embeddings.
  std::string matrix_label() const {
    switch (kind) {
      case TransformKind::ttest: return "TTEST";
      case TransformKind::pmi: return "PMI";
      case TransformKind::ppmi: return "PPMI";
      case TransformKind::wpmi: return "WPMI";
      case TransformKind::stratos: return "STRATOS-TTEST";
      case TransformKind::power_ca:
        if (delta == 1.0) return "TTEST";
        if (delta == 0.5) return "ROOT-TTEST";
        if (delta == 0.25) return "ROOTROOT-TTEST";
        return "POWER" + format_double(delta) + "-TTEST";
    }
    return {};
  }

  // Name of the method that factorizes this matrix.
  std::string svd_label() const {
    switch (kind) {
      case TransformKind::ttest: return "RAW-CA";
      case TransformKind::pmi: return "PMI-SVD";
      case TransformKind::ppmi: return "PPMI-SVD";
      case TransformKind::wpmi: return "WPMI-SVD";
      case TransformKind::stratos: return "ROOT-CCA";
      case TransformKind::power_ca:
        if (delta == 1.0) return "RAW-CA";
        if (delta == 0.5) return "ROOT-CA";
        if (delta == 0.25) return "ROOTROOT-CA";
        return "POWER" + format_double(delta) + "-CA";
    }
    return {};
  }

  friend bool operator==(const TransformSpec& a, const TransformSpec& b) {
    return a.kind == b.kind && (a.kind != TransformKind::power_ca || a.delta == b.delta);
  }
};

// Accepts "TTEST", "PMI", "PPMI", "WPMI", "STRATOS", "POWER_CA delta=0.5",
// and the short forms "POWER_CA:0.5", "RAW-CA", "ROOT-CA", "ROOTROOT-CA".
inline TransformSpec parse_transform(std::string_view text) {
  auto parts = split_whitespace(text);
  if (parts.empty()) throw ConfigError("empty transform name");
  std::string_view name = parts[0];
  double delta = 1.0;
  auto parse_delta = [&](std::string_view s) {
    if (!parse_double(s, delta)) throw ConfigError("bad delta in transform '" + std::string(text) + "'");
  };
  if (auto colon = name.find(':'); colon != std::string_view::npos) {
    parse_delta(name.substr(colon + 1));
    name = name.substr(0, colon);
  }
  for (std::size_t k = 1; k < parts.size(); ++k) {
    if (parts[k].substr(0, 6) != "delta=") throw ConfigError("unexpected token in transform '" + std::string(text) + "'");
    parse_delta(parts[k].substr(6));
  }
  if (name == "TTEST") return {TransformKind::ttest};
  if (name == "PMI") return {TransformKind::pmi};
  if (name == "PPMI") return {TransformKind::ppmi};
  if (name == "WPMI") return {TransformKind::wpmi};
  if (name == "STRATOS") return {TransformKind::stratos};
  if (name == "POWER_CA") return {TransformKind::power_ca, delta};
  if (name == "RAW-CA") return {TransformKind::power_ca, 1.0};
  if (name == "ROOT-CA") return {TransformKind::power_ca, 0.5};
  if (name == "ROOTROOT-CA") return {TransformKind::power_ca, 0.25};
  throw ConfigError("unknown transform '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Transformed matrix
// ---------------------------------------------------------------------------

// A matrix whose entries on the support of the source counts are stored
// explicitly. Off the support every entry is zero, or, when an offset is
// present, -row_offset[i] * col_offset[j]. The residual matrices of CA are
// dense but have this form, which keeps them O(nnz) in memory.
class TransformedMatrix {
 public:
  TransformSpec spec;
  SparseMatrix stored;  // pattern == support mask
  bool has_offset = false;
  Eigen::VectorXd row_offset;
  Eigen::VectorXd col_offset;
  // Margins of the proportion table the matrix was computed from.
  Eigen::VectorXd row_margins;
  Eigen::VectorXd col_margins;
  IndexList row_ids;
  IndexList col_ids;

  Eigen::Index rows() const { return stored.rows(); }
  Eigen::Index cols() const { return stored.cols(); }

  bool in_support(Eigen::Index i, Eigen::Index j) const {
    for (SparseMatrix::InnerIterator it(stored, i); it; ++it)
      if (it.col() == j) return true;
    return false;
  }

  double value(Eigen::Index i, Eigen::Index j) const {
    for (SparseMatrix::InnerIterator it(stored, i); it; ++it) {
      if (it.col() == j) return it.value();
      if (it.col() > j) break;
    }
    return has_offset ? -row_offset[i] * col_offset[j] : 0.0;
  }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd d(rows(), cols());
    if (has_offset)
      d.noalias() = -row_offset * col_offset.transpose();
    else
      d.setZero();
    for (Eigen::Index i = 0; i < stored.outerSize(); ++i)
      for (SparseMatrix::InnerIterator it(stored, i); it; ++it) d(i, it.col()) = it.value();
    return d;
  }

  // M * x for a block of column vectors.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    if (!has_offset) return stored * x;
    // On the support the stored value already includes the offset term, so
    // add it back before subtracting the dense rank-one part.
    Eigen::MatrixXd out(rows(), x.cols());
    for (Eigen::Index i = 0; i < stored.outerSize(); ++i) {
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(x.cols());
      for (SparseMatrix::InnerIterator it(stored, i); it; ++it)
        acc.noalias() += (it.value() + row_offset[i] * col_offset[it.col()]) * x.row(it.col());
      out.row(i) = acc;
    }
    out.noalias() -= row_offset * (col_offset.transpose() * x);
    return out;
  }

  // M^T * y for a block of column vectors.
  Eigen::MatrixXd apply_transpose(const Eigen::MatrixXd& y) const {
    if (!has_offset) return stored.transpose() * y;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(cols(), y.cols());
    for (Eigen::Index i = 0; i < stored.outerSize(); ++i)
      for (SparseMatrix::InnerIterator it(stored, i); it; ++it)
        out.row(it.col()).noalias() += (it.value() + row_offset[i] * col_offset[it.col()]) * y.row(i);
    out.noalias() -= col_offset * (row_offset.transpose() * y);
    return out;
  }

  Eigen::VectorXd row_sums() const { return apply(Eigen::VectorXd::Ones(cols())); }
  Eigen::VectorXd col_sums() const { return apply_transpose(Eigen::VectorXd::Ones(rows())); }

  // Sum of squared entries over all I*J cells.
  double squared_norm() const {
    double s = 0;
    for (Eigen::Index i = 0; i < stored.outerSize(); ++i)
      for (SparseMatrix::InnerIterator it(stored, i); it; ++it) s += it.value() * it.value();
    if (has_offset) {
      // Off-support cells contribute r_i^2 c_j^2. Per row, subtract the
      // support from the full column mass only when the support carries
      // little of it; otherwise sum the complement directly to avoid
      // cancellation.
      const double c_all = col_offset.squaredNorm();
      for (Eigen::Index i = 0; i < stored.outerSize(); ++i) {
        double c_supp = 0;
        for (SparseMatrix::InnerIterator it(stored, i); it; ++it) c_supp += col_offset[it.col()] * col_offset[it.col()];
        double c_off = 0;
        if (c_supp <= 0.5 * c_all) {
          c_off = c_all - c_supp;
        } else {
          SparseMatrix::InnerIterator it(stored, i);
          for (Eigen::Index j = 0; j < cols(); ++j) {
            if (it && it.col() == j) {
              ++it;
              continue;
            }
            c_off += col_offset[j] * col_offset[j];
          }
        }
        s += row_offset[i] * row_offset[i] * c_off;
      }
    }
    return s;
  }

  std::string to_triplets() const {
    auto join_ids = [](const IndexList& ids) {
      std::string s;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        if (k) s += ' ';
        s += std::to_string(ids[k]);
      }
      return s;
    };
    auto join_vec = [](const Eigen::VectorXd& v) {
      std::string s;
      for (Eigen::Index k = 0; k < v.size(); ++k) {
        if (k) s += ' ';
        s += format_double(v[k]);
      }
      return s;
    };
    std::vector<std::pair<std::string, std::string>> meta{{"transform", spec.header()},
                                                          {"row_ids", join_ids(row_ids)},
                                                          {"col_ids", join_ids(col_ids)},
                                                          {"row_margins", join_vec(row_margins)},
                                                          {"col_margins", join_vec(col_margins)}};
    if (has_offset) {
      meta.emplace_back("row_offset", join_vec(row_offset));
      meta.emplace_back("col_offset", join_vec(col_offset));
    }
    return write_triplets(stored, meta);
  }

  static TransformedMatrix from_triplets(std::string_view text) {
    auto f = read_triplets(text);
    TransformedMatrix m;
    const std::string* tr = f.find_meta("transform");
    if (!tr) throw ParseError(1, "missing %transform header");
    m.spec = parse_transform(*tr);
    m.stored = std::move(f.matrix);
    auto read_ids = [&](const char* key, Eigen::Index n) {
      const std::string* s = f.find_meta(key);
      if (!s) return identity_ids(n);
      IndexList ids;
      for (auto tok : split_whitespace(*s)) {
        Eigen::Index v = 0;
        if (!parse_int(tok, v)) throw ParseError(1, std::string("bad %") + key);
        ids.push_back(v);
      }
      if (static_cast<Eigen::Index>(ids.size()) != n) throw ParseError(1, std::string("%") + key + " has wrong length");
      return ids;
    };
    auto read_vec = [&](const char* key, Eigen::Index n, bool required) {
      const std::string* s = f.find_meta(key);
      if (!s) {
        if (required) throw ParseError(1, std::string("missing %") + key);
        return Eigen::VectorXd();
      }
      auto toks = split_whitespace(*s);
      if (static_cast<Eigen::Index>(toks.size()) != n) throw ParseError(1, std::string("%") + key + " has wrong length");
      Eigen::VectorXd v(n);
      for (Eigen::Index k = 0; k < n; ++k)
        if (!parse_double(toks[static_cast<std::size_t>(k)], v[k])) throw ParseError(1, std::string("bad %") + key);
      return v;
    };
    m.row_ids = read_ids("row_ids", f.rows);
    m.col_ids = read_ids("col_ids", f.cols);
    m.row_margins = read_vec("row_margins", f.rows, false);
    m.col_margins = read_vec("col_margins", f.cols, false);
    if (f.find_meta("row_offset")) {
      m.has_offset = true;
      m.row_offset = read_vec("row_offset", f.rows, true);
      m.col_offset = read_vec("col_offset", f.cols, true);
    }
    return m;
  }
};

namespace detail {

inline void require_positive_margins(const ProportionTable& t) {
  for (Eigen::Index i = 0; i < t.row_margins.size(); ++i)
    if (!(t.row_margins[i] > 0))
      throw SingularityError("row " + std::to_string(i) + " (vocabulary index " +
                             std::to_string(t.row_ids.empty() ? i : t.row_ids[static_cast<std::size_t>(i)]) +
                             ") has zero margin");
  for (Eigen::Index j = 0; j < t.col_margins.size(); ++j)
    if (!(t.col_margins[j] > 0))
      throw SingularityError("column " + std::to_string(j) + " (vocabulary index " +
                             std::to_string(t.col_ids.empty() ? j : t.col_ids[static_cast<std::size_t>(j)]) +
                             ") has zero margin");
}

// Copies the support pattern of `t.p` and fills each cell with fn(p, r, c),
// where r and c are the row and column margins.
template <typename Fn>
TransformedMatrix map_support(const ProportionTable& t, TransformSpec spec, Fn&& fn) {
  require_positive_margins(t);
  TransformedMatrix m;
  m.spec = spec;
  m.stored = t.p;
  for (Eigen::Index i = 0; i < m.stored.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(m.stored, i); it; ++it)
      it.valueRef() = fn(it.value(), t.row_margins[i], t.col_margins[it.col()]);
  m.row_margins = t.row_margins;
  m.col_margins = t.col_margins;
  m.row_ids = t.row_ids;
  m.col_ids = t.col_ids;
  return m;
}

}  // namespace detail

// Standardized residuals (p_ij - p_i+ p_+j) / sqrt(p_i+ p_+j).
inline TransformedMatrix ttest_matrix(const ProportionTable& t, TransformSpec spec = {TransformKind::ttest}) {
  auto m = detail::map_support(t, spec, [](double p, double r, double c) { return (p - r * c) / std::sqrt(r * c); });
  m.has_offset = true;
  m.row_offset = t.row_margins.cwiseSqrt();
  m.col_offset = t.col_margins.cwiseSqrt();
  return m;
}

inline TransformedMatrix pmi_matrix(const ProportionTable& t) {
  return detail::map_support(t, {TransformKind::pmi}, [](double p, double r, double c) { return std::log(p / (r * c)); });
}

inline TransformedMatrix ppmi_matrix(const ProportionTable& t) {
  return detail::map_support(t, {TransformKind::ppmi},
                             [](double p, double r, double c) { return std::max(std::log(p / (r * c)), 0.0); });
}

// sqrt(p_i+ p_+j) * PMI; zero-count cells stay zero as in PMI.
inline TransformedMatrix wpmi_matrix(const ProportionTable& t) {
  return detail::map_support(t, {TransformKind::wpmi},
                             [](double p, double r, double c) { return std::sqrt(r * c) * std::log(p / (r * c)); });
}

// sqrt(p_ij / sqrt(p_i+ p_+j)), the matrix ROOT-CCA decomposes.
inline TransformedMatrix stratos_matrix(const ProportionTable& t) {
  return detail::map_support(t, {TransformKind::stratos},
                             [](double p, double r, double c) { return std::sqrt(p / std::sqrt(r * c)); });
}

// Elementwise x^delta of the counts, then standardized residuals.
inline CountTable power_counts(const CountTable& table, double delta) {
  CountTable y = table;
  if (delta != 1.0)
    for (Eigen::Index i = 0; i < y.counts.outerSize(); ++i)
      for (SparseMatrix::InnerIterator it(y.counts, i); it; ++it) it.valueRef() = std::pow(it.value(), delta);
  return y;
}

inline TransformedMatrix power_ca_matrix(const CountTable& table, double delta) {
  TransformSpec spec(TransformKind::power_ca, delta);
  return ttest_matrix(proportions(power_counts(table, delta)), spec);
}

inline TransformedMatrix power_ca_matrix(const CooccurrenceMatrix& x, double delta) {
  return power_ca_matrix(as_table(x), delta);
}

// Dispatch on a spec. Rows/columns with zero margins must already be removed.
inline TransformedMatrix apply_transform(const CountTable& table, const TransformSpec& spec) {
  switch (spec.kind) {
    case TransformKind::ttest: return ttest_matrix(proportions(table));
    case TransformKind::pmi: return pmi_matrix(proportions(table));
    case TransformKind::ppmi: return ppmi_matrix(proportions(table));
    case TransformKind::wpmi: return wpmi_matrix(proportions(table));
    case TransformKind::stratos: return stratos_matrix(proportions(table));
    case TransformKind::power_ca: return power_ca_matrix(table, spec.delta);
  }
  throw ConfigError("unknown transform kind");
}

}  // namespace caemb
