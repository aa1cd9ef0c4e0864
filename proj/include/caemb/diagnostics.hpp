#pragma once

// Extreme-value and contribution analysis of decomposed matrices.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "caemb/corpus.hpp"
#include "caemb/factorize.hpp"
#include "caemb/transforms.hpp"

namespace caemb {

enum class QuartileRule { linear, nearest_rank };

inline QuartileRule parse_quartile_rule(std::string_view s) {
  if (s == "linear") return QuartileRule::linear;
  if (s == "nearest-rank") return QuartileRule::nearest_rank;
  throw ConfigError("unknown quartile rule '" + std::string(s) + "'");
}

// Sample quantile of sorted values. linear interpolates at q*(n-1);
// nearest_rank takes the ceil(q*n)-th order statistic.
inline double quantile_sorted(std::span<const double> sorted, double q, QuartileRule rule) {
  if (sorted.empty()) throw InsufficientDataError("quantile of an empty sample");
  const std::size_t n = sorted.size();
  if (rule == QuartileRule::nearest_rank) {
    auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    return sorted[rank - 1];
  }
  const double pos = q * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= n) return sorted[n - 1];
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

struct ExtremeEntry {
  Eigen::Index row = 0;  // vocabulary index
  Eigen::Index col = 0;  // vocabulary index
  double value = 0;
  double extremeness = 0;  // distance beyond the nearer fence
};

struct FenceReport {
  double q1 = 0, q3 = 0, f1 = 0, f3 = 0;
  std::size_t n = 0;
  std::size_t count_lt_f1 = 0;
  std::size_t count_gt_f3 = 0;
  std::size_t total = 0;
  // Most extreme entries, by extremeness descending then (row, col).
  std::vector<ExtremeEntry> top_entries;
};

namespace detail {

inline bool more_extreme(const ExtremeEntry& a, const ExtremeEntry& b) {
  if (a.extremeness != b.extremeness) return a.extremeness > b.extremeness;
  if (a.row != b.row) return a.row < b.row;
  return a.col < b.col;
}

inline FenceReport fences_from(std::vector<double> values, QuartileRule rule) {
  if (values.empty()) throw InsufficientDataError("no values inside the mask");
  std::sort(values.begin(), values.end());
  FenceReport r;
  r.n = values.size();
  r.q1 = quantile_sorted(values, 0.25, rule);
  r.q3 = quantile_sorted(values, 0.75, rule);
  const double iqr = r.q3 - r.q1;
  r.f1 = r.q1 - 1.5 * iqr;
  r.f3 = r.q3 + 1.5 * iqr;
  r.count_lt_f1 = static_cast<std::size_t>(std::lower_bound(values.begin(), values.end(), r.f1) - values.begin());
  r.count_gt_f3 = static_cast<std::size_t>(values.end() - std::upper_bound(values.begin(), values.end(), r.f3));
  r.total = r.count_lt_f1 + r.count_gt_f3;
  return r;
}

}  // namespace detail

// Tukey fences over a plain list of values; top entries use the list
// position as the row index.
inline FenceReport tukey_fences(std::span<const double> values, std::size_t top = 10,
                                QuartileRule rule = QuartileRule::linear) {
  FenceReport r = detail::fences_from(std::vector<double>(values.begin(), values.end()), rule);
  std::vector<ExtremeEntry> ex;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double v = values[i];
    if (v < r.f1) ex.push_back({static_cast<Eigen::Index>(i), 0, v, r.f1 - v});
    else if (v > r.f3) ex.push_back({static_cast<Eigen::Index>(i), 0, v, v - r.f3});
  }
  std::sort(ex.begin(), ex.end(), detail::more_extreme);
  if (ex.size() > top) ex.resize(top);
  r.top_entries = std::move(ex);
  return r;
}

// Tukey fences over the entries of `m` that lie on the nonzero support of the
// co-occurrence counts `mask` (vocabulary-indexed, as in CooccurrenceMatrix).
inline FenceReport tukey_fences(const TransformedMatrix& m, const SparseMatrix& mask, std::size_t top = 10,
                                QuartileRule rule = QuartileRule::linear) {
  std::vector<Eigen::Index> row_of(static_cast<std::size_t>(mask.rows()), -1), col_of(static_cast<std::size_t>(mask.cols()), -1);
  for (std::size_t r = 0; r < m.row_ids.size(); ++r)
    if (m.row_ids[r] >= 0 && m.row_ids[r] < mask.rows()) row_of[static_cast<std::size_t>(m.row_ids[r])] = static_cast<Eigen::Index>(r);
  for (std::size_t c = 0; c < m.col_ids.size(); ++c)
    if (m.col_ids[c] >= 0 && m.col_ids[c] < mask.cols()) col_of[static_cast<std::size_t>(m.col_ids[c])] = static_cast<Eigen::Index>(c);

  struct Cell {
    Eigen::Index row, col;
    double value;
  };
  std::vector<Cell> cells;
  cells.reserve(static_cast<std::size_t>(mask.nonZeros()));
  for (Eigen::Index i = 0; i < mask.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(mask, i); it; ++it) {
      if (it.value() == 0) continue;
      auto r = row_of[static_cast<std::size_t>(i)], c = col_of[static_cast<std::size_t>(it.col())];
      if (r < 0 || c < 0)
        throw IndexError("mask cell (" + std::to_string(i) + ", " + std::to_string(it.col()) +
                         ") has no row/column in the matrix");
      cells.push_back({i, it.col(), m.value(r, c)});
    }

  std::vector<double> values;
  values.reserve(cells.size());
  for (const auto& c : cells) values.push_back(c.value);
  FenceReport rep = detail::fences_from(std::move(values), rule);

  auto worse = [](const ExtremeEntry& a, const ExtremeEntry& b) { return detail::more_extreme(a, b); };
  std::priority_queue<ExtremeEntry, std::vector<ExtremeEntry>, decltype(worse)> heap(worse);
  for (const auto& c : cells) {
    double ext = 0;
    if (c.value < rep.f1) ext = rep.f1 - c.value;
    else if (c.value > rep.f3) ext = c.value - rep.f3;
    else continue;
    if (top == 0) continue;
    ExtremeEntry e{c.row, c.col, c.value, ext};
    if (heap.size() < top) heap.push(e);
    else if (detail::more_extreme(e, heap.top())) {
      heap.pop();
      heap.push(e);
    }
  }
  while (!heap.empty()) {
    rep.top_entries.push_back(heap.top());
    heap.pop();
  }
  std::sort(rep.top_entries.begin(), rep.top_entries.end(), detail::more_extreme);
  return rep;
}

// Distinct rows of the m most extreme entries, most extreme first.
inline std::vector<Eigen::Index> top_extreme_rows(const FenceReport& fr, std::size_t m) {
  std::vector<Eigen::Index> rows;
  for (std::size_t k = 0; k < fr.top_entries.size() && k < m; ++k) {
    auto r = fr.top_entries[k].row;
    if (std::find(rows.begin(), rows.end(), r) == rows.end()) rows.push_back(r);
  }
  return rows;
}

inline std::string fence_header() { return "matrix\tq1\tq3\tf1\tf3\tcount_lt_f1\tcount_gt_f3\ttotal\n"; }

inline std::string fence_line(const std::string& name, const FenceReport& r) {
  return name + '\t' + format_double(r.q1) + '\t' + format_double(r.q3) + '\t' + format_double(r.f1) + '\t' +
         format_double(r.f3) + '\t' + std::to_string(r.count_lt_f1) + '\t' + std::to_string(r.count_gt_f3) + '\t' +
         std::to_string(r.total) + '\n';
}

// ---------------------------------------------------------------------------
// Contributions
// ---------------------------------------------------------------------------

struct CellShare {
  Eigen::Index row = 0;  // vocabulary index
  Eigen::Index col = 0;  // vocabulary index
  double share = 0;
};

// Share of each cell in the total inertia, value^2 / sum(value^2).
struct CellContributionReport {
  double total_inertia = 0;
  std::vector<CellShare> top_cells;  // largest shares first
};

inline CellContributionReport cell_inertia_contribution(const TransformedMatrix& m, std::size_t top = 10) {
  CellContributionReport rep;
  rep.total_inertia = m.squared_norm();
  if (!(rep.total_inertia > 0)) throw DegenerateInputError("matrix has zero total inertia");

  auto smaller = [](const CellShare& a, const CellShare& b) {
    if (a.share != b.share) return a.share > b.share;
    if (a.row != b.row) return a.row < b.row;
    return a.col < b.col;
  };
  std::priority_queue<CellShare, std::vector<CellShare>, decltype(smaller)> heap(smaller);
  auto offer = [&](Eigen::Index r, Eigen::Index c, double v) {
    if (top == 0) return;
    CellShare s{m.row_ids[static_cast<std::size_t>(r)], m.col_ids[static_cast<std::size_t>(c)], v * v / rep.total_inertia};
    if (heap.size() < top) heap.push(s);
    else if (smaller(s, heap.top())) {
      heap.pop();
      heap.push(s);
    }
  };
  for (Eigen::Index i = 0; i < m.stored.outerSize(); ++i) {
    SparseMatrix::InnerIterator it(m.stored, i);
    if (!m.has_offset) {
      for (; it; ++it) offer(i, it.col(), it.value());
      continue;
    }
    // Dense residual matrix: visit every cell, stored or not.
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (it && it.col() == j) {
        offer(i, j, it.value());
        ++it;
      } else {
        offer(i, j, -m.row_offset[i] * m.col_offset[j]);
      }
    }
  }
  while (!heap.empty()) {
    rep.top_cells.push_back(heap.top());
    heap.pop();
  }
  std::reverse(rep.top_cells.begin(), rep.top_cells.end());
  return rep;
}

// All cell shares as a dense matrix (for small matrices).
inline Eigen::MatrixXd cell_shares_dense(const TransformedMatrix& m) {
  Eigen::MatrixXd d = m.dense();
  const double total = d.squaredNorm();
  if (!(total > 0)) throw DegenerateInputError("matrix has zero total inertia");
  return d.array().square() / total;
}

// u_ik^2 for the requested rows (vocabulary indices) over dimensions
// 1..k_max. Columns of U have unit norm, so each column of the full table
// sums to 1.
struct DimensionContributions {
  std::vector<Eigen::Index> rows;  // vocabulary indices
  Eigen::MatrixXd shares;          // rows.size() x k_max
};

inline DimensionContributions dimension_contributions(const Factorization& f, const std::vector<Eigen::Index>& rows,
                                                      Eigen::Index k_max, Side side = Side::target) {
  if (k_max < 1 || k_max > f.k_max())
    throw ConfigError("k_max = " + std::to_string(k_max) + " outside 1.." + std::to_string(f.k_max()));
  const Eigen::MatrixXd& vecs = side == Side::target ? f.U : f.V;
  const IndexList& ids = side == Side::target ? f.row_ids : f.col_ids;
  DimensionContributions out;
  out.rows = rows;
  out.shares.resize(static_cast<Eigen::Index>(rows.size()), k_max);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto pos = std::find(ids.begin(), ids.end(), rows[r]);
    if (pos == ids.end())
      throw IndexError("row " + std::to_string(rows[r]) + " is not part of the factorization");
    auto local = static_cast<Eigen::Index>(pos - ids.begin());
    out.shares.row(static_cast<Eigen::Index>(r)) = vecs.row(local).head(k_max).array().square().matrix();
  }
  return out;
}

inline std::string write_dimension_contributions(const DimensionContributions& d, const Vocabulary& vocab) {
  std::string out = "row_term\tdimension\tshare\n";
  for (std::size_t r = 0; r < d.rows.size(); ++r)
    for (Eigen::Index k = 0; k < d.shares.cols(); ++k)
      out += vocab.term(static_cast<std::size_t>(d.rows[r])) + '\t' + std::to_string(k + 1) + '\t' +
             format_double(d.shares(static_cast<Eigen::Index>(r), k)) + '\n';
  return out;
}

}  // namespace caemb
