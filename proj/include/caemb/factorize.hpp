#pragma once

// Truncated SVD of transformed matrices and extraction of word embeddings.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "caemb/corpus.hpp"
#include "caemb/transforms.hpp"

namespace caemb {

// ---------------------------------------------------------------------------
// Operators
// ---------------------------------------------------------------------------

// Adapts a dense matrix to the operator interface used by truncated_svd.
struct DenseOperator {
  const Eigen::MatrixXd& m;
  Eigen::Index rows() const { return m.rows(); }
  Eigen::Index cols() const { return m.cols(); }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const { return m * x; }
  Eigen::MatrixXd apply_transpose(const Eigen::MatrixXd& y) const { return m.transpose() * y; }
  Eigen::MatrixXd dense() const { return m; }
};

template <typename Op>
concept LinearOperator = requires(const Op& op, const Eigen::MatrixXd& x) {
  { op.rows() } -> std::convertible_to<Eigen::Index>;
  { op.cols() } -> std::convertible_to<Eigen::Index>;
  { op.apply(x) } -> std::convertible_to<Eigen::MatrixXd>;
  { op.apply_transpose(x) } -> std::convertible_to<Eigen::MatrixXd>;
  { op.dense() } -> std::convertible_to<Eigen::MatrixXd>;
};

// ---------------------------------------------------------------------------
// SVD
// ---------------------------------------------------------------------------

enum class SvdMethod { automatic, dense, iterative };

struct SvdOptions {
  SvdMethod method = SvdMethod::automatic;
  // The automatic choice uses the dense route up to this many cells.
  double dense_cell_limit = 4.0e6;
  Eigen::Index min_oversample = 10;
  int max_iterations = 1000;
  double tolerance = 1e-10;
};

struct SvdResult {
  Eigen::VectorXd sigma;
  Eigen::MatrixXd U;
  Eigen::MatrixXd V;
  Eigen::Index rank = 0;
  bool converged = true;
  int iterations = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& a) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  return qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
}

// First coordinate of each left vector positive; equal singular values
// ordered by the position of that first coordinate.
inline void canonicalize(SvdResult& r) {
  const Eigen::Index k = r.sigma.size();
  std::vector<Eigen::Index> lead(static_cast<std::size_t>(k), 0);
  for (Eigen::Index c = 0; c < k; ++c) {
    const double scale = r.U.col(c).cwiseAbs().maxCoeff();
    Eigen::Index first = 0;
    while (first < r.U.rows() && std::abs(r.U(first, c)) <= 1e-12 * scale) ++first;
    if (first < r.U.rows() && r.U(first, c) < 0) {
      r.U.col(c) *= -1.0;
      r.V.col(c) *= -1.0;
    }
    lead[static_cast<std::size_t>(c)] = first;
  }
  if (k < 2) return;
  const double tie = 1e-12 * std::max(r.sigma[0], std::numeric_limits<double>::min());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Eigen::Index start = 0;
  while (start < k) {
    Eigen::Index end = start + 1;
    while (end < k && std::abs(r.sigma[end - 1] - r.sigma[end]) <= tie) ++end;
    std::stable_sort(order.begin() + start, order.begin() + end,
                     [&](Eigen::Index a, Eigen::Index b) { return lead[static_cast<std::size_t>(a)] < lead[static_cast<std::size_t>(b)]; });
    start = end;
  }
  bool identity = std::is_sorted(order.begin(), order.end());
  if (identity) return;
  SvdResult sorted = r;
  for (Eigen::Index c = 0; c < k; ++c) {
    auto src = order[static_cast<std::size_t>(c)];
    sorted.sigma[c] = r.sigma[src];
    sorted.U.col(c) = r.U.col(src);
    sorted.V.col(c) = r.V.col(src);
  }
  r = std::move(sorted);
}

inline void finish(SvdResult& r, Eigen::Index rows, Eigen::Index cols, Eigen::Index k) {
  const double s1 = r.sigma.size() ? r.sigma[0] : 0.0;
  const double cut = static_cast<double>(std::max(rows, cols)) * std::numeric_limits<double>::epsilon() * s1;
  r.rank = 0;
  for (Eigen::Index c = 0; c < r.sigma.size(); ++c) {
    if (r.sigma[c] > cut)
      ++r.rank;
    else
      r.sigma[c] = 0.0;
  }
  if (r.rank < k)
    r.warnings.push_back("requested " + std::to_string(k) + " components but numerical rank is " +
                         std::to_string(r.rank) + "; trailing singular values set to 0");
  canonicalize(r);
}

template <typename Op>
SvdResult dense_svd(const Op& op, Eigen::Index k) {
  Eigen::MatrixXd a = op.dense();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SvdResult r;
  r.sigma = svd.singularValues().head(k);
  r.U = svd.matrixU().leftCols(k);
  r.V = svd.matrixV().leftCols(k);
  return r;
}

// Randomized subspace iteration with a Rayleigh-Ritz step each sweep.
// Stops once every leading singular value moves by at most `tolerance`
// relative to its size (floored at 1e-4 * sigma_1 for tiny values), or
// after max_iterations sweeps.
template <typename Op>
SvdResult iterative_svd(const Op& op, Eigen::Index k, std::uint64_t seed, const SvdOptions& opt) {
  const Eigen::Index m = op.rows(), n = op.cols();
  const Eigen::Index block = std::min(std::min(m, n), k + std::max(opt.min_oversample, k / 2));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd omega(n, block);
  for (Eigen::Index j = 0; j < block; ++j)
    for (Eigen::Index i = 0; i < n; ++i) omega(i, j) = gauss(rng);

  Eigen::MatrixXd q = orthonormalize(op.apply(omega));
  Eigen::VectorXd previous;
  SvdResult r;
  r.converged = false;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    // B = Q^T A, handled through its transpose Z = A^T Q (n x block).
    Eigen::MatrixXd z = op.apply_transpose(q);
    Eigen::BDCSVD<Eigen::MatrixXd> small(z, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd sigma = small.singularValues().head(k);
    r.iterations = it;
    bool done = false;
    if (previous.size() == k) {
      const double floor = 1e-4 * sigma[0];
      done = true;
      for (Eigen::Index c = 0; c < k; ++c)
        if (std::abs(sigma[c] - previous[c]) > opt.tolerance * std::max(sigma[c], floor)) {
          done = false;
          break;
        }
    }
    if (done || it == opt.max_iterations) {
      // Z = W S X^T  =>  A ~ Q X S W^T.
      r.sigma = sigma;
      r.U = q * small.matrixV().leftCols(k);
      r.V = small.matrixU().leftCols(k);
      r.converged = done;
      break;
    }
    previous = sigma;
    q = orthonormalize(op.apply(orthonormalize(z)));
  }
  if (!r.converged)
    r.warnings.push_back("iterative SVD did not converge within " + std::to_string(opt.max_iterations) +
                         " iterations");
  return r;
}

}  // namespace detail

// Best rank-k approximation of `op`. Deterministic for a fixed seed (the dense
// route does not consume randomness at all).
template <LinearOperator Op>
SvdResult truncated_svd(const Op& op, Eigen::Index k, std::uint64_t seed = 0, const SvdOptions& opt = {}) {
  const Eigen::Index m = op.rows(), n = op.cols();
  if (k < 1) throw ConfigError("k must be >= 1");
  if (k > std::min(m, n))
    throw ConfigError("k = " + std::to_string(k) + " exceeds min(rows, cols) = " + std::to_string(std::min(m, n)));
  bool dense = opt.method == SvdMethod::dense ||
               (opt.method == SvdMethod::automatic && static_cast<double>(m) * static_cast<double>(n) <= opt.dense_cell_limit);
  SvdResult r = dense ? detail::dense_svd(op, k) : detail::iterative_svd(op, k, seed, opt);
  detail::finish(r, m, n, k);
  return r;
}

// ---------------------------------------------------------------------------
// Factorization of a transformed matrix
// ---------------------------------------------------------------------------

struct Factorization {
  Eigen::VectorXd sigma;
  Eigen::MatrixXd U;
  Eigen::MatrixXd V;
  TransformSpec spec;
  bool gsvd = false;
  Eigen::Index rank = 0;
  bool converged = true;
  int iterations = 0;
  std::vector<std::string> warnings;
  Eigen::VectorXd row_margins;
  Eigen::VectorXd col_margins;
  IndexList row_ids;
  IndexList col_ids;

  Eigen::Index k_max() const { return sigma.size(); }
  std::string label() const { return gsvd ? "PMI-GSVD" : spec.svd_label(); }
};

inline Factorization make_factorization(SvdResult r, const TransformedMatrix& m, bool gsvd) {
  Factorization f;
  f.sigma = std::move(r.sigma);
  f.U = std::move(r.U);
  f.V = std::move(r.V);
  f.rank = r.rank;
  f.converged = r.converged;
  f.iterations = r.iterations;
  f.warnings = std::move(r.warnings);
  f.spec = m.spec;
  f.gsvd = gsvd;
  f.row_margins = m.row_margins;
  f.col_margins = m.col_margins;
  f.row_ids = m.row_ids;
  f.col_ids = m.col_ids;
  return f;
}

inline Factorization truncated_svd(const TransformedMatrix& m, Eigen::Index k, std::uint64_t seed = 0,
                                   const SvdOptions& opt = {}) {
  return make_factorization(truncated_svd<TransformedMatrix>(m, k, seed, opt), m, false);
}

// PMI-GSVD: the SVD of sqrt(p_i+ p_+j) * PMI, i.e. the margin-weighted
// least-squares factorization of the PMI matrix.
inline Factorization gsvd_factorize(const ProportionTable& t, const TransformedMatrix& pmi, Eigen::Index k,
                                    std::uint64_t seed = 0, const SvdOptions& opt = {}) {
  if (pmi.spec.kind != TransformKind::pmi) throw ConfigError("gsvd_factorize expects a PMI matrix");
  if (pmi.rows() != t.row_margins.size() || pmi.cols() != t.col_margins.size())
    throw ConfigError("PMI matrix and proportion table have different shapes");
  TransformedMatrix w = pmi;
  w.spec = TransformSpec(TransformKind::wpmi);
  for (Eigen::Index i = 0; i < w.stored.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(w.stored, i); it; ++it)
      it.valueRef() = std::sqrt(t.row_margins[i] * t.col_margins[it.col()]) * it.value();
  w.row_margins = t.row_margins;
  w.col_margins = t.col_margins;
  return make_factorization(truncated_svd<TransformedMatrix>(w, k, seed, opt), w, true);
}

// Margins taken from the PMI matrix itself.
inline Factorization gsvd_factorize(const TransformedMatrix& pmi, Eigen::Index k, std::uint64_t seed = 0,
                                    const SvdOptions& opt = {}) {
  ProportionTable t;
  t.row_margins = pmi.row_margins;
  t.col_margins = pmi.col_margins;
  return gsvd_factorize(t, pmi, k, seed, opt);
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

enum class CoordinateSystem { alternative, standard, principal };
enum class Side { target, context };

inline const char* to_string(CoordinateSystem c) {
  switch (c) {
    case CoordinateSystem::alternative: return "alternative";
    case CoordinateSystem::standard: return "standard";
    case CoordinateSystem::principal: return "principal";
  }
  return "";
}

inline CoordinateSystem parse_coordinates(std::string_view s) {
  if (s == "alternative") return CoordinateSystem::alternative;
  if (s == "standard") return CoordinateSystem::standard;
  if (s == "principal") return CoordinateSystem::principal;
  throw ConfigError("unknown coordinate system '" + std::string(s) + "'");
}

struct EmbeddingSpec {
  Eigen::Index k = 1;
  double p = 0.0;

  EmbeddingSpec() = default;
  EmbeddingSpec(Eigen::Index k_, double p_) : k(k_), p(p_) {
    if (k < 1) throw ConfigError("embedding dimension k must be >= 1");
    if (!(p >= 0.0)) throw ConfigError("singular value exponent p must be >= 0");
  }
};

// Dense vectors, one row per matrix row; ids maps rows to vocabulary indices.
struct EmbeddingSet {
  Eigen::MatrixXd vectors;
  IndexList ids;
  CoordinateSystem coordinates = CoordinateSystem::alternative;
  double p = 0.0;
  Side side = Side::target;

  Eigen::Index k() const { return vectors.cols(); }
};

// alternative: u_ik sigma_k^p; standard: additionally scaled by p_i+^(-1/2);
// principal: p_i+^(-1/2) u_ik sigma_k (the exponent is fixed at 1).
inline EmbeddingSet embeddings(const Factorization& f, const EmbeddingSpec& spec, Side side = Side::target,
                               CoordinateSystem coords = CoordinateSystem::alternative) {
  if (spec.k > f.k_max())
    throw ConfigError("k = " + std::to_string(spec.k) + " exceeds the " + std::to_string(f.k_max()) +
                      " computed components");
  if (coords != CoordinateSystem::alternative && !f.spec.is_ca())
    throw UnsupportedCoordinateError(std::string(to_string(coords)) + " coordinates require a CA factorization, got " +
                                     f.label());
  const Eigen::MatrixXd& base = side == Side::target ? f.U : f.V;
  const double p = coords == CoordinateSystem::principal ? 1.0 : spec.p;
  Eigen::VectorXd scale(spec.k);
  for (Eigen::Index c = 0; c < spec.k; ++c) scale[c] = std::pow(f.sigma[c], p);

  EmbeddingSet e;
  e.vectors = base.leftCols(spec.k) * scale.asDiagonal();
  if (coords != CoordinateSystem::alternative) {
    const Eigen::VectorXd& margins = side == Side::target ? f.row_margins : f.col_margins;
    if (margins.size() != e.vectors.rows()) throw UnsupportedCoordinateError("factorization carries no margins");
    e.vectors = margins.cwiseSqrt().cwiseInverse().asDiagonal() * e.vectors;
  }
  e.ids = side == Side::target ? f.row_ids : f.col_ids;
  e.coordinates = coords;
  e.p = p;
  e.side = side;
  return e;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline std::string write_embeddings(const EmbeddingSet& e, const Vocabulary& vocab) {
  std::string out = "%embeddings k=" + std::to_string(e.k()) + " p=" + format_double(e.p) +
                    " coords=" + to_string(e.coordinates) + "\n";
  for (Eigen::Index r = 0; r < e.vectors.rows(); ++r) {
    out += vocab.term(static_cast<std::size_t>(e.ids[static_cast<std::size_t>(r)]));
    for (Eigen::Index c = 0; c < e.k(); ++c) {
      out += '\t';
      out += format_double(e.vectors(r, c));
    }
    out += '\n';
  }
  return out;
}

inline EmbeddingSet read_embeddings(std::string_view text, const Vocabulary& vocab) {
  EmbeddingSet e;
  Eigen::Index k = -1;
  std::vector<std::vector<double>> rows;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (line.empty()) return;
    if (line.front() == '%') {
      for (auto tok : split_whitespace(line.substr(1))) {
        if (tok.substr(0, 2) == "k=") {
          if (!parse_int(tok.substr(2), k)) throw ParseError(line_no, "bad k");
        } else if (tok.substr(0, 2) == "p=") {
          if (!parse_double(tok.substr(2), e.p)) throw ParseError(line_no, "bad p");
        } else if (tok.substr(0, 7) == "coords=") {
          e.coordinates = parse_coordinates(tok.substr(7));
        }
      }
      return;
    }
    auto fields = split(line, '\t');
    if (k < 0) throw ParseError(line_no, "missing %embeddings header");
    if (static_cast<Eigen::Index>(fields.size()) != k + 1) throw ParseError(line_no, "expected term and k values");
    auto idx = vocab.find(fields[0]);
    if (!idx) throw ParseError(line_no, "term '" + std::string(fields[0]) + "' is not in the vocabulary");
    std::vector<double> v(static_cast<std::size_t>(k));
    for (Eigen::Index c = 0; c < k; ++c)
      if (!parse_double(fields[static_cast<std::size_t>(c + 1)], v[static_cast<std::size_t>(c)]))
        throw ParseError(line_no, "bad value");
    e.ids.push_back(static_cast<Eigen::Index>(*idx));
    rows.push_back(std::move(v));
  });
  e.vectors.resize(static_cast<Eigen::Index>(rows.size()), std::max<Eigen::Index>(k, 0));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (Eigen::Index c = 0; c < k; ++c) e.vectors(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
  return e;
}

// Factorization cache: sigma, U and V as TSV. U/V lines are
// `vocab_index<TAB>margin<TAB>values...`.
struct FactorizationFiles {
  std::string sigma;
  std::string u;
  std::string v;
};

inline FactorizationFiles write_factorization(const Factorization& f) {
  FactorizationFiles out;
  out.sigma = "%factorization transform=" + f.spec.token() + " gsvd=" + (f.gsvd ? "1" : "0") +
              " k=" + std::to_string(f.k_max()) + " rank=" + std::to_string(f.rank) +
              " converged=" + (f.converged ? "1" : "0") + "\n";
  for (Eigen::Index c = 0; c < f.k_max(); ++c) out.sigma += format_double(f.sigma[c]) + "\n";
  auto block = [](const Eigen::MatrixXd& m, const IndexList& ids, const Eigen::VectorXd& margins) {
    std::string s;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      s += std::to_string(ids[static_cast<std::size_t>(r)]);
      s += '\t';
      s += format_double(margins.size() ? margins[r] : 0.0);
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        s += '\t';
        s += format_double(m(r, c));
      }
      s += '\n';
    }
    return s;
  };
  out.u = block(f.U, f.row_ids, f.row_margins);
  out.v = block(f.V, f.col_ids, f.col_margins);
  return out;
}

inline Factorization read_factorization(const FactorizationFiles& files) {
  Factorization f;
  std::vector<double> sig;
  for_each_line(files.sigma, [&](std::size_t line_no, std::string_view line) {
    if (line.empty()) return;
    if (line.front() == '%') {
      for (auto tok : split_whitespace(line.substr(1))) {
        auto eq = tok.find('=');
        if (eq == std::string_view::npos) continue;
        auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "transform") f.spec = parse_transform(val);
        else if (key == "gsvd") f.gsvd = val == "1";
        else if (key == "rank") parse_int(val, f.rank);
        else if (key == "converged") f.converged = val == "1";
      }
      return;
    }
    double v = 0;
    if (!parse_double(line, v)) throw ParseError(line_no, "bad singular value");
    sig.push_back(v);
  });
  const auto k = static_cast<Eigen::Index>(sig.size());
  f.sigma = Eigen::Map<Eigen::VectorXd>(sig.data(), k);
  auto block = [k](const std::string& text, Eigen::MatrixXd& m, IndexList& ids, Eigen::VectorXd& margins) {
    std::vector<std::vector<double>> rows;
    std::vector<double> marg;
    for_each_line(text, [&](std::size_t line_no, std::string_view line) {
      if (line.empty()) return;
      auto fields = split(line, '\t');
      if (static_cast<Eigen::Index>(fields.size()) != k + 2) throw ParseError(line_no, "expected index, margin and k values");
      Eigen::Index id = 0;
      double mg = 0;
      if (!parse_int(fields[0], id) || !parse_double(fields[1], mg)) throw ParseError(line_no, "bad index or margin");
      std::vector<double> v(static_cast<std::size_t>(k));
      for (Eigen::Index c = 0; c < k; ++c)
        if (!parse_double(fields[static_cast<std::size_t>(c + 2)], v[static_cast<std::size_t>(c)]))
          throw ParseError(line_no, "bad value");
      ids.push_back(id);
      marg.push_back(mg);
      rows.push_back(std::move(v));
    });
    m.resize(static_cast<Eigen::Index>(rows.size()), k);
    margins.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      margins[static_cast<Eigen::Index>(r)] = marg[r];
      for (Eigen::Index c = 0; c < k; ++c) m(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
    }
  };
  block(files.u, f.U, f.row_ids, f.row_margins);
  block(files.v, f.V, f.col_ids, f.col_margins);
  return f;
}

// Dimension grid 2, 50, 100..1000 by 100, 2000..10000 by 1000, capped at `cap`.
inline std::vector<Eigen::Index> default_dimension_grid(Eigen::Index cap) {
  std::vector<Eigen::Index> grid{2, 50};
  for (Eigen::Index k = 100; k <= 1000; k += 100) grid.push_back(k);
  for (Eigen::Index k = 2000; k <= 10000; k += 1000) grid.push_back(k);
  std::vector<Eigen::Index> out;
  for (auto k : grid)
    if (k <= cap) out.push_back(k);
  return out;
}

}  // namespace caemb
