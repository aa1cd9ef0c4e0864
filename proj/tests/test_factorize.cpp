#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "caemb/eval.hpp"
#include "caemb/factorize.hpp"
#include "test_helpers.hpp"

using namespace caemb;
using testutil::props;
using testutil::table;

namespace {

Eigen::MatrixXd random_dense(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> g;
  return Eigen::MatrixXd::NullaryExpr(r, c, [&] { return g(rng); });
}

SvdOptions iterative() {
  SvdOptions o;
  o.method = SvdMethod::iterative;
  return o;
}

void expect_orthonormal(const Eigen::MatrixXd& m, double tol) {
  const auto k = m.cols();
  EXPECT_LT((m.transpose() * m - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff(), tol);
}

}  // namespace

TEST(TruncatedSvd, RankOneResidual) {
  auto m = ttest_matrix(props({{3, 1}, {1, 3}}));
  auto f = truncated_svd(m, 2);
  EXPECT_NEAR(f.sigma[0], 0.5, 1e-15);
  EXPECT_EQ(f.sigma[1], 0.0);
  EXPECT_EQ(f.rank, 1);
  ASSERT_EQ(f.warnings.size(), 1u);
}

TEST(TruncatedSvd, Diagonal) {
  Eigen::MatrixXd d(2, 2);
  d << 2, 0, 0, 1;
  auto r = truncated_svd(DenseOperator{d}, 2);
  EXPECT_NEAR(r.sigma[0], 2, 1e-15);
  EXPECT_NEAR(r.sigma[1], 1, 1e-15);
  EXPECT_LT((r.U.cwiseAbs() - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((r.V.cwiseAbs() - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(TruncatedSvd, MatchesJacobiOracle) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::MatrixXd a = random_dense(rng, 50, 50);
    auto ref = oracle::jacobi_svd(testutil::to_dense(a));
    for (auto opt : {SvdOptions{}, iterative()}) {
      for (Eigen::Index k : {5, 20, 50}) {
        auto r = truncated_svd(DenseOperator{a}, k, 7, opt);
        EXPECT_TRUE(r.converged);
        for (Eigen::Index c = 0; c < k; ++c) ASSERT_NEAR(r.sigma[c], ref.sigma[static_cast<std::size_t>(c)], 1e-8);
        expect_orthonormal(r.U, 1e-8);
        expect_orthonormal(r.V, 1e-8);
        // Eckart-Young: the residual carries exactly the discarded spectrum.
        double tail = 0;
        for (std::size_t c = static_cast<std::size_t>(k); c < ref.sigma.size(); ++c) tail += ref.sigma[c] * ref.sigma[c];
        const double resid = (a - r.U * r.sigma.asDiagonal() * r.V.transpose()).squaredNorm();
        ASSERT_NEAR(resid, tail, 1e-8 * a.squaredNorm());
      }
    }
  }
}

TEST(TruncatedSvd, IterativeOnSparseResiduals) {
  std::mt19937_64 rng(2);
  auto x = testutil::random_table(rng, 120, 90, 0.8);
  for (auto spec : {TransformSpec(TransformKind::ttest), TransformSpec(TransformKind::ppmi)}) {
    auto m = apply_transform(table(x), spec);
    Eigen::BDCSVD<Eigen::MatrixXd> full(m.dense());
    auto f = truncated_svd(m, 10, 3, iterative());
    EXPECT_TRUE(f.converged);
    for (Eigen::Index c = 0; c < 10; ++c) EXPECT_NEAR(f.sigma[c], full.singularValues()[c], 1e-9);
  }
}

TEST(TruncatedSvd, DeterministicForSeed) {
  std::mt19937_64 rng(3);
  Eigen::MatrixXd a = random_dense(rng, 40, 30);
  auto r1 = truncated_svd(DenseOperator{a}, 6, 11, iterative());
  auto r2 = truncated_svd(DenseOperator{a}, 6, 11, iterative());
  EXPECT_TRUE((r1.U.array() == r2.U.array()).all());
  EXPECT_TRUE((r1.sigma.array() == r2.sigma.array()).all());
}

TEST(TruncatedSvd, RefiningKKeepsLeadingComponents) {
  std::mt19937_64 rng(4);
  Eigen::MatrixXd a = random_dense(rng, 60, 45);
  // Vector accuracy of the iterative path is limited by the spectral gap.
  for (auto [opt, vec_tol] : {std::pair{SvdOptions{}, 1e-10}, std::pair{iterative(), 1e-5}}) {
    auto small = truncated_svd(DenseOperator{a}, 5, 1, opt);
    auto big = truncated_svd(DenseOperator{a}, 15, 2, opt);
    EXPECT_LT((small.sigma - big.sigma.head(5)).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((small.U - big.U.leftCols(5)).cwiseAbs().maxCoeff(), vec_tol);
  }
}

TEST(TruncatedSvd, CanonicalSigns) {
  std::mt19937_64 rng(5);
  Eigen::MatrixXd a = random_dense(rng, 8, 6);
  auto r = truncated_svd(DenseOperator{a}, 6);
  for (Eigen::Index c = 0; c < 6; ++c) {
    Eigen::Index first = 0;
    while (std::abs(r.U(first, c)) < 1e-12) ++first;
    EXPECT_GT(r.U(first, c), 0);
  }
  Eigen::MatrixXd neg = -a;
  auto s = truncated_svd(DenseOperator{neg}, 6);
  EXPECT_LT((r.U - s.U).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((r.V + s.V).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TruncatedSvd, TiesOrderedByLeadingCoordinate) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Identity(3, 3);
  auto r = truncated_svd(DenseOperator{d}, 3);
  EXPECT_LT((r.U - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(TruncatedSvd, RejectsBadK) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Identity(3, 2);
  EXPECT_THROW(truncated_svd(DenseOperator{d}, 0), ConfigError);
  EXPECT_THROW(truncated_svd(DenseOperator{d}, 3), ConfigError);
}

TEST(TruncatedSvd, ReportsNonConvergence) {
  std::mt19937_64 rng(6);
  Eigen::MatrixXd a = random_dense(rng, 60, 60);
  SvdOptions o = iterative();
  o.max_iterations = 2;
  auto r = truncated_svd(DenseOperator{a}, 20, 0, o);
  EXPECT_FALSE(r.converged);
  EXPECT_FALSE(r.warnings.empty());
}

TEST(CorrespondenceAnalysis, InertiaAndChiSquareDistances) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 100; ++rep) {
    auto x = testutil::random_table(rng, 2 + rng() % 7, 2 + rng() % 7);
    auto m = ttest_matrix(props(x));
    const Eigen::Index full = std::min(m.rows(), m.cols());
    auto f = truncated_svd(m, full);
    const double chi = oracle::chi_square(x) / oracle::grand_total(x);
    ASSERT_NEAR(f.sigma.squaredNorm(), chi, 1e-10 * chi);
    // Full-rank reconstruction.
    ASSERT_LT((m.dense() - f.U * f.sigma.asDiagonal() * f.V.transpose()).cwiseAbs().maxCoeff(), 1e-8);
    auto pc = embeddings(f, EmbeddingSpec(full, 1), Side::target, CoordinateSystem::principal);
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t k = i + 1; k < x.size(); ++k) {
        double d = (pc.vectors.row(static_cast<Eigen::Index>(i)) - pc.vectors.row(static_cast<Eigen::Index>(k))).norm();
        ASSERT_NEAR(d, std::sqrt(oracle::chi2_distance_sq(x, i, k)), 1e-8);
      }
  }
}

TEST(CorrespondenceAnalysis, ThreeOneDistanceIsOne) {
  auto f = truncated_svd(ttest_matrix(props({{3, 1}, {1, 3}})), 2);
  auto pc = embeddings(f, EmbeddingSpec(2, 1), Side::target, CoordinateSystem::principal);
  EXPECT_NEAR((pc.vectors.row(0) - pc.vectors.row(1)).norm(), 1.0, 1e-14);
  EXPECT_NEAR(oracle::chi2_distance_sq({{3, 1}, {1, 3}}, 0, 1), 1.0, 1e-15);
}

TEST(Gsvd, WpmiFactorization) {
  auto t = props({{4, 0}, {0, 4}});
  auto f = gsvd_factorize(t, pmi_matrix(t), 2);
  EXPECT_TRUE(f.gsvd);
  EXPECT_EQ(f.label(), "PMI-GSVD");
  auto ref = oracle::jacobi_svd(testutil::to_dense(wpmi_matrix(t).dense()));
  EXPECT_NEAR(f.sigma[0], ref.sigma[0], 1e-15);
  EXPECT_NEAR(f.sigma[1], ref.sigma[1], 1e-15);
  EXPECT_NEAR(f.sigma[0], 0.5 * std::log(2.0), 1e-15);

  auto u = props({{3, 3}, {3, 3}});
  auto g = gsvd_factorize(u, pmi_matrix(u), 2);
  EXPECT_EQ(g.sigma[0], 0.0);
  EXPECT_EQ(g.sigma[1], 0.0);
  EXPECT_THROW(gsvd_factorize(u, ppmi_matrix(u), 1), ConfigError);
}

TEST(Gsvd, MatchesWpmiOnRandomTables) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 30; ++rep) {
    auto t = props(testutil::random_table(rng, 2 + rng() % 6, 2 + rng() % 6));
    const Eigen::Index k = std::min(t.row_margins.size(), t.col_margins.size());
    auto f = gsvd_factorize(t, pmi_matrix(t), k);
    auto ref = oracle::jacobi_svd(testutil::to_dense(wpmi_matrix(t).dense()));
    for (Eigen::Index c = 0; c < k; ++c) ASSERT_NEAR(f.sigma[c], ref.sigma[static_cast<std::size_t>(c)], 1e-12);
  }
}

TEST(Embeddings, CoordinateSystems) {
  std::mt19937_64 rng(9);
  auto x = testutil::random_table(rng, 6, 5);
  auto f = truncated_svd(ttest_matrix(props(x)), 4);
  auto e0 = embeddings(f, EmbeddingSpec(4, 0));
  EXPECT_EQ(e0.vectors, f.U.leftCols(4));
  auto e = embeddings(f, EmbeddingSpec(2, 0.5));
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index c = 0; c < 2; ++c) EXPECT_EQ(e.vectors(i, c), f.U(i, c) * std::pow(f.sigma[c], 0.5));
  auto st = embeddings(f, EmbeddingSpec(3, 0.5), Side::target, CoordinateSystem::standard);
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index c = 0; c < 3; ++c)
      EXPECT_NEAR(st.vectors(i, c), f.U(i, c) * std::sqrt(f.sigma[c]) / std::sqrt(f.row_margins[i]), 1e-15);
  auto pr = embeddings(f, EmbeddingSpec(3, 0), Side::context, CoordinateSystem::principal);
  EXPECT_EQ(pr.p, 1.0);
  for (Eigen::Index j = 0; j < 5; ++j)
    for (Eigen::Index c = 0; c < 3; ++c)
      EXPECT_NEAR(pr.vectors(j, c), f.V(j, c) * f.sigma[c] / std::sqrt(f.col_margins[j]), 1e-15);
  EXPECT_THROW(embeddings(f, EmbeddingSpec(5, 0)), ConfigError);
  EXPECT_THROW(EmbeddingSpec(0, 0), ConfigError);
  EXPECT_THROW(EmbeddingSpec(2, -1), ConfigError);
}

TEST(Embeddings, FullRankRowsOfUHaveUnitNorm) {
  std::mt19937_64 rng(10);
  auto t = props(testutil::random_table(rng, 7, 7));
  auto f = truncated_svd(ppmi_matrix(t), 7);
  auto e = embeddings(f, EmbeddingSpec(7, 0));
  if (f.rank == 7) {
    for (Eigen::Index i = 0; i < 7; ++i) EXPECT_NEAR(e.vectors.row(i).norm(), 1.0, 1e-12);
  }
}

TEST(Embeddings, NonCaRejectsStandardCoordinates) {
  auto t = props({{4, 1}, {1, 4}});
  auto f = truncated_svd(ppmi_matrix(t), 1);
  EXPECT_THROW(embeddings(f, EmbeddingSpec(1, 0), Side::target, CoordinateSystem::standard),
               UnsupportedCoordinateError);
  EXPECT_THROW(embeddings(gsvd_factorize(t, pmi_matrix(t), 1), EmbeddingSpec(1, 0), Side::target,
                          CoordinateSystem::principal),
               UnsupportedCoordinateError);
}

TEST(Embeddings, SignFlipsKeepCosines) {
  std::mt19937_64 rng(11);
  auto f = truncated_svd(ttest_matrix(props(testutil::random_table(rng, 8, 8))), 5);
  auto e = embeddings(f, EmbeddingSpec(5, 0.5));
  Factorization g = f;
  g.U.col(1) *= -1;
  g.V.col(1) *= -1;
  g.U.col(3) *= -1;
  g.V.col(3) *= -1;
  auto h = embeddings(g, EmbeddingSpec(5, 0.5));
  for (Eigen::Index i = 0; i < 8; ++i)
    for (Eigen::Index k = 0; k < 8; ++k) {
      Eigen::VectorXd a = e.vectors.row(i), b = e.vectors.row(k), c = h.vectors.row(i), d = h.vectors.row(k);
      if (a.norm() == 0 || b.norm() == 0) continue;
      ASSERT_NEAR(cosine(a, b), cosine(c, d), 1e-14);
    }
}

TEST(Embeddings, SymmetricInputGivesSameTargetAndContextScores) {
  // A symmetric table: target and context vectors differ only by per-dimension signs.
  std::mt19937_64 rng(12);
  auto x = testutil::random_table(rng, 9, 9);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < i; ++j) x[i][j] = x[j][i];
  auto f = truncated_svd(power_ca_matrix(table(x), 0.5), 6);
  auto t = embeddings(f, EmbeddingSpec(6, 0), Side::target);
  auto c = embeddings(f, EmbeddingSpec(6, 0), Side::context);
  for (Eigen::Index i = 0; i < 9; ++i)
    for (Eigen::Index k = i + 1; k < 9; ++k) {
      Eigen::VectorXd a = t.vectors.row(i), b = t.vectors.row(k), p = c.vectors.row(i), q = c.vectors.row(k);
      ASSERT_NEAR(cosine(a, b), cosine(p, q), 1e-8);
    }
}

TEST(Files, EmbeddingRoundTrip) {
  auto t = props({{4, 1, 0}, {1, 4, 2}, {0, 2, 3}});
  auto f = truncated_svd(ttest_matrix(t), 2);
  Vocabulary v({"x", "y", "z"}, {1, 1, 1});
  auto e = embeddings(f, EmbeddingSpec(2, 0.5), Side::target, CoordinateSystem::standard);
  auto text = write_embeddings(e, v);
  EXPECT_EQ(text.substr(0, text.find('\n')), "%embeddings k=2 p=0.5 coords=standard");
  auto back = read_embeddings(text, v);
  EXPECT_EQ(back.vectors, e.vectors);
  EXPECT_EQ(back.ids, e.ids);
  EXPECT_EQ(back.coordinates, CoordinateSystem::standard);
  EXPECT_THROW(read_embeddings("%embeddings k=2 p=0 coords=alternative\nx\t1\n", v), ParseError);
}

TEST(Files, FactorizationRoundTrip) {
  std::mt19937_64 rng(13);
  auto t = props(testutil::random_table(rng, 6, 6));
  auto f = gsvd_factorize(t, pmi_matrix(t), 3);
  auto files = write_factorization(f);
  auto g = read_factorization(files);
  EXPECT_EQ(g.sigma, f.sigma);
  EXPECT_EQ(g.U, f.U);
  EXPECT_EQ(g.V, f.V);
  EXPECT_EQ(g.row_margins, f.row_margins);
  EXPECT_EQ(g.row_ids, f.row_ids);
  EXPECT_EQ(g.label(), "PMI-GSVD");
  EXPECT_EQ(g.rank, f.rank);
  auto again = write_factorization(g);
  EXPECT_EQ(again.sigma, files.sigma);
  EXPECT_EQ(again.u, files.u);
}

TEST(DimensionGrid, DefaultGridCapped) {
  auto g = default_dimension_grid(250);
  EXPECT_EQ(g, (std::vector<Eigen::Index>{2, 50, 100, 200}));
  EXPECT_EQ(default_dimension_grid(100000).size(), 21u);
  EXPECT_EQ(default_dimension_grid(100000).back(), 10000);
}
