#include <cmath>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "smalldet/determinant.hpp"
#include "smalldet/errors.hpp"
#include "smalldet/random.hpp"

namespace smalldet {
namespace {

// O(n!) Laplace expansion along the first row.
double cofactor_det(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  if (n == 1) return m(0, 0);
  double s = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::MatrixXd minor(n - 1, n - 1);
    for (Eigen::Index r = 1; r < n; ++r)
      for (Eigen::Index c = 0, cc = 0; c < n; ++c)
        if (c != j) minor(r - 1, cc++) = m(r, c);
    s += ((j % 2) ? -1.0 : 1.0) * m(0, j) * cofactor_det(minor);
  }
  return s;
}

Eigen::MatrixXd random_matrix(Eigen::Index n, Eigen::Index m, std::uint64_t seed) {
  auto rng = CounterRng::keyed(seed, 9, 0);
  StandardNormal z;
  Eigen::MatrixXd a(n, m);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = z(rng);
  return a;
}

TEST(SquareDet, Identity) {
  const auto r = square_det(Eigen::Matrix3d::Identity());
  EXPECT_EQ(r.sign, 1);
  EXPECT_DOUBLE_EQ(*r.value, 1.0);
  EXPECT_DOUBLE_EQ(r.log_abs_det, 0.0);
}

TEST(SquareDet, RepeatedRowIsZero) {
  Eigen::Matrix3d m;
  m << 1, 2, 3, 4, 5, 6, 1, 2, 3;
  const auto r = square_det(m);
  EXPECT_EQ(r.sign, 0);
  EXPECT_TRUE(std::isinf(r.log_abs_det));
  EXPECT_EQ(*r.value, 0.0);
}

TEST(SquareDet, MatchesCofactorExpansion) {
  for (int n = 1; n <= 5; ++n) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto m = random_matrix(n, n, seed * 31 + n);
      const double want = cofactor_det(m);
      const auto got = square_det(m);
      ASSERT_TRUE(got.value.has_value());
      EXPECT_NEAR(*got.value, want, 1e-10 * std::max(1.0, std::abs(want)));
      EXPECT_EQ(got.sign, want > 0 ? 1 : -1);
    }
  }
}

TEST(SquareDet, LogPathSurvivesUnderflow) {
  Eigen::Vector4d d(1e-200, 1e-200, 1e-200, 3.0);
  const auto r = square_det(Eigen::MatrixXd(d.asDiagonal()));
  EXPECT_EQ(r.sign, 1);
  EXPECT_FALSE(r.value.has_value());
  const double want = 3.0 * std::log(1e-200) + std::log(3.0);
  EXPECT_NEAR(r.log_abs_det, want, 1e-9 * std::abs(want));
}

TEST(SquareDet, SignOfNegativeAndFloat) {
  Eigen::Matrix2d m;
  m << 0, 1, 1, 0;
  EXPECT_EQ(square_det(m).sign, -1);
  Eigen::Matrix2f f;
  f << 2, 0, 0, 3;
  EXPECT_NEAR(*square_det(f).value, 6.0f, 1e-5f);
  EXPECT_THROW(square_det(Eigen::MatrixXd(2, 3)), UsageError);
}

TEST(GramDet, IdentityAndShape) {
  const auto r = gram_det(Eigen::MatrixXd::Identity(3, 3));
  EXPECT_NEAR(*r.value, 1.0, 1e-15);
  EXPECT_EQ(r.method, DetMethod::cholesky);
  EXPECT_THROW(gram_det(Eigen::MatrixXd::Ones(3, 2)), UsageError);
}

TEST(GramDet, DependentRowsGiveZero) {
  auto a = random_matrix(3, 5, 1);
  a.row(2) = a.row(0) - 0.5 * a.row(1);
  const auto r = gram_det(a);
  EXPECT_EQ(r.sign, 0);
  EXPECT_EQ(r.method, DetMethod::svd_fallback);
}

TEST(GramDet, ZeroMatrix) { EXPECT_TRUE(gram_det(Eigen::MatrixXd::Zero(2, 3)).is_zero()); }

TEST(GramDet, MatchesExplicitGram) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto a = random_matrix(3, 5, 100 + seed);
    const Eigen::MatrixXd g = a * a.transpose();
    const double want = cofactor_det(g);
    EXPECT_NEAR(*gram_det(a).value, want, 1e-10 * want);
    EXPECT_NEAR(*gram_det(a).value, *square_det(g).value, 1e-9 * want);
  }
}

TEST(GramDet, WidePathUsesQr) {
  const auto a = random_matrix(3, 100, 5);
  const auto r = gram_det(a);
  EXPECT_EQ(r.method, DetMethod::qr);
  const Eigen::MatrixXd g = a * a.transpose();
  EXPECT_NEAR(r.log_abs_det, square_det(g).log_abs_det, 1e-10);
}

TEST(Adjugate, MatchesSignedCofactors) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = random_matrix(4, 6, 200 + seed);
    const Eigen::MatrixXd s = a * a.transpose();
    const Eigen::MatrixXd adj = adjugate(s);
    for (Eigen::Index i = 0; i < 4; ++i) {
      for (Eigen::Index j = 0; j < 4; ++j) {
        Eigen::MatrixXd minor(3, 3);
        for (Eigen::Index r = 0, rr = 0; r < 4; ++r) {
          if (r == j) continue;
          for (Eigen::Index c = 0, cc = 0; c < 4; ++c)
            if (c != i) minor(rr, cc++) = s(r, c);
          ++rr;
        }
        const double want = (((i + j) % 2) ? -1.0 : 1.0) * cofactor_det(minor);
        EXPECT_NEAR(adj(i, j), want, 1e-9 * std::max(1.0, adj.cwiseAbs().maxCoeff()));
      }
    }
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(adj).eigenvalues().minCoeff(), 0.0);
  }
}

TEST(Adjugate, RejectsSingularAndAsymmetric) {
  Eigen::Matrix2d s;
  s << 1, 1, 1, 1;
  EXPECT_THROW(adjugate(s), PreconditionError);
  s << 2, 1, 0, 2;
  EXPECT_THROW(adjugate(s), PreconditionError);
}

TEST(AppendColumn, IdentityAndMonotonicity) {
  int cases = 0;
  for (int n = 1; n <= 5; ++n) {
    for (int m = n; m <= n + 3; ++m) {
      for (std::uint64_t seed = 0; seed < 10; ++seed, ++cases) {
        const auto a = random_matrix(n, m, 1000 * n + 10 * m + seed);
        const Eigen::VectorXd col = random_matrix(n, 1, 7000 + cases);
        const auto check = append_column_identity_check(a, col);
        EXPECT_LE(std::abs(check.gap), 1e-8 * std::max(1.0, std::abs(check.lhs)));
        EXPECT_GE(check.lhs, -1e-10);
        EXPECT_GE(check.rhs, -1e-10);
      }
    }
  }
  EXPECT_EQ(cases, 200);
}

TEST(AppendColumn, ZeroColumnLeavesDetUnchanged) {
  const auto a = random_matrix(3, 4, 77);
  const auto check = append_column_identity_check(a, Eigen::VectorXd::Zero(3));
  EXPECT_NEAR(check.lhs, 0.0, 1e-10);
  EXPECT_EQ(check.rhs, 0.0);
}

TEST(AppendColumn, RejectsMismatchedColumn) {
  EXPECT_THROW(append_column_identity_check(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Ones(3)), UsageError);
}

TEST(ComplexDet, DeterministicAndConvention) {
  EXPECT_EQ(complex_gaussian_log_det(3, 11, 4), complex_gaussian_log_det(3, 11, 4));
  EXPECT_NE(complex_gaussian_log_det(3, 11, 4), complex_gaussian_log_det(3, 11, 5));
  // unit-per-part doubles every entry variance: det MM* scales by 2^n
  const double a = complex_gaussian_log_det(3, 11, 4, ComplexConvention::unit_complex);
  const double b = complex_gaussian_log_det(3, 11, 4, ComplexConvention::unit_per_part);
  EXPECT_NEAR(b - a, 3.0 * std::log(2.0), 1e-12);
  EXPECT_NEAR(std::log(complex_gaussian_det(3, 11, 4)), a, 1e-12);
}

TEST(ComplexDet, MeanMatchesWishart) {
  // E det MM* = n! for unit complex variance
  double s = 0.0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) s += complex_gaussian_det(3, 21, static_cast<std::uint64_t>(i));
  EXPECT_NEAR(s / draws, 6.0, 0.15);
}

}  // namespace
}  // namespace smalldet
