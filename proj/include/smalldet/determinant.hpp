#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "smalldet/errors.hpp"

namespace smalldet {

enum class DetMethod { lu, cholesky, qr, svd_fallback };

/// Determinant carried as sign and log-magnitude.
///
/// `value` is populated only when sign * exp(log_abs_det) is representable
/// in Scalar; a zero determinant has sign 0, log_abs_det = -inf and value 0.
template <typename Scalar>
struct DetResult {
  std::optional<Scalar> value;
  Scalar log_abs_det = -std::numeric_limits<Scalar>::infinity();
  int sign = 0;
  DetMethod method = DetMethod::lu;

  bool is_zero() const noexcept { return sign == 0; }
};

/// Gram determinants are DetResult values with sign in {0, +1}.
template <typename Scalar>
using GramResult = DetResult<Scalar>;

namespace detail {

template <typename Scalar>
DetResult<Scalar> finish(int sign, Scalar log_abs, DetMethod method) {
  DetResult<Scalar> r;
  r.method = method;
  if (sign == 0 || !(log_abs > -std::numeric_limits<Scalar>::infinity())) {
    r.sign = 0;
    r.log_abs_det = -std::numeric_limits<Scalar>::infinity();
    r.value = Scalar(0);
    return r;
  }
  r.sign = sign;
  r.log_abs_det = log_abs;
  using std::log;
  const Scalar lo = log(std::numeric_limits<Scalar>::min());
  const Scalar hi = log(std::numeric_limits<Scalar>::max());
  if (log_abs > lo && log_abs < hi) {
    using std::exp;
    r.value = static_cast<Scalar>(sign) * exp(log_abs);
  }
  return r;
}

// det(A A^T) from the singular values of A; ranks below the usual
// max(n, m) * eps * sigma_max cutoff count as zero.
template <typename Scalar, typename Derived>
GramResult<Scalar> gram_det_svd(const Eigen::MatrixBase<Derived>& a) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Eigen::JacobiSVD<Matrix> svd(Matrix(a), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return finish<Scalar>(1, Scalar(0), DetMethod::svd_fallback);
  const Scalar cutoff = static_cast<Scalar>(std::max(a.rows(), a.cols())) * std::numeric_limits<Scalar>::epsilon()
                        * sv(0);
  Scalar log_abs = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (!(sv(i) > cutoff)) return finish<Scalar>(0, Scalar(0), DetMethod::svd_fallback);
    using std::log;
    log_abs += 2 * log(sv(i));
  }
  return finish<Scalar>(1, log_abs, DetMethod::svd_fallback);
}

}  // namespace detail

/// Determinant of a square matrix by partially pivoted LU, accumulated as
/// (sign, log|det|) so that products near underflow or overflow stay exact
/// in log space. An exactly zero pivot gives sign 0.
template <typename Derived>
DetResult<typename Derived::RealScalar> square_det(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  static_assert(!Eigen::NumTraits<Scalar>::IsComplex, "square_det expects a real matrix");
  if (m.rows() != m.cols()) throw UsageError("square_det: matrix is not square");
  if (m.rows() == 0) return detail::finish<Scalar>(1, Scalar(0), DetMethod::lu);
  Eigen::PartialPivLU<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> lu(m);
  const auto& packed = lu.matrixLU();
  int sign = static_cast<int>(lu.permutationP().determinant());
  Scalar log_abs = 0;
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    const Scalar u = packed(i, i);
    if (u == Scalar(0) || !std::isfinite(static_cast<double>(u))) {
      return detail::finish<Scalar>(0, Scalar(0), DetMethod::lu);
    }
    if (u < 0) sign = -sign;
    using std::abs;
    using std::log;
    log_abs += log(abs(u));
  }
  return detail::finish<Scalar>(sign, log_abs, DetMethod::lu);
}

/// Column count above which gram_det switches from forming A A^T to a QR of A^T.
inline constexpr Eigen::Index kGramExplicitMaxCols = 64;

/// det(A A^T) for an n x m matrix with n <= m.
///
/// For m <= 64 the Gram matrix is formed and Cholesky-factored; wider inputs
/// use Householder QR of A^T (det = prod R_ii^2). Either path falls back to
/// the SVD of A when a pivot drops below 1e-12 * trace(A A^T).
template <typename Derived>
GramResult<typename Derived::RealScalar> gram_det(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  static_assert(!Eigen::NumTraits<Scalar>::IsComplex, "gram_det expects a real matrix");
  if (a.rows() > a.cols()) throw UsageError("gram_det: requires n <= m");
  if (a.rows() == 0) return detail::finish<Scalar>(1, Scalar(0), DetMethod::cholesky);

  const Scalar trace = a.squaredNorm();
  if (trace == Scalar(0)) return detail::finish<Scalar>(0, Scalar(0), DetMethod::cholesky);
  const Scalar pivot_floor = Scalar(1e-12) * trace;
  using std::log;

  if (a.cols() <= kGramExplicitMaxCols) {
    const Matrix gram = a * a.transpose();
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() == Eigen::Success) {
      const auto diag = llt.matrixLLT().diagonal();
      bool ok = true;
      Scalar log_abs = 0;
      for (Eigen::Index i = 0; i < diag.size() && ok; ++i) {
        const Scalar pivot = diag(i) * diag(i);
        ok = pivot > pivot_floor;
        if (ok) log_abs += log(pivot);
      }
      if (ok) return detail::finish<Scalar>(1, log_abs, DetMethod::cholesky);
    }
  } else {
    Eigen::HouseholderQR<Matrix> qr(a.transpose());
    const auto r = qr.matrixQR().diagonal();
    bool ok = true;
    Scalar log_abs = 0;
    for (Eigen::Index i = 0; i < r.size() && ok; ++i) {
      const Scalar pivot = r(i) * r(i);
      ok = pivot > pivot_floor;
      if (ok) log_abs += log(pivot);
    }
    if (ok) return detail::finish<Scalar>(1, log_abs, DetMethod::qr);
  }
  return detail::gram_det_svd<Scalar>(a);
}

/// Adjugate det(S) * S^{-1} of a symmetric positive definite matrix. Its
/// (i, j) entry is the signed cofactor (-1)^{i+j} M_ij. Throws
/// PreconditionError when S is not positive definite.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> adjugate(const Eigen::MatrixBase<Derived>& s) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (s.rows() != s.cols()) throw UsageError("adjugate: matrix is not square");
  const Eigen::Index n = s.rows();
  if (n == 0) return Matrix(0, 0);
  using std::abs;
  const Scalar scale = s.cwiseAbs().maxCoeff();
  if (((s - s.transpose()).cwiseAbs().array() > Scalar(1e-12) * scale).any()) {
    throw PreconditionError("adjugate: matrix is not symmetric");
  }
  Eigen::LLT<Matrix> llt(s);
  const Scalar trace = s.trace();
  if (llt.info() != Eigen::Success || !(trace > 0)) throw PreconditionError("adjugate: matrix is not positive definite");
  const auto diag = llt.matrixLLT().diagonal();
  Scalar det = 1;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar pivot = diag(i) * diag(i);
    if (!(pivot > Scalar(1e-12) * trace)) throw PreconditionError("adjugate: matrix is not positive definite");
    det *= pivot;
  }
  Matrix adj = llt.solve(Matrix::Identity(n, n)) * det;
  return (adj + adj.transpose()) / Scalar(2);
}

/// Terms of det BB^T - det AA^T = a^T adj(AA^T) a for B = [A | a].
template <typename Scalar>
struct AppendColumnCheck {
  Scalar lhs = 0;  // gram_det(B) - gram_det(A)
  Scalar rhs = 0;  // a^T adj(A A^T) a
  Scalar gap = 0;  // lhs - rhs
};

template <typename DerivedA, typename DerivedV>
AppendColumnCheck<typename DerivedA::Scalar> append_column_identity_check(const Eigen::MatrixBase<DerivedA>& a,
                                                                          const Eigen::MatrixBase<DerivedV>& column) {
  using Scalar = typename DerivedA::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (column.cols() != 1 || column.rows() != a.rows()) {
    throw UsageError("append_column_identity_check: column length must equal the row count of A");
  }
  if (a.rows() > a.cols()) throw UsageError("append_column_identity_check: requires n <= m");
  Matrix b(a.rows(), a.cols() + 1);
  b << a, column;
  const auto det_a = gram_det(a);
  const auto det_b = gram_det(b);
  if (!det_a.value || !det_b.value) throw TableRangeError("append_column_identity_check: determinant not representable");
  const Matrix adj = adjugate(Matrix(a * a.transpose()));
  AppendColumnCheck<Scalar> out;
  out.lhs = *det_b.value - *det_a.value;
  out.rhs = (column.transpose() * adj * column).value();
  out.gap = out.lhs - out.rhs;
  return out;
}

/// Variance convention for complex Gaussian entries z = x + i y.
enum class ComplexConvention {
  unit_complex,   // Var(x) = Var(y) = 1/2, E|z|^2 = 1
  unit_per_part,  // Var(x) = Var(y) = 1,   E|z|^2 = 2
};

/// Expected |z|^2 of a single entry under the convention.
constexpr double complex_entry_variance(ComplexConvention c) noexcept {
  return c == ComplexConvention::unit_complex ? 1.0 : 2.0;
}

/// log det(M M^*) = 2 log|det M| for an n x n matrix with i.i.d. complex
/// Gaussian entries, keyed by (seed, index). Returns -inf when M is singular.
double complex_gaussian_log_det(int n, std::uint64_t seed, std::uint64_t index = 0,
                                ComplexConvention convention = ComplexConvention::unit_complex);

/// det(M M^*) as a nonnegative real; may underflow to 0 or overflow to inf.
double complex_gaussian_det(int n, std::uint64_t seed, std::uint64_t index = 0,
                            ComplexConvention convention = ComplexConvention::unit_complex);

}  // namespace smalldet
