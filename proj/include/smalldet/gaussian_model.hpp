#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "smalldet/random.hpp"

namespace smalldet {

/// 1-based position (row, col) of an entry tau_ij of the random matrix.
struct EntryIndex {
  int row = 1;
  int col = 1;

  /// max(row, col).
  int level() const noexcept { return row > col ? row : col; }

  /// True iff this entry belongs to the conditioning set of diagonal entry (k, k),
  /// i.e. min(row, col) < k.
  bool conditions_diagonal(int k) const noexcept { return (row < col ? row : col) < k; }

  friend bool operator==(const EntryIndex&, const EntryIndex&) = default;
};

/// Enumeration of the n*m entries of an n x m matrix such that, for every
/// k <= n, all entries with min(i, j) < k come before (k, k).
///
/// Entries are grouped by min(i, j); inside group k the diagonal entry comes
/// first and the remaining entries follow in row-major order. The prefix
/// preceding (k, k) is therefore exactly its conditioning set.
class EntryOrdering {
 public:
  EntryOrdering(int n, int m, std::vector<EntryIndex> entries);

  int rows() const noexcept { return n_; }
  int cols() const noexcept { return m_; }
  Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(entries_.size()); }

  const std::vector<EntryIndex>& entries() const noexcept { return entries_; }
  const EntryIndex& operator[](Eigen::Index pos) const { return entries_[static_cast<std::size_t>(pos)]; }

  /// Position of (row, col) in the ordering.
  Eigen::Index position(int row, int col) const;

  /// Position of (k, k); equals the size of its conditioning set.
  Eigen::Index diagonal_position(int k) const { return position(k, k); }

 private:
  int n_;
  int m_;
  std::vector<EntryIndex> entries_;
  std::vector<Eigen::Index> lookup_;  // row-major (i-1)*m + (j-1) -> position
};

/// Canonical conditioning order for an n x m matrix. Requires 1 <= n <= m.
EntryOrdering build_ordering(int n, int m);

/// Explicit covariance over a fixed list of entries, as read from a file.
struct DenseCovariance {
  int n = 0;
  int m = 0;
  std::vector<EntryIndex> entries;
  Eigen::MatrixXd covariance;
};

/// Reads the dense covariance text format:
///   "n m p", then p lines "i j", then p rows of p reals.
DenseCovariance read_dense_covariance(std::istream& in);
DenseCovariance load_dense_covariance(const std::string& path);
void write_dense_covariance(std::ostream& out, const DenseCovariance& cov);

/// Joint centered Gaussian law of the entry array.
struct CovarianceSpec {
  enum class Kind { iid, diagonal, equicorrelated, ar1, dense };

  Kind kind = Kind::iid;
  /// diagonal: standard deviations of tau_kk (missing entries default to 1).
  std::vector<double> sigma;
  /// equicorrelated / ar1 correlation parameter.
  double rho = 0.0;
  /// dense: explicit covariance; source path kept for diagnostics.
  DenseCovariance dense;
  std::string dense_path;

  static CovarianceSpec iid() { return {}; }
  static CovarianceSpec diagonal(std::vector<double> sigma = {});
  static CovarianceSpec equicorrelated(double rho);
  static CovarianceSpec ar1(double rho);
  static CovarianceSpec from_dense(DenseCovariance cov, std::string path = {});

  /// Stable textual form; two specs with the same description define the same law.
  std::string describe() const;
};

std::string_view to_string(CovarianceSpec::Kind kind);

/// Parses "kind=equicorrelated rho=0.5", "iid", "kind=diagonal sigma=1,2",
/// "kind=dense file=cov.txt" or a bare path to a dense covariance file.
CovarianceSpec parse_spec(std::string_view text);

/// Covariance matrix of the entry vector listed in ordering order.
/// Throws PreconditionError if the result is not PSD within tolerance and
/// UsageError if a dense spec does not cover the requested entries.
Eigen::MatrixXd materialize_covariance(const CovarianceSpec& spec, const EntryOrdering& ordering);

/// Conditional residual variances d_1..d_n.
struct DValues {
  Eigen::VectorXd values;
  /// prod_k sqrt(d_k); zero iff some d_k is zero.
  double epsilon0_scale = 0.0;

  bool all_positive() const { return (values.array() > 0.0).all(); }
};

/// Relative singular-value cutoff used by the regression pseudo-inverse.
inline constexpr double kRankTolerance = 1e-10;

/// d_k = Var(tau_kk) - c^T Sigma^+ c, the residual variance of regressing
/// tau_kk on {tau_ij : min(i, j) < k, j <= m}.
DValues compute_d_values(const CovarianceSpec& spec, int n, int m);

/// Same computation on an already materialized covariance.
DValues compute_d_values(const Eigen::MatrixXd& covariance, const EntryOrdering& ordering);

/// One draw of the entry matrix.
struct SampledMatrix {
  Eigen::MatrixXd values;
  std::uint64_t seed = 0;
};

/// Draws entry matrices x = F z with F F^T = covariance.
///
/// F is the Cholesky factor when the covariance is numerically positive
/// definite. Otherwise a diagonally pivoted LDL^T is used and pivots below
/// the rank tolerance are zeroed, so semidefinite laws still sample.
class GaussianSampler {
 public:
  GaussianSampler(const CovarianceSpec& spec, const EntryOrdering& ordering);
  GaussianSampler(const Eigen::MatrixXd& covariance, const EntryOrdering& ordering);

  const EntryOrdering& ordering() const noexcept { return ordering_; }
  const Eigen::MatrixXd& factor() const noexcept { return factor_; }
  bool pivoted() const noexcept { return pivoted_; }

  /// Fills out (resized to n x m) with one draw; consumes size() normals from rng.
  void sample(CounterRng& rng, Eigen::MatrixXd& out) const;

  /// Flat entry vector in ordering order.
  Eigen::VectorXd sample_entries(CounterRng& rng) const;

 private:
  void factorize(const Eigen::MatrixXd& covariance);

  EntryOrdering ordering_;
  Eigen::MatrixXd factor_;
  bool pivoted_ = false;
};

/// One seeded draw; identical inputs give bit-identical output.
SampledMatrix sample_matrix(const CovarianceSpec& spec, const EntryOrdering& ordering,
                            std::uint64_t seed);

}  // namespace smalldet
