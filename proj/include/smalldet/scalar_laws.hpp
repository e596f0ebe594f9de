#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "smalldet/gaussian_model.hpp"
#include "smalldet/random.hpp"

namespace smalldet {

/// 2 / sqrt(2 pi): density of |X| at zero for X ~ N(0, 1).
inline constexpr double kAbsNormalDensityAtZero = 0.79788456080286535588;

/// Phi(x) for the standard normal.
double normal_cdf(double x);

/// P(|Y + shift| <= eps) for Y ~ N(0, sigma^2). sigma = 0 gives the indicator
/// of |shift| <= eps. Throws UsageError for negative sigma or eps.
double gaussian_interval_prob(double sigma, double shift, double eps);

/// Density of log|X| for X ~ N(0, 1): (2/sqrt(2 pi)) exp(-e^{2u}/2 + u).
double log_abs_gaussian_density(double u);

/// Uniform lattice used by the product law. Grid points are integer
/// multiples of `step`; bounds are widened outward to the lattice.
struct ProductLawGrid {
  double t_min = -40.0;
  /// Right edge of the reported table; unset means 4 * n.
  std::optional<double> t_max;
  double step = 0x1.0p-7;
  /// Truncation of the log|X| density used as the convolution kernel.
  double u_min = -45.0;
  double u_max = 6.0;
};

/// Gridded CDF of S_n = sum_{j <= n} log|X_j| on t = log eps.
struct ProductLawTable {
  int n = 0;
  /// Grid point i is t = (first_index + i) * grid_step.
  long first_index = 0;
  double grid_step = 0.0;
  std::vector<double> cdf;
  std::pair<double, double> truncation_bounds{0.0, 0.0};
  /// Absolute error bound for cdf_at(): kernel truncation, boundary handling,
  /// a step-halving (Richardson) estimate of quadrature error, an estimate of
  /// the interpolation error between grid points, and a roundoff floor.
  double error_estimate = 0.0;

  std::size_t size() const noexcept { return cdf.size(); }
  double t(std::size_t i) const noexcept { return static_cast<double>(first_index + static_cast<long>(i)) * grid_step; }
  double t_min() const noexcept { return t(0); }
  double t_max() const noexcept { return t(cdf.size() - 1); }
  std::vector<double> grid() const;

  /// Monotone piecewise-cubic interpolation of the CDF at t.
  /// Throws TableRangeError outside [t_min, t_max].
  double cdf_at(double t) const;
};

/// CDF of S_n by recursive trapezoidal convolution of the analytic n = 1 law
/// with log_abs_gaussian_density. Throws UsageError for n < 1, nonpositive
/// step or fewer than 64 grid points.
ProductLawTable build_product_law(int n, const ProductLawGrid& grid = {});

/// One convolution step: the law of S_{n+1} from the table of S_n, reported on
/// the lattice of `grid`. Arguments below the lower table's range are taken
/// as 0 and above it as 1; the resulting bias is added to error_estimate.
ProductLawTable convolve_product_law(const ProductLawTable& lower, const ProductLawGrid& grid);

/// P(prod |X_j| <= eps) from the table. Throws TableRangeError when log eps
/// lies outside the table; callers rebuild with a wider grid.
double product_small_dev(const ProductLawTable& table, double eps);

/// (2/sqrt(2 pi))^n * eps * |log eps|^{n-1} / (n-1)!, the eps -> 0 asymptote.
/// Requires 0 < eps < 1.
double asymptotic_product_prob(int n, double eps);

struct CorollaryBound {
  double eps0 = 0.0;
  double bound = 0.0;
};

/// eps0 = eps / prod sqrt(d_k) and the product-law probability at eps0.
/// Throws PreconditionError if some d_k = 0.
CorollaryBound corollary_bound(double eps, const DValues& d, const ProductLawTable& table);

/// Product of independent Gamma(shape_j, scale) factors.
struct GammaProductSpec {
  std::vector<double> shapes;
  double scale = 1.0;

  void validate() const;
};

/// Gamma(shape, scale) draw. Marsaglia-Tsang squeeze/rejection for shape >= 1;
/// shape < 1 boosts via G_a = G_{a+1} U^{1/a}. Returned in log form so small
/// shapes cannot underflow.
double log_gamma_sample(double shape, double scale, CounterRng& rng);

/// log of one draw of prod G_j, keyed by (seed, index).
double log_gamma_product_sample(const GammaProductSpec& spec, std::uint64_t seed, std::uint64_t index = 0);

/// One draw of prod G_j; deterministic per (seed, index).
double gamma_product_sampler(const GammaProductSpec& spec, std::uint64_t seed, std::uint64_t index = 0);

/// CDF of prod G_j, tabulated on v = log x by numerical convolution of the
/// log-gamma densities (the first factor uses the regularized incomplete gamma).
class GammaProductLaw {
 public:
  explicit GammaProductLaw(GammaProductSpec spec, double step = 0x1.0p-6);

  const GammaProductSpec& spec() const noexcept { return spec_; }
  double error_estimate() const noexcept { return table_.error_estimate; }

  /// P(prod G_j <= x); 0 below and 1 above the tabulated range.
  double cdf(double x) const;
  double log_cdf_arg(double v) const;

 private:
  GammaProductSpec spec_;
  ProductLawTable table_;
};

/// Monotone piecewise-cubic Hermite interpolation of nondecreasing samples
/// cdf[i] at t = t0 + i * step. Derivatives are five-point centered
/// differences (three-point at the ends) limited to
/// [0, 3 * min(adjacent secants)], which keeps every segment monotone.
double monotone_cubic_eval(std::span<const double> cdf, double t0, double step, double t);

}  // namespace smalldet
