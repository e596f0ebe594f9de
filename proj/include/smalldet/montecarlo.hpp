#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "smalldet/determinant.hpp"
#include "smalldet/gaussian_model.hpp"
#include "smalldet/scalar_laws.hpp"

namespace smalldet {

/// Which determinant statistic a Monte Carlo experiment thresholds.
enum class DetEvent {
  square,  // |det_n| <= eps on the n x n matrix (m = n)
  gram,    // sqrt(det A A^T) < eps on the n x m matrix
};

std::string_view to_string(DetEvent event);

/// 64-bit FNV-1a of a string, printed as 16 hex digits.
std::string stable_hash(std::string_view text);

/// Contiguous block of trial indices [first, first + count).
struct TrialRange {
  std::uint64_t first = 0;
  std::uint64_t count = 0;
};

/// Base seed and the trial ranges that contributed to an estimate.
struct SeedRecord {
  std::uint64_t base_seed = 0;
  std::vector<TrialRange> ranges;
};

/// Exact two-sided Clopper-Pearson interval for hits out of trials.
/// trials = 0 gives [0, 1].
std::pair<double, double> clopper_pearson(std::uint64_t hits, std::uint64_t trials, double confidence);

/// Binomial estimate with its exact confidence interval. Estimates with the
/// same descriptor can be pooled with merge().
struct MonteCarloEstimate {
  std::uint64_t hits = 0;
  std::uint64_t trials = 0;
  double p_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 1.0;
  double confidence = 0.99;
  SeedRecord seed_record;
  /// Hash of the experiment (spec, n, m, eps, event); merge() requires equality.
  std::string descriptor;

  static MonteCarloEstimate from_counts(std::uint64_t hits, std::uint64_t trials, double confidence,
                                        std::string descriptor, SeedRecord seeds = {});
  /// No trials; the identity element of merge().
  static MonteCarloEstimate empty(std::string descriptor, double confidence = 0.99);
};

/// Pools counts and recomputes the interval. Throws UsageError when the
/// descriptors or confidence levels differ.
MonteCarloEstimate merge(const MonteCarloEstimate& a, const MonteCarloEstimate& b);

struct DetExperiment {
  CovarianceSpec spec;
  int n = 1;
  int m = 1;
  DetEvent event = DetEvent::square;
  std::uint64_t seed = 0;
  double confidence = 0.99;

  /// Descriptor hash for the given threshold.
  std::string descriptor(double eps) const;
};

/// Log of the experiment's statistic (log|det_n| or log sqrt(det AA^T))
/// for a sampled matrix; -inf when the determinant vanishes.
double log_statistic(const Eigen::MatrixXd& sample, DetEvent event);

/// Monte Carlo estimates of P(statistic <= eps) for every eps, from one pass
/// over the trial block. Trial t always draws from the stream keyed by
/// (seed, t), so counts do not depend on `workers` or on scheduling.
std::vector<MonteCarloEstimate> estimate_det_small_dev(const DetExperiment& experiment, std::span<const double> eps,
                                                       TrialRange trials, int workers = 1);

/// Single-threshold convenience form over trials [0, trials).
MonteCarloEstimate estimate_det_small_dev(const CovarianceSpec& spec, int n, int m, double eps, std::uint64_t trials,
                                          std::uint64_t seed, int workers = 1, DetEvent event = DetEvent::square);

/// Kolmogorov-Smirnov distance to a reference CDF.
struct KSResult {
  double statistic = 0.0;
  std::size_t sample_size = 0;
  /// Asymptotic Kolmogorov tail probability at the observed distance.
  double p_value_bound = 1.0;
};

/// P(K > lambda) for the limiting Kolmogorov distribution.
double kolmogorov_survival(double lambda);

/// One-sample KS fit. Requires at least 100 samples in nondecreasing order.
KSResult ks_fit(std::span<const double> sorted_samples, const std::function<double(double)>& law_cdf);

/// Sorted log det(M M^*) for complex Gaussian matrices over a trial block.
std::vector<double> sample_complex_log_dets(int n, std::uint64_t seed, TrialRange trials,
                                            ComplexConvention convention = ComplexConvention::unit_complex);

/// Best-fitting gamma-product law within a small family, chosen by KS distance.
struct GammaCalibration {
  GammaProductSpec spec;
  KSResult fit;
  std::size_t candidates = 0;
};

/// Searches shapes a0 + delta * (j - 1), j = 1..n, over a0 in {0.5, 1, 1.5, 2},
/// delta in {0, 0.5, 1} and scale in {0.5, 1, 2}. `sorted_log_samples` are
/// logs of the positive variates. The reported p-value is optimistic because
/// the law was fitted to the same samples; validate on an independent block.
GammaCalibration calibrate_gamma_product(std::span<const double> sorted_log_samples, int n);

/// KS fit of log samples against a gamma-product law.
KSResult ks_fit_gamma_product(std::span<const double> sorted_log_samples, const GammaProductLaw& law);

struct BoundCheckConfig {
  CovarianceSpec spec;
  int n = 1;
  int m = 1;
  DetEvent event = DetEvent::square;
  std::vector<double> eps;
  std::uint64_t trials = 1'000'000;
  std::uint64_t first_trial = 0;
  std::uint64_t seed = 0;
  int workers = 1;
  double confidence = 0.99;
  ProductLawGrid grid;
};

struct BoundRow {
  double eps = 0.0;
  int n = 0;
  int m = 0;
  std::string spec_hash;
  MonteCarloEstimate estimate;
  /// eps / prod sqrt(d_k), the argument passed to the product law.
  double eps0 = 0.0;
  double bound = 0.0;
  double bound_error = 0.0;
  /// ci_low <= bound.
  bool pass = false;
};

/// Estimates the determinant event for each eps and compares the lower
/// confidence limit against the product-law bound at eps / prod sqrt(d_k).
/// Throws PreconditionError if some d_k = 0 and TableRangeError if an eps
/// falls outside the product-law grid; both before any sampling.
std::vector<BoundRow> bound_check(const BoundCheckConfig& config);

}  // namespace smalldet
