#include "smalldet/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

#include <boost/math/special_functions/beta.hpp>

#include "smalldet/determinant.hpp"
#include "smalldet/errors.hpp"

namespace smalldet {

std::string_view to_string(DetEvent event) { return event == DetEvent::square ? "square" : "gram"; }

std::string stable_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::pair<double, double> clopper_pearson(std::uint64_t hits, std::uint64_t trials, double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw UsageError("confidence must lie in (0, 1)");
  if (hits > trials) throw UsageError("clopper_pearson: hits exceed trials");
  if (trials == 0) return {0.0, 1.0};
  const double alpha = 1.0 - confidence;
  const auto k = static_cast<double>(hits);
  const auto n = static_cast<double>(trials);
  const double low = hits == 0 ? 0.0 : boost::math::ibeta_inv(k, n - k + 1.0, alpha / 2.0);
  const double high = hits == trials ? 1.0 : boost::math::ibeta_inv(k + 1.0, n - k, 1.0 - alpha / 2.0);
  return {low, high};
}

MonteCarloEstimate MonteCarloEstimate::from_counts(std::uint64_t hits, std::uint64_t trials, double confidence,
                                                   std::string descriptor, SeedRecord seeds) {
  MonteCarloEstimate e;
  e.hits = hits;
  e.trials = trials;
  e.confidence = confidence;
  e.p_hat = trials ? static_cast<double>(hits) / static_cast<double>(trials) : 0.0;
  std::tie(e.ci_low, e.ci_high) = clopper_pearson(hits, trials, confidence);
  // Guard the ordering invariant against last-ulp disagreement of the beta quantiles.
  e.ci_low = std::min(e.ci_low, e.p_hat);
  e.ci_high = std::max(e.ci_high, e.p_hat);
  e.seed_record = std::move(seeds);
  e.descriptor = std::move(descriptor);
  return e;
}

MonteCarloEstimate MonteCarloEstimate::empty(std::string descriptor, double confidence) {
  return from_counts(0, 0, confidence, std::move(descriptor));
}

MonteCarloEstimate merge(const MonteCarloEstimate& a, const MonteCarloEstimate& b) {
  if (a.descriptor != b.descriptor) {
    throw UsageError("merge: incompatible experiments (" + a.descriptor + " vs " + b.descriptor + ")");
  }
  if (a.confidence != b.confidence) throw UsageError("merge: confidence levels differ");
  SeedRecord seeds = a.seed_record;
  if (a.trials == 0) seeds.base_seed = b.seed_record.base_seed;
  else if (b.trials != 0 && a.seed_record.base_seed != b.seed_record.base_seed) {
    throw UsageError("merge: estimates use different base seeds");
  }
  seeds.ranges.insert(seeds.ranges.end(), b.seed_record.ranges.begin(), b.seed_record.ranges.end());
  std::sort(seeds.ranges.begin(), seeds.ranges.end(),
            [](const TrialRange& x, const TrialRange& y) { return x.first < y.first; });
  return MonteCarloEstimate::from_counts(a.hits + b.hits, a.trials + b.trials, a.confidence, a.descriptor,
                                         std::move(seeds));
}

std::string DetExperiment::descriptor(double eps) const {
  std::ostringstream os;
  os << std::setprecision(17) << spec.describe() << " n=" << n << " m=" << m << " eps=" << eps
     << " event=" << to_string(event);
  return stable_hash(os.str());
}

double log_statistic(const Eigen::MatrixXd& sample, DetEvent event) {
  if (event == DetEvent::square) return square_det(sample).log_abs_det;
  return 0.5 * gram_det(sample).log_abs_det;
}

std::vector<MonteCarloEstimate> estimate_det_small_dev(const DetExperiment& experiment, std::span<const double> eps,
                                                       TrialRange trials, int workers) {
  if (eps.empty()) throw UsageError("estimate_det_small_dev: no eps values");
  for (double e : eps) {
    if (!(e > 0.0)) throw UsageError("estimate_det_small_dev: eps must be positive");
  }
  if (experiment.event == DetEvent::square && experiment.m != experiment.n) {
    throw UsageError("estimate_det_small_dev: the square event requires m = n");
  }
  if (workers < 1) throw UsageError("estimate_det_small_dev: workers must be >= 1");

  const auto ordering = build_ordering(experiment.n, experiment.m);
  const GaussianSampler sampler(experiment.spec, ordering);
  std::vector<double> log_eps(eps.size());
  std::transform(eps.begin(), eps.end(), log_eps.begin(), [](double e) { return std::log(e); });
  const bool strict = experiment.event == DetEvent::gram;

  const auto worker_count = static_cast<std::uint64_t>(std::max<std::uint64_t>(
      1, std::min<std::uint64_t>(static_cast<std::uint64_t>(workers), std::max<std::uint64_t>(trials.count, 1))));
  std::vector<std::vector<std::uint64_t>> counts(worker_count, std::vector<std::uint64_t>(eps.size(), 0));

  auto run_block = [&](std::uint64_t w) {
    const std::uint64_t begin = trials.first + trials.count * w / worker_count;
    const std::uint64_t end = trials.first + trials.count * (w + 1) / worker_count;
    Eigen::MatrixXd sample;
    auto& local = counts[w];
    for (std::uint64_t t = begin; t < end; ++t) {
      auto rng = CounterRng::keyed(experiment.seed, 0, t);
      sampler.sample(rng, sample);
      const double stat = log_statistic(sample, experiment.event);
      for (std::size_t e = 0; e < log_eps.size(); ++e) {
        if (strict ? stat < log_eps[e] : stat <= log_eps[e]) ++local[e];
      }
    }
  };

  if (worker_count == 1) {
    run_block(0);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(worker_count);
    for (std::uint64_t w = 0; w < worker_count; ++w) pool.emplace_back(run_block, w);
  }

  std::vector<MonteCarloEstimate> out;
  out.reserve(eps.size());
  for (std::size_t e = 0; e < eps.size(); ++e) {
    std::uint64_t hits = 0;
    for (const auto& c : counts) hits += c[e];
    SeedRecord seeds{experiment.seed, {trials}};
    out.push_back(MonteCarloEstimate::from_counts(hits, trials.count, experiment.confidence,
                                                  experiment.descriptor(eps[e]), std::move(seeds)));
  }
  return out;
}

MonteCarloEstimate estimate_det_small_dev(const CovarianceSpec& spec, int n, int m, double eps, std::uint64_t trials,
                                          std::uint64_t seed, int workers, DetEvent event) {
  if (trials < 1) throw UsageError("estimate_det_small_dev: trials must be >= 1");
  DetExperiment experiment{spec, n, m, event, seed};
  const double e[1] = {eps};
  return estimate_det_small_dev(experiment, e, TrialRange{0, trials}, workers).front();
}

double kolmogorov_survival(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  if (lambda < 1.18) {
    // P(K <= lambda) = sqrt(2 pi)/lambda * sum exp(-(2k-1)^2 pi^2 / (8 lambda^2)).
    const double y = std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    double sum = 0.0;
    for (int k = 1; k <= 20; ++k) {
      const double odd = 2.0 * k - 1.0;
      sum += std::exp(-odd * odd * y);
    }
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * sum, 0.0, 1.0);
  }
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 ? term : -term);
    if (term < 1e-300) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KSResult ks_fit(std::span<const double> sorted_samples, const std::function<double(double)>& law_cdf) {
  const std::size_t n = sorted_samples.size();
  if (n < 100) throw UsageError("ks_fit: at least 100 samples required");
  if (!std::is_sorted(sorted_samples.begin(), sorted_samples.end())) throw UsageError("ks_fit: samples must be sorted");
  const auto nd = static_cast<double>(n);
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = law_cdf(sorted_samples[i]);
    d = std::max({d, static_cast<double>(i + 1) / nd - f, f - static_cast<double>(i) / nd});
  }
  KSResult r;
  r.statistic = std::clamp(d, 0.0, 1.0);
  r.sample_size = n;
  const double root = std::sqrt(nd);
  r.p_value_bound = kolmogorov_survival((root + 0.12 + 0.11 / root) * r.statistic);
  return r;
}

std::vector<double> sample_complex_log_dets(int n, std::uint64_t seed, TrialRange trials,
                                            ComplexConvention convention) {
  std::vector<double> out(trials.count);
  for (std::uint64_t i = 0; i < trials.count; ++i) {
    out[i] = complex_gaussian_log_det(n, seed, trials.first + i, convention);
  }
  std::sort(out.begin(), out.end());
  return out;
}

KSResult ks_fit_gamma_product(std::span<const double> sorted_log_samples, const GammaProductLaw& law) {
  return ks_fit(sorted_log_samples, [&law](double v) { return law.log_cdf_arg(v); });
}

GammaCalibration calibrate_gamma_product(std::span<const double> sorted_log_samples, int n) {
  if (n < 1) throw UsageError("calibrate_gamma_product: n must be >= 1");
  GammaCalibration best;
  best.fit.statistic = std::numeric_limits<double>::infinity();
  for (double a0 : {0.5, 1.0, 1.5, 2.0}) {
    for (double delta : {0.0, 0.5, 1.0}) {
      for (double scale : {0.5, 1.0, 2.0}) {
        GammaProductSpec spec;
        spec.scale = scale;
        for (int j = 0; j < n; ++j) spec.shapes.push_back(a0 + delta * j);
        const GammaProductLaw law(spec, 0x1.0p-5);
        const auto fit = ks_fit_gamma_product(sorted_log_samples, law);
        ++best.candidates;
        if (fit.statistic < best.fit.statistic) {
          best.spec = spec;
          best.fit = fit;
        }
      }
    }
  }
  return best;
}

std::vector<BoundRow> bound_check(const BoundCheckConfig& config) {
  if (config.eps.empty()) throw UsageError("bound_check: no eps values");
  if (config.trials < 1) throw UsageError("bound_check: trials must be >= 1");
  if (config.event == DetEvent::square && config.m != config.n) {
    throw UsageError("bound_check: the square event requires m = n");
  }
  for (double e : config.eps) {
    if (!(e > 0.0)) throw UsageError("bound_check: eps must be positive");
  }

  const auto d = compute_d_values(config.spec, config.n, config.m);
  const auto table = build_product_law(config.n, config.grid);
  const std::string spec_hash = stable_hash(config.spec.describe());

  std::vector<BoundRow> rows(config.eps.size());
  for (std::size_t i = 0; i < config.eps.size(); ++i) {
    const auto cb = corollary_bound(config.eps[i], d, table);  // throws before sampling
    rows[i].eps = config.eps[i];
    rows[i].n = config.n;
    rows[i].m = config.m;
    rows[i].spec_hash = spec_hash;
    rows[i].eps0 = cb.eps0;
    rows[i].bound = cb.bound;
    rows[i].bound_error = table.error_estimate;
  }

  DetExperiment experiment{config.spec, config.n, config.m, config.event, config.seed, config.confidence};
  const auto estimates =
      estimate_det_small_dev(experiment, config.eps, TrialRange{config.first_trial, config.trials}, config.workers);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].estimate = estimates[i];
    rows[i].pass = rows[i].estimate.ci_low <= rows[i].bound;
  }
  return rows;
}

}  // namespace smalldet
