#include "smalldet/scalar_laws.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <boost/math/special_functions/gamma.hpp>

#include "smalldet/errors.hpp"

namespace smalldet {

namespace {

constexpr double kSqrt1_2 = 0.70710678118654752440;

// Roundoff floor folded into every table's error_estimate.
constexpr double kRoundoffFloor = 1e-13;

double erf_exp(double t) {
  // P(|X| <= e^t) = erf(e^t / sqrt 2).
  return std::erf(std::exp(t) * kSqrt1_2);
}

struct ConvolutionKernel {
  long first = 0;                // lattice offset of weights[0]
  std::vector<double> weights;   // step * density * trapezoid weight
  double tail_mass = 0.0;        // density mass discarded outside the kernel
};

// Trapezoid weights of `density` on lattice offsets [k_lo, k_hi], trimmed of
// leading and trailing weights that are exactly zero.
template <typename Density>
ConvolutionKernel make_kernel(Density density, long k_lo, long k_hi, double step, double tail_mass) {
  ConvolutionKernel kernel;
  kernel.tail_mass = tail_mass;
  std::vector<double> w(static_cast<std::size_t>(k_hi - k_lo + 1));
  for (long k = k_lo; k <= k_hi; ++k) {
    const double end_weight = (k == k_lo || k == k_hi) ? 0.5 : 1.0;
    w[static_cast<std::size_t>(k - k_lo)] = step * end_weight * density(static_cast<double>(k) * step);
  }
  std::size_t first = 0;
  while (first < w.size() && w[first] == 0.0) ++first;
  std::size_t last = w.size();
  while (last > first && w[last - 1] == 0.0) --last;
  kernel.first = k_lo + static_cast<long>(first);
  kernel.weights.assign(w.begin() + static_cast<long>(first), w.begin() + static_cast<long>(last));
  return kernel;
}

// out(i) = sum_k w_k * lower(i - k) for lattice indices i in [out_first, out_first + count).
// lower(j) is 0 below the lower table and 1 above it; the bias this can
// introduce is bounded and returned together with the kernel truncation.
ProductLawTable convolve_on_lattice(const ProductLawTable& lower, const ConvolutionKernel& kernel, long out_first,
                                    std::size_t count) {
  ProductLawTable out;
  out.n = lower.n + 1;
  out.first_index = out_first;
  out.grid_step = lower.grid_step;
  out.cdf.resize(count);

  const auto& w = kernel.weights;
  const long kw = static_cast<long>(w.size());
  const long lo_first = lower.first_index;
  const long lo_last = lower.first_index + static_cast<long>(lower.cdf.size()) - 1;
  const double* lv = lower.cdf.data();
  const double below_value = lower.cdf.front();
  const double above_gap = 1.0 - lower.cdf.back();

  // suffix[k] = sum_{k' >= k} w[k'] (arguments below the lower table).
  std::vector<double> suffix(static_cast<std::size_t>(kw) + 1, 0.0);
  for (long k = kw - 1; k >= 0; --k) suffix[static_cast<std::size_t>(k)] = suffix[static_cast<std::size_t>(k + 1)] + w[static_cast<std::size_t>(k)];
  // prefix[k] = sum_{k' < k} w[k'] (arguments above it).
  std::vector<double> prefix(static_cast<std::size_t>(kw) + 1, 0.0);
  for (long k = 0; k < kw; ++k) prefix[static_cast<std::size_t>(k + 1)] = prefix[static_cast<std::size_t>(k)] + w[static_cast<std::size_t>(k)];

  double boundary_error = 0.0;
  for (std::size_t idx = 0; idx < count; ++idx) {
    const long i = out_first + static_cast<long>(idx);
    // j = i - (kernel.first + q) for q in [0, kw). j > lo_last  <=>  q < i - kernel.first - lo_last.
    const long q_above_end = std::clamp(i - kernel.first - lo_last, 0L, kw);         // q < this: above
    const long q_below_start = std::clamp(i - kernel.first - lo_first + 1, 0L, kw);  // q >= this: below
    double acc = 0.0;
    const long j0 = i - kernel.first;
    for (long q = q_above_end; q < q_below_start; ++q) acc += w[static_cast<std::size_t>(q)] * lv[j0 - q - lo_first];
    const double above_mass = prefix[static_cast<std::size_t>(q_above_end)];
    const double below_mass = suffix[static_cast<std::size_t>(q_below_start)];
    out.cdf[idx] = std::clamp(acc + above_mass, 0.0, 1.0);
    boundary_error = std::max(boundary_error, above_mass * above_gap + below_mass * below_value);
  }
  // summation roundoff can dip by an ulp near 1
  for (std::size_t idx = 1; idx < count; ++idx) out.cdf[idx] = std::max(out.cdf[idx], out.cdf[idx - 1]);
  // The propagated error is at most
  // (total kernel mass) * lower error.
  out.error_estimate = lower.error_estimate * prefix.back() + boundary_error + kernel.tail_mass;
  return out;
}

struct Lattice {
  long t_first = 0;
  long t_last = 0;
  long u_first = 0;
  long u_last = 0;
  double step = 0.0;
};

Lattice snap_grid(int n, const ProductLawGrid& grid) {
  if (!(grid.step > 0.0) || !std::isfinite(grid.step)) throw UsageError("product law grid: step must be positive");
  const double t_max = grid.t_max.value_or(4.0 * n);
  if (!std::isfinite(grid.t_min) || !std::isfinite(t_max)) throw UsageError("product law grid: bounds must be finite");
  if (!(grid.u_min < grid.u_max) || !std::isfinite(grid.u_min) || !std::isfinite(grid.u_max)) {
    throw UsageError("product law grid: requires u_min < u_max");
  }
  Lattice lat;
  lat.step = grid.step;
  lat.t_first = static_cast<long>(std::floor(grid.t_min / grid.step + 1e-9));
  lat.t_last = static_cast<long>(std::ceil(t_max / grid.step - 1e-9));
  lat.u_first = static_cast<long>(std::floor(grid.u_min / grid.step + 1e-9));
  lat.u_last = static_cast<long>(std::ceil(grid.u_max / grid.step - 1e-9));
  if (lat.t_last - lat.t_first + 1 < 64) throw UsageError("product law grid: needs at least 64 points");
  if (lat.t_last - lat.t_first > 50'000'000) throw UsageError("product law grid: too many points");
  return lat;
}

ConvolutionKernel log_abs_kernel(const Lattice& lat) {
  const double u_lo = static_cast<double>(lat.u_first) * lat.step;
  const double u_hi = static_cast<double>(lat.u_last) * lat.step;
  // Discarded mass: P(log|X| < u_lo) + P(log|X| > u_hi).
  const double tails = erf_exp(u_lo) + std::erfc(std::exp(u_hi) * kSqrt1_2);
  return make_kernel(log_abs_gaussian_density, lat.u_first, lat.u_last, lat.step, tails);
}

ProductLawTable analytic_base(long first, long last, double step) {
  ProductLawTable t;
  t.n = 1;
  t.first_index = first;
  t.grid_step = step;
  t.cdf.resize(static_cast<std::size_t>(last - first + 1));
  for (long i = first; i <= last; ++i) t.cdf[static_cast<std::size_t>(i - first)] = erf_exp(static_cast<double>(i) * step);
  t.error_estimate = 0.0;
  return t;
}

// Product law on the exact lattice, without the step-halving estimate.
ProductLawTable build_on_lattice(int n, const Lattice& lat) {
  const long cap_step = static_cast<long>(std::ceil(5.0 / lat.step));
  // Level j must cover [t_first - (n-j) u_last, t_last - (n-j) u_first]; above
  // 5j the CDF is 1 to double precision, so the right edge is capped there.
  auto level_first = [&](int j) { return lat.t_first - static_cast<long>(n - j) * lat.u_last; };
  auto level_last = [&](int j) {
    const long need = lat.t_last - static_cast<long>(n - j) * lat.u_first;
    return std::min(need, std::max(lat.t_last, cap_step * j));
  };

  ProductLawTable table = analytic_base(level_first(1), level_last(1), lat.step);
  const auto kernel = log_abs_kernel(lat);
  for (int j = 2; j <= n; ++j) {
    const long first = level_first(j);
    const long last = level_last(j);
    table = convolve_on_lattice(table, kernel, first, static_cast<std::size_t>(last - first + 1));
  }
  table.truncation_bounds = {static_cast<double>(lat.u_first) * lat.step, static_cast<double>(lat.u_last) * lat.step};
  return table;
}

std::size_t locate(std::span<const double> cdf, double t0, double step, double t, double& frac) {
  const double x = (t - t0) / step;
  const auto last = static_cast<double>(cdf.size() - 1);
  if (x <= 0.0) {
    frac = 0.0;
    return 0;
  }
  if (x >= last) {
    frac = 1.0;
    return cdf.size() - 2;
  }
  const double cell = std::floor(x);
  frac = x - cell;
  return static_cast<std::size_t>(cell);
}

// Interpolation error at step 2h, measured at the odd points the coarse
// interpolant skips; divided by 4 for step h (at least second order).
double interpolation_error(const std::vector<double>& cdf) {
  if (cdf.size() < 8) return 0.0;
  std::vector<double> even;
  for (std::size_t i = 0; i < cdf.size(); i += 2) even.push_back(cdf[i]);
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < cdf.size(); i += 2) {
    worst = std::max(worst, std::abs(monotone_cubic_eval(even, 0.0, 1.0, 0.5 * static_cast<double>(i)) - cdf[i]));
  }
  return worst / 4.0;
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kSqrt1_2); }

double gaussian_interval_prob(double sigma, double shift, double eps) {
  if (!(sigma >= 0.0)) throw UsageError("gaussian_interval_prob: sigma must be >= 0");
  if (!(eps >= 0.0)) throw UsageError("gaussian_interval_prob: eps must be >= 0");
  if (sigma == 0.0) return std::abs(shift) <= eps ? 1.0 : 0.0;
  const double a = (-eps - shift) / sigma;
  const double b = (eps - shift) / sigma;
  // Pick the complementary form that avoids cancellation.
  if (a >= 0.0) return 0.5 * (std::erfc(a * kSqrt1_2) - std::erfc(b * kSqrt1_2));
  if (b <= 0.0) return 0.5 * (std::erfc(-b * kSqrt1_2) - std::erfc(-a * kSqrt1_2));
  return 0.5 * (std::erf(b * kSqrt1_2) - std::erf(a * kSqrt1_2));
}

double log_abs_gaussian_density(double u) {
  const double e2u = std::exp(2.0 * u);
  return kAbsNormalDensityAtZero * std::exp(-0.5 * e2u + u);
}

std::vector<double> ProductLawTable::grid() const {
  std::vector<double> out(cdf.size());
  for (std::size_t i = 0; i < cdf.size(); ++i) out[i] = t(i);
  return out;
}

double monotone_cubic_eval(std::span<const double> cdf, double t0, double step, double t) {
  if (cdf.size() < 2) throw UsageError("monotone_cubic_eval: need at least two samples");
  double s = 0.0;
  const std::size_t i = locate(cdf, t0, step, t, s);
  const auto secant = [&](std::size_t k) { return (cdf[k + 1] - cdf[k]) / step; };
  const auto slope = [&](std::size_t k) {
    const double left = k > 0 ? secant(k - 1) : secant(k);
    const double right = k + 1 < cdf.size() ? secant(k) : secant(k - 1);
    if (left <= 0.0 || right <= 0.0) return 0.0;
    double d = 0.5 * (left + right);
    if (k >= 2 && k + 2 < cdf.size()) d = (cdf[k - 2] - 8.0 * cdf[k - 1] + 8.0 * cdf[k + 1] - cdf[k + 2]) / (12.0 * step);
    return std::clamp(d, 0.0, 3.0 * std::min(left, right));
  };
  const double y0 = cdf[i];
  const double y1 = cdf[i + 1];
  const double d0 = slope(i) * step;
  const double d1 = slope(i + 1) * step;
  const double s2 = s * s;
  const double s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1;
  const double h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2;
  const double h11 = s3 - s2;
  const double v = h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1;
  return std::clamp(v, std::min(y0, y1), std::max(y0, y1));
}

double ProductLawTable::cdf_at(double t_value) const {
  if (cdf.size() < 2) throw TableRangeError("product law table is empty");
  const double lo = t_min();
  const double hi = t_max();
  const double slack = 1e-12 * grid_step;
  if (!(t_value >= lo - slack && t_value <= hi + slack)) {
    throw TableRangeError("t = " + std::to_string(t_value) + " outside product law table [" + std::to_string(lo) + ", "
                          + std::to_string(hi) + "]; rebuild with a wider grid");
  }
  return monotone_cubic_eval(cdf, lo, grid_step, t_value);
}

ProductLawTable build_product_law(int n, const ProductLawGrid& grid) {
  if (n < 1) throw UsageError("build_product_law: n must be >= 1");
  const Lattice lat = snap_grid(n, grid);
  // The top level lands exactly on [t_first, t_last].
  ProductLawTable fine = build_on_lattice(n, lat);

  double richardson = 0.0;
  if (n > 1) {
    Lattice coarse = lat;
    coarse.step = 2.0 * lat.step;
    coarse.t_first = static_cast<long>(std::floor(static_cast<double>(lat.t_first) / 2.0));
    coarse.t_last = static_cast<long>(std::ceil(static_cast<double>(lat.t_last) / 2.0));
    coarse.u_first = static_cast<long>(std::floor(static_cast<double>(lat.u_first) / 2.0));
    coarse.u_last = static_cast<long>(std::ceil(static_cast<double>(lat.u_last) / 2.0));
    const ProductLawTable rough = build_on_lattice(n, coarse);
    for (std::size_t i = 0; i < fine.cdf.size(); ++i) {
      const long idx = fine.first_index + static_cast<long>(i);
      if (idx % 2 != 0) continue;
      const long ci = idx / 2 - rough.first_index;
      if (ci < 0 || ci >= static_cast<long>(rough.cdf.size())) continue;
      richardson = std::max(richardson, std::abs(fine.cdf[i] - rough.cdf[static_cast<std::size_t>(ci)]));
    }
  }
  fine.error_estimate += richardson + interpolation_error(fine.cdf) + kRoundoffFloor;
  return fine;
}

ProductLawTable convolve_product_law(const ProductLawTable& lower, const ProductLawGrid& grid) {
  if (lower.cdf.size() < 2) throw UsageError("convolve_product_law: lower table is empty");
  const Lattice lat = snap_grid(lower.n + 1, grid);
  if (std::abs(lat.step - lower.grid_step) > 1e-15 * lat.step) {
    throw UsageError("convolve_product_law: grid step must match the lower table");
  }
  auto out = convolve_on_lattice(lower, log_abs_kernel(lat), lat.t_first,
                                 static_cast<std::size_t>(lat.t_last - lat.t_first + 1));
  out.truncation_bounds = {static_cast<double>(lat.u_first) * lat.step, static_cast<double>(lat.u_last) * lat.step};
  out.error_estimate += interpolation_error(out.cdf) + kRoundoffFloor;
  return out;
}

double product_small_dev(const ProductLawTable& table, double eps) {
  if (!(eps > 0.0)) throw UsageError("product_small_dev: eps must be positive");
  return table.cdf_at(std::log(eps));
}

double asymptotic_product_prob(int n, double eps) {
  if (n < 1) throw UsageError("asymptotic_product_prob: n must be >= 1");
  if (!(eps > 0.0 && eps < 1.0)) throw UsageError("asymptotic_product_prob: requires 0 < eps < 1");
  const double abs_log = -std::log(eps);
  const double log_value = n * std::log(kAbsNormalDensityAtZero) + std::log(eps) + (n - 1) * std::log(abs_log)
                           - std::lgamma(static_cast<double>(n));
  return std::exp(log_value);
}

CorollaryBound corollary_bound(double eps, const DValues& d, const ProductLawTable& table) {
  if (!(eps > 0.0)) throw UsageError("corollary_bound: eps must be positive");
  if (d.values.size() != table.n) {
    throw UsageError("corollary_bound: table built for n=" + std::to_string(table.n) + " but "
                     + std::to_string(d.values.size()) + " d values given");
  }
  for (Eigen::Index k = 0; k < d.values.size(); ++k) {
    if (!(d.values(k) > 0.0)) {
      throw PreconditionError("Corollary hypothesis violated: d_" + std::to_string(k + 1) + " = 0");
    }
  }
  CorollaryBound out;
  out.eps0 = eps / d.values.array().sqrt().prod();
  out.bound = product_small_dev(table, out.eps0);
  return out;
}

// ---------------------------------------------------------------------------
// Gamma products

void GammaProductSpec::validate() const {
  if (shapes.empty()) throw UsageError("gamma product: at least one shape required");
  for (double a : shapes) {
    if (!(a > 0.0) || !std::isfinite(a)) throw UsageError("gamma product: shapes must be positive");
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) throw UsageError("gamma product: scale must be positive");
}

double log_gamma_sample(double shape, double scale, CounterRng& rng) {
  if (shape < 1.0) {
    const double boost = std::log(rng.uniform_open()) / shape;
    return log_gamma_sample(shape + 1.0, scale, rng) + boost;
  }
  StandardNormal normal;
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_open();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2 || std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) {
      return std::log(d * v) + std::log(scale);
    }
  }
}

double log_gamma_product_sample(const GammaProductSpec& spec, std::uint64_t seed, std::uint64_t index) {
  spec.validate();
  auto rng = CounterRng::keyed(seed, 2, index);
  double acc = 0.0;
  for (double a : spec.shapes) acc += log_gamma_sample(a, spec.scale, rng);
  return acc;
}

double gamma_product_sampler(const GammaProductSpec& spec, std::uint64_t seed, std::uint64_t index) {
  return std::exp(log_gamma_product_sample(spec, seed, index));
}

GammaProductLaw::GammaProductLaw(GammaProductSpec spec, double step) : spec_(std::move(spec)) {
  spec_.validate();
  if (!(step > 0.0)) throw UsageError("GammaProductLaw: step must be positive");
  namespace bm = boost::math;
  constexpr double kTail = 1e-15;
  const double log_scale = std::log(spec_.scale);
  auto lattice_lo = [&](double a) {
    return static_cast<long>(std::floor((std::log(bm::gamma_p_inv(a, kTail)) + log_scale) / step));
  };
  auto lattice_hi = [&](double a) {
    return static_cast<long>(std::ceil((std::log(bm::gamma_q_inv(a, kTail)) + log_scale) / step));
  };

  const double a1 = spec_.shapes.front();
  long lo = lattice_lo(a1);
  long hi = lattice_hi(a1);
  ProductLawTable table;
  table.n = 1;
  table.first_index = lo;
  table.grid_step = step;
  table.cdf.resize(static_cast<std::size_t>(hi - lo + 1));
  for (long i = lo; i <= hi; ++i) {
    table.cdf[static_cast<std::size_t>(i - lo)] = bm::gamma_p(a1, std::exp(static_cast<double>(i) * step) / spec_.scale);
  }
  for (std::size_t k = 1; k < spec_.shapes.size(); ++k) {
    const double a = spec_.shapes[k];
    const double log_norm = std::lgamma(a) + a * log_scale;
    auto density = [&](double w) { return std::exp(a * w - std::exp(w) / spec_.scale - log_norm); };
    const long k_lo = lattice_lo(a);
    const long k_hi = lattice_hi(a);
    const auto kernel = make_kernel(density, k_lo, k_hi, step, 2 * kTail);
    lo += k_lo;
    hi += k_hi;
    table = convolve_on_lattice(table, kernel, lo, static_cast<std::size_t>(hi - lo + 1));
  }
  table.n = static_cast<int>(spec_.shapes.size());
  table.error_estimate += interpolation_error(table.cdf) + kRoundoffFloor;
  table_ = std::move(table);
}

double GammaProductLaw::log_cdf_arg(double v) const {
  if (v <= table_.t_min()) return 0.0;
  if (v >= table_.t_max()) return 1.0;
  return monotone_cubic_eval(table_.cdf, table_.t_min(), table_.grid_step, v);
}

double GammaProductLaw::cdf(double x) const {
  if (!(x > 0.0)) return 0.0;
  return log_cdf_arg(std::log(x));
}

}  // namespace smalldet
