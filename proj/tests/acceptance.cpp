// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "least_squares_oracle.hpp"
#include "oracle_values.hpp"
#include "smalldet/cli.hpp"
#include "smalldet/gaussian_model.hpp"
#include "smalldet/montecarlo.hpp"
#include "smalldet/scalar_laws.hpp"

using namespace smalldet;

namespace {

int failures = 0;

void report(int id, const char* title, bool ok, const std::string& detail) {
  std::printf("%s [%d] %s: %s\n", ok ? "PASS" : "FAIL", id, title, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

template <typename F>
void guarded(int id, const char* title, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, title, false, std::string("exception: ") + e.what());
  }
}

constexpr std::uint64_t kSeed = 20240601;

void small_deviation_inequality() {
  const char* title = "iid small-deviation inequality, n=1..4, 12 cells, 1e6 trials";
  guarded(1, title, [&] {
    const auto t0 = std::chrono::steady_clock::now();
    int passed = 0;
    double worst_margin = 1.0;
    for (int n = 1; n <= 4; ++n) {
      BoundCheckConfig cfg;
      cfg.spec = CovarianceSpec::iid();
      cfg.n = cfg.m = n;
      cfg.event = DetEvent::square;
      cfg.eps = {0.2, 0.1, 0.05};
      cfg.trials = 1'000'000;
      cfg.seed = kSeed + n;
      for (const auto& row : bound_check(cfg)) {
        passed += row.pass;
        worst_margin = std::min(worst_margin, row.bound - row.estimate.ci_low);
      }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(1, title, passed == 12 && secs < 120.0,
           fmt("%d/12 cells ci_low <= bound, min(bound - ci_low) = %.4g, %.1f s", passed, worst_margin, secs));
  });
}

void equality_case() {
  const char* title = "diagonal spec equality, n=3, eps=0.1";
  guarded(2, title, [&] {
    BoundCheckConfig cfg;
    cfg.spec = CovarianceSpec::diagonal();
    cfg.n = cfg.m = 3;
    cfg.eps = {0.1};
    cfg.trials = 1'000'000;
    cfg.seed = kSeed;
    const auto row = bound_check(cfg).at(0);
    const double lo = row.bound - row.bound_error, hi = row.bound + row.bound_error;
    const bool ok = row.estimate.ci_low <= hi && row.estimate.ci_high >= lo;
    report(2, title, ok,
           fmt("CI [%.6f, %.6f], bound %.9f +- %.2g", row.estimate.ci_low, row.estimate.ci_high, row.bound,
               row.bound_error));
  });
}

void one_factor_table() {
  const char* title = "one-factor table vs erf oracle";
  guarded(3, title, [&] {
    const auto table = build_product_law(1);
    const double e1 = std::abs(product_small_dev(table, 0.1) - oracle::kF1_0p1);
    const double e5 = std::abs(product_small_dev(table, 0.5) - oracle::kF1_0p5);
    report(3, title, e1 <= 1e-6 && e5 <= 1e-6, fmt("|err| at 0.1: %.3g, at 0.5: %.3g", e1, e5));
  });
}

void asymptotic_convergence() {
  const char* title = "exact/asymptotic ratio tends to 1";
  guarded(4, title, [&] {
    bool ok = true;
    std::string detail;
    for (int n : {2, 3}) {
      const auto table = build_product_law(n);
      const double r3 = product_small_dev(table, 1e-3) / asymptotic_product_prob(n, 1e-3);
      const double r8 = product_small_dev(table, 1e-8) / asymptotic_product_prob(n, 1e-8);
      const double g3 = std::abs(r3 - 1.0), g8 = std::abs(r8 - 1.0);
      ok = ok && g8 < g3 && g8 <= 0.25;
      detail += fmt("n=%d |r-1| 1e-3: %.4f, 1e-8: %.4f; ", n, g3, g8);
    }
    report(4, title, ok, detail);
  });
}

void append_column_lemma() {
  const char* title = "Gram append-column identity and monotonicity, 500 cases";
  guarded(5, title, [&] {
    std::ostringstream out, err;
    const auto t0 = std::chrono::steady_clock::now();
    const int code = cli::run({"lemma-check", "--cases", "500", "--n-max", "5", "--m-max", "8", "--seed",
                               std::to_string(kSeed)},
                              out, err);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string summary = out.str();
    std::replace(summary.begin(), summary.end(), '\n', ' ');
    report(5, title, code == cli::kSuccess, fmt("exit %d, %.2f s; ", code, secs) + summary);
  });
}

void d_value_checks() {
  const char* title = "d_k: iid, duplicated diagonal, equicorrelated";
  guarded(6, title, [&] {
    double iid_err = 0.0;
    for (int n = 1; n <= 6; ++n) {
      const auto d = compute_d_values(CovarianceSpec::iid(), n, n);
      iid_err = std::max(iid_err, (d.values.array() - 1.0).abs().maxCoeff());
    }
    DenseCovariance dup;
    dup.n = dup.m = 2;
    dup.entries = {{1, 1}, {1, 2}, {2, 1}, {2, 2}};
    dup.covariance = Eigen::MatrixXd::Identity(4, 4);
    dup.covariance(0, 3) = dup.covariance(3, 0) = 1.0;
    const double d2_dup = compute_d_values(CovarianceSpec::from_dense(dup), 2, 2).values(1);

    double eq_err = std::abs(compute_d_values(CovarianceSpec::equicorrelated(0.3), 2, 2).values(1) - oracle::kEquicorrD2);
    for (int n = 2; n <= 4; ++n) {
      const auto d = compute_d_values(CovarianceSpec::equicorrelated(0.3), n, n);
      const auto cov = oracle::equicorrelated_rowmajor(n * n, 0.3);
      for (int k = 1; k <= n; ++k) eq_err = std::max(eq_err, std::abs(d.values(k - 1) - oracle::brute_force_d(cov, n, n, k)));
    }
    report(6, title, iid_err <= 1e-12 && d2_dup <= 1e-10 && eq_err <= 1e-10,
           fmt("iid max err %.2g, duplicated d_2 = %.2g, equicorrelated max err %.2g", iid_err, d2_dup, eq_err));
  });
}

void complex_law() {
  const char* title = "complex det MM* vs calibrated gamma product, n=2";
  guarded(7, title, [&] {
    const std::uint64_t trials = 100'000;
    const auto fit_block = sample_complex_log_dets(2, kSeed, {trials, trials});
    const auto cal = calibrate_gamma_product(fit_block, 2);
    const auto test_block = sample_complex_log_dets(2, kSeed, {0, trials});
    const auto fit = ks_fit_gamma_product(test_block, GammaProductLaw(cal.spec));
    GammaProductSpec perturbed = cal.spec;
    for (auto& s : perturbed.shapes) s += 0.5;
    const auto bad = ks_fit_gamma_product(test_block, GammaProductLaw(perturbed));
    std::string shapes;
    for (double s : cal.spec.shapes) shapes += fmt("%g ", s);
    report(7, title, fit.p_value_bound > 0.01 && bad.p_value_bound < 0.01,
           fmt("calibrated shapes { %s} scale %g: p = %.3g; shapes+0.5: p = %.3g", shapes.c_str(), cal.spec.scale,
               fit.p_value_bound, bad.p_value_bound));
  });
}

void determinism_and_merge() {
  const char* title = "worker-count determinism and merge";
  guarded(8, title, [&] {
    auto csv = [](const std::string& workers) {
      std::ostringstream out, err;
      const int code = cli::run({"bound-check", "--n", "3", "--eps", "0.2", "--eps", "0.05", "--trials", "200000",
                                 "--seed", "7", "--workers", workers},
                                out, err);
      return code == cli::kSuccess ? out.str() : std::string("exit ") + std::to_string(code);
    };
    const auto w1 = csv("1"), w2 = csv("2"), w8 = csv("8");
    const bool identical = w1 == w2 && w1 == w8;

    DetExperiment ex{CovarianceSpec::ar1(0.3), 3, 3, DetEvent::square, 7, 0.99};
    const std::vector<double> eps{0.2, 0.05};
    const auto full = estimate_det_small_dev(ex, eps, {0, 200000}, 2);
    const auto a = estimate_det_small_dev(ex, eps, {0, 100000}, 1);
    const auto b = estimate_det_small_dev(ex, eps, {100000, 100000}, 8);
    bool merged_ok = true;
    for (std::size_t i = 0; i < eps.size(); ++i) {
      const auto m = merge(a[i], b[i]);
      merged_ok = merged_ok && m.hits == full[i].hits && m.trials == full[i].trials;
    }
    report(8, title, identical && merged_ok,
           fmt("CSV identical for 1/2/8 workers: %s; merged halves equal full counts: %s", identical ? "yes" : "no",
               merged_ok ? "yes" : "no"));
  });
}

void anderson_grid() {
  const char* title = "centred interval maximises Gaussian mass, 45 cells";
  guarded(9, title, [&] {
    int ok = 0;
    double worst = -1.0;
    for (double sigma : {0.1, 1.0, 10.0}) {
      for (double eps : {0.01, 0.1, 1.0}) {
        const double centred = gaussian_interval_prob(sigma, 0.0, eps);
        for (double shift : {-3.0, -0.5, 0.0, 0.5, 3.0}) {
          const double p = gaussian_interval_prob(sigma, shift, eps);
          ok += p <= centred + 1e-15;
          worst = std::max(worst, p - centred);
        }
      }
    }
    report(9, title, ok == 45, fmt("%d/45 cells, max(shifted - centred) = %.3g", ok, worst));
  });
}

}  // namespace

int main() {
  small_deviation_inequality();
  equality_case();
  one_factor_table();
  asymptotic_convergence();
  append_column_lemma();
  d_value_checks();
  complex_law();
  determinism_and_merge();
  anderson_grid();
  std::printf("%d/9 criteria passed\n", 9 - failures);
  return failures == 0 ? 0 : 1;
}
