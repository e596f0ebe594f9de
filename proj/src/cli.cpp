#include "smalldet/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "smalldet/determinant.hpp"
#include "smalldet/errors.hpp"
#include "smalldet/gaussian_model.hpp"
#include "smalldet/io.hpp"
#include "smalldet/montecarlo.hpp"
#include "smalldet/scalar_laws.hpp"

namespace smalldet::cli {

namespace {

enum class Format { csv, json };

struct OutputOptions {
  std::string path;
  Format format = Format::csv;
};

struct GridOptions {
  double t_min = -40.0;
  std::optional<double> t_max;
  double step = 0x1.0p-7;
  double u_min = -45.0;
  double u_max = 6.0;

  ProductLawGrid grid() const { return {t_min, t_max, step, u_min, u_max}; }
};

struct DValuesOptions {
  std::string spec = "iid";
  int n = 2;
  int m = 0;
  bool require_positive = false;
  OutputOptions output;
};

struct ProductLawOptions {
  int n = 1;
  GridOptions grid;
  bool asymptotic = false;
  std::string sidecar;
  OutputOptions output;
};

struct BoundCheckOptions {
  std::string spec = "iid";
  int n = 2;
  int m = 0;
  std::vector<double> eps;
  std::uint64_t trials = 1'000'000;
  std::uint64_t first_trial = 0;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string variant = "auto";
  double confidence = 0.99;
  GridOptions grid;
  OutputOptions output;
};

struct LemmaCheckOptions {
  int cases = 100;
  int n_max = 5;
  int m_max = 8;
  std::uint64_t seed = 1;
  bool detail = false;
  OutputOptions output;
};

struct ComplexLawOptions {
  int n = 2;
  std::uint64_t trials = 100'000;
  std::uint64_t seed = 1;
  std::vector<double> shapes;
  double scale = 1.0;
  std::string convention = "unit-complex";
  double alpha = 0.01;
  OutputOptions output;
};

// Writes to --out when given, otherwise to the command's stdout stream.
class Sink {
 public:
  Sink(const OutputOptions& opts, std::ostream& fallback) : path_(opts.path) {
    if (path_.empty()) {
      stream_ = &fallback;
      return;
    }
    file_ = std::make_unique<std::ofstream>(path_);
    if (!*file_) throw std::runtime_error("cannot open output file '" + path_ + "'");
    stream_ = file_.get();
  }

  std::ostream& stream() { return *stream_; }

  void close() {
    stream_->flush();
    if (file_) {
      file_->close();
      if (!*file_) throw std::runtime_error("failed writing '" + path_ + "'");
    }
  }

 private:
  std::string path_;
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_ = nullptr;
};

void add_output(CLI::App* cmd, OutputOptions& opts) {
  cmd->add_option("--out", opts.path, "Output path (default: stdout)");
  cmd->add_option("--format", opts.format, "Output format")
      ->transform(CLI::CheckedTransformer(std::map<std::string, Format>{{"csv", Format::csv}, {"json", Format::json}}));
}

void add_grid(CLI::App* cmd, GridOptions& grid) {
  cmd->add_option("--t-min", grid.t_min, "Left edge of the log-eps grid")->capture_default_str();
  cmd->add_option("--t-max", grid.t_max, "Right edge of the log-eps grid (default 4n)");
  cmd->add_option("--step", grid.step, "Grid step")->capture_default_str();
  cmd->add_option("--u-min", grid.u_min, "Kernel truncation, left")->capture_default_str();
  cmd->add_option("--u-max", grid.u_max, "Kernel truncation, right")->capture_default_str();
}

void write_json(std::ostream& os, const nlohmann::json& j) { os << j.dump(2) << '\n'; }

std::string join_reals(const std::vector<double>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? std::string(1, sep) : "") + format_real(v[i]);
  return out;
}

int cmd_d_values(const DValuesOptions& o, std::ostream& out, std::ostream& err) {
  const int m = o.m > 0 ? o.m : o.n;
  const auto spec = parse_spec(o.spec);
  const auto d = compute_d_values(spec, o.n, m);
  Sink sink(o.output, out);
  auto& os = sink.stream();
  if (o.output.format == Format::json) {
    write_json(os, {{"spec", spec.describe()},
                    {"n", o.n},
                    {"m", m},
                    {"d", std::vector<double>(d.values.data(), d.values.data() + d.values.size())},
                    {"epsilon0_scale", d.epsilon0_scale}});
  } else {
    os << "k,d_k,sqrt_d_product\n";
    double running = 1.0;
    for (Eigen::Index k = 0; k < d.values.size(); ++k) {
      running *= std::sqrt(d.values(k));
      os << (k + 1) << ',' << format_real(d.values(k)) << ',' << format_real(running) << '\n';
    }
  }
  sink.close();
  if (o.require_positive && !d.all_positive()) {
    for (Eigen::Index k = 0; k < d.values.size(); ++k) {
      if (!(d.values(k) > 0.0)) err << "d_" << (k + 1) << " = 0: the conditional variance vanishes\n";
    }
    return kPreconditionViolated;
  }
  return kSuccess;
}

std::string sidecar_path(const ProductLawOptions& o) {
  if (!o.sidecar.empty()) return o.sidecar;
  if (o.output.path.empty()) return {};
  const auto& p = o.output.path;
  const auto slash = p.find_last_of('/');
  const auto dot = p.find_last_of('.');
  if (dot != std::string::npos && (slash == std::string::npos || dot > slash) && p.substr(dot) != ".json") {
    return p.substr(0, dot) + ".json";
  }
  return p + ".meta.json";
}

int cmd_product_law(const ProductLawOptions& o, std::ostream& out) {
  const auto table = build_product_law(o.n, o.grid.grid());
  Sink sink(o.output, out);
  if (o.output.format == Format::json) {
    write_json(sink.stream(), product_law_json(table, o.asymptotic));
    sink.close();
    return kSuccess;
  }
  write_product_law_csv(sink.stream(), table, o.asymptotic);
  sink.close();
  if (const auto path = sidecar_path(o); !path.empty()) {
    Sink side(OutputOptions{path, Format::json}, out);
    write_json(side.stream(), product_law_sidecar(table));
    side.close();
  }
  return kSuccess;
}

int cmd_bound_check(const BoundCheckOptions& o, std::ostream& out, std::ostream& err) {
  BoundCheckConfig config;
  config.spec = parse_spec(o.spec);
  config.n = o.n;
  config.m = o.m > 0 ? o.m : o.n;
  if (o.variant == "auto") config.event = config.m == config.n ? DetEvent::square : DetEvent::gram;
  else config.event = o.variant == "square" ? DetEvent::square : DetEvent::gram;
  config.eps = o.eps;
  config.trials = o.trials;
  config.first_trial = o.first_trial;
  config.seed = o.seed;
  config.workers = o.workers;
  config.confidence = o.confidence;
  config.grid = o.grid.grid();

  const auto rows = bound_check(config);
  Sink sink(o.output, out);
  if (o.output.format == Format::json) write_json(sink.stream(), bound_rows_json(rows));
  else write_bound_rows_csv(sink.stream(), rows);
  sink.close();

  bool all_pass = true;
  for (const auto& r : rows) {
    if (!r.pass) {
      all_pass = false;
      err << "verdict failed at eps=" << format_real(r.eps) << ": ci_low=" << format_real(r.estimate.ci_low)
          << " > bound=" << format_real(r.bound) << '\n';
    }
  }
  return all_pass ? kSuccess : kVerdictFailed;
}

struct LemmaCase {
  int index = 0;
  int n = 0;
  int m = 0;
  std::string kind;
  double lhs = 0.0;
  double rhs = std::numeric_limits<double>::quiet_NaN();
  double gap = std::numeric_limits<double>::quiet_NaN();
  double rel_gap = std::numeric_limits<double>::quiet_NaN();
};

int cmd_lemma_check(const LemmaCheckOptions& o, std::ostream& out, std::ostream& err) {
  if (o.cases < 2) throw UsageError("lemma-check: --cases must be >= 2");
  if (o.n_max < 1 || o.m_max < o.n_max) throw UsageError("lemma-check: requires 1 <= n-max <= m-max");

  std::vector<LemmaCase> cases;
  double max_rel_gap = 0.0;
  double min_margin = std::numeric_limits<double>::infinity();
  for (int c = 0; c < o.cases; ++c) {
    auto rng = CounterRng::keyed(o.seed, 3, static_cast<std::uint64_t>(c));
    StandardNormal normal;
    LemmaCase lc;
    lc.index = c;
    // Case 0 appends a zero column; case 1 has linearly dependent rows.
    const int n_lo = c == 1 ? std::min(2, o.n_max) : 1;
    lc.n = n_lo + static_cast<int>(rng() % static_cast<std::uint64_t>(o.n_max - n_lo + 1));
    lc.m = lc.n + static_cast<int>(rng() % static_cast<std::uint64_t>(o.m_max - lc.n + 1));
    Eigen::MatrixXd a(lc.n, lc.m);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
    Eigen::VectorXd column(lc.n);
    for (Eigen::Index i = 0; i < column.size(); ++i) column(i) = normal(rng);

    if (c == 1 && lc.n >= 2) {
      lc.kind = "dependent-rows";
      a.row(lc.n - 1) = 2.0 * a.row(0);
      Eigen::MatrixXd b(lc.n, lc.m + 1);
      b << a, column;
      const double det_a = gram_det(a).value.value_or(0.0);
      const double det_b = gram_det(b).value.value_or(0.0);
      lc.lhs = det_b - det_a;
    } else {
      if (c == 0) column.setZero();
      lc.kind = c == 0 ? "zero-column" : "random";
      const auto check = append_column_identity_check(a, column);
      lc.lhs = check.lhs;
      lc.rhs = check.rhs;
      lc.gap = check.gap;
      lc.rel_gap = std::abs(check.gap) / std::max(1.0, std::abs(check.lhs));
      max_rel_gap = std::max(max_rel_gap, lc.rel_gap);
    }
    min_margin = std::min(min_margin, lc.lhs);
    cases.push_back(lc);
  }

  const bool pass = max_rel_gap <= 1e-8 && min_margin >= -1e-10;
  Sink sink(o.output, out);
  auto& os = sink.stream();
  if (o.output.format == Format::json) {
    nlohmann::json j = {{"cases", o.cases},
                        {"max_relative_gap", max_rel_gap},
                        {"min_monotonicity_margin", min_margin},
                        {"verdict", pass ? "pass" : "fail"}};
    if (o.detail) {
      auto& arr = j["detail"] = nlohmann::json::array();
      for (const auto& lc : cases) {
        arr.push_back({{"case", lc.index},
                       {"n", lc.n},
                       {"m", lc.m},
                       {"kind", lc.kind},
                       {"lhs", lc.lhs},
                       {"rhs", std::isnan(lc.rhs) ? nlohmann::json() : nlohmann::json(lc.rhs)},
                       {"gap", std::isnan(lc.gap) ? nlohmann::json() : nlohmann::json(lc.gap)}});
      }
    }
    write_json(os, j);
  } else if (o.detail) {
    os << "case,n,m,kind,lhs,rhs,gap,relative_gap\n";
    for (const auto& lc : cases) {
      os << lc.index << ',' << lc.n << ',' << lc.m << ',' << lc.kind << ',' << format_real(lc.lhs) << ','
         << (std::isnan(lc.rhs) ? "" : format_real(lc.rhs)) << ',' << (std::isnan(lc.gap) ? "" : format_real(lc.gap))
         << ',' << (std::isnan(lc.rel_gap) ? "" : format_real(lc.rel_gap)) << '\n';
    }
  } else {
    os << "metric,value\n"
       << "cases," << o.cases << '\n'
       << "max_relative_gap," << format_real(max_rel_gap) << '\n'
       << "min_monotonicity_margin," << format_real(min_margin) << '\n'
       << "verdict," << (pass ? "pass" : "fail") << '\n';
  }
  sink.close();
  if (!pass) err << "lemma-check failed: max relative gap " << format_real(max_rel_gap) << ", min margin "
                 << format_real(min_margin) << '\n';
  return pass ? kSuccess : kVerdictFailed;
}

int cmd_complex_law(const ComplexLawOptions& o, std::ostream& out, std::ostream& err) {
  if (o.n < 1) throw UsageError("complex-law: --n must be >= 1");
  if (o.trials < 10'000) throw UsageError("complex-law: --trials must be >= 10000");
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw UsageError("complex-law: --alpha must lie in (0, 1)");
  const auto convention =
      o.convention == "unit-per-part" ? ComplexConvention::unit_per_part : ComplexConvention::unit_complex;

  const auto samples = sample_complex_log_dets(o.n, o.seed, TrialRange{0, o.trials}, convention);
  GammaProductSpec spec;
  const bool calibrated = o.shapes.empty();
  if (calibrated) {
    // Fit on a disjoint trial block so the reported p-value is not optimistic.
    const auto training = sample_complex_log_dets(o.n, o.seed, TrialRange{o.trials, o.trials}, convention);
    spec = calibrate_gamma_product(training, o.n).spec;
  } else {
    spec.shapes = o.shapes;
    spec.scale = o.scale;
  }
  const GammaProductLaw law(spec);
  const auto fit = ks_fit_gamma_product(samples, law);
  const bool pass = fit.p_value_bound > o.alpha;

  Sink sink(o.output, out);
  auto& os = sink.stream();
  if (o.output.format == Format::json) {
    write_json(os, {{"n", o.n},
                    {"trials", o.trials},
                    {"convention", o.convention},
                    {"shapes", spec.shapes},
                    {"scale", spec.scale},
                    {"calibrated", calibrated},
                    {"statistic", fit.statistic},
                    {"sample_size", fit.sample_size},
                    {"p_value_bound", fit.p_value_bound},
                    {"verdict", pass ? "pass" : "fail"}});
  } else {
    os << "n,trials,convention,shapes,scale,calibrated,statistic,p_value_bound,verdict\n"
       << o.n << ',' << o.trials << ',' << o.convention << ',' << join_reals(spec.shapes, ';') << ','
       << format_real(spec.scale) << ',' << (calibrated ? "true" : "false") << ',' << format_real(fit.statistic) << ','
       << format_real(fit.p_value_bound) << ',' << (pass ? "pass" : "fail") << '\n';
  }
  sink.close();
  if (!pass) err << "KS fit rejected at alpha=" << format_real(o.alpha) << '\n';
  return pass ? kSuccess : kVerdictFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Small-deviation probabilities of Gaussian random determinants", "smalldet"};
  app.set_config("--config", "", "Config file (TOML/INI); command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  DValuesOptions dv;
  auto* d_cmd = app.add_subcommand("d-values", "Conditional residual variances d_k and the eps0 scale");
  d_cmd->add_option("--spec", dv.spec, "Covariance spec, e.g. 'kind=equicorrelated rho=0.5' or a dense file")
      ->capture_default_str();
  d_cmd->add_option("--n", dv.n, "Matrix order")->check(CLI::PositiveNumber)->capture_default_str();
  d_cmd->add_option("--m", dv.m, "Column count (default n)")->check(CLI::PositiveNumber);
  d_cmd->add_flag("--require-positive", dv.require_positive, "Exit 3 if some d_k = 0");
  add_output(d_cmd, dv.output);

  ProductLawOptions pl;
  auto* p_cmd = app.add_subcommand("product-law", "Tabulate P(prod |X_j| <= eps) on a log-eps grid");
  p_cmd->add_option("--n", pl.n, "Number of factors")->check(CLI::PositiveNumber)->capture_default_str();
  add_grid(p_cmd, pl.grid);
  p_cmd->add_flag("--asymptotic", pl.asymptotic, "Append the eps -> 0 asymptote and ratio columns");
  p_cmd->add_option("--sidecar", pl.sidecar, "JSON metadata path (default: --out with .json extension)");
  add_output(p_cmd, pl.output);

  BoundCheckOptions bc;
  auto* b_cmd = app.add_subcommand("bound-check", "Monte Carlo check of the determinant small-deviation bound");
  b_cmd->add_option("--spec", bc.spec, "Covariance spec")->capture_default_str();
  b_cmd->add_option("--n", bc.n, "Matrix order")->check(CLI::PositiveNumber)->capture_default_str();
  b_cmd->add_option("--m", bc.m, "Column count (default n)")->check(CLI::PositiveNumber);
  b_cmd->add_option("--eps", bc.eps, "Threshold (repeatable)")->required()->check(CLI::PositiveNumber)
      ->allow_extra_args(false);
  b_cmd->add_option("--trials", bc.trials, "Monte Carlo trials")->check(CLI::PositiveNumber)->capture_default_str();
  b_cmd->add_option("--first-trial", bc.first_trial, "Index of the first trial (for split runs)");
  b_cmd->add_option("--seed", bc.seed, "Base seed")->capture_default_str();
  b_cmd->add_option("--workers", bc.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  b_cmd->add_option("--variant", bc.variant, "Event: square |det_n| or gram sqrt(det AA^T)")
      ->check(CLI::IsMember({"auto", "square", "gram"}))
      ->capture_default_str();
  b_cmd->add_option("--confidence", bc.confidence, "Clopper-Pearson confidence")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  add_grid(b_cmd, bc.grid);
  add_output(b_cmd, bc.output);

  LemmaCheckOptions lm;
  auto* l_cmd = app.add_subcommand("lemma-check", "Gram determinant column-append identity over random cases");
  l_cmd->add_option("--cases", lm.cases, "Number of cases")->capture_default_str();
  l_cmd->add_option("--n-max", lm.n_max, "Largest row count")->capture_default_str();
  l_cmd->add_option("--m-max", lm.m_max, "Largest column count")->capture_default_str();
  l_cmd->add_option("--seed", lm.seed, "Base seed")->capture_default_str();
  l_cmd->add_flag("--detail", lm.detail, "Emit one row per case");
  add_output(l_cmd, lm.output);

  ComplexLawOptions cl;
  auto* c_cmd = app.add_subcommand("complex-law", "KS fit of det(MM*) against a gamma-product law");
  c_cmd->add_option("--n", cl.n, "Matrix order")->capture_default_str();
  c_cmd->add_option("--trials", cl.trials, "Samples (>= 10000)")->capture_default_str();
  c_cmd->add_option("--seed", cl.seed, "Base seed")->capture_default_str();
  c_cmd->add_option("--shapes", cl.shapes, "Gamma shapes; omitted = calibrate on an independent block")
      ->delimiter(',');
  c_cmd->add_option("--scale", cl.scale, "Gamma scale")->check(CLI::PositiveNumber)->capture_default_str();
  c_cmd->add_option("--convention", cl.convention, "Complex entry variance convention")
      ->check(CLI::IsMember({"unit-complex", "unit-per-part"}))
      ->capture_default_str();
  c_cmd->add_option("--alpha", cl.alpha, "KS rejection level")->capture_default_str();
  add_output(c_cmd, cl.output);

  std::vector<const char*> argv;
  argv.push_back("smalldet");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    if (d_cmd->parsed()) return cmd_d_values(dv, out, err);
    if (p_cmd->parsed()) return cmd_product_law(pl, out);
    if (b_cmd->parsed()) return cmd_bound_check(bc, out, err);
    if (l_cmd->parsed()) return cmd_lemma_check(lm, out, err);
    if (c_cmd->parsed()) return cmd_complex_law(cl, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << '\n';
    return kUsageError;
  } catch (const TableRangeError& e) {
    err << "range error: " << e.what() << '\n';
    return kUsageError;
  } catch (const PreconditionError& e) {
    err << "precondition violated: " << e.what() << '\n';
    return kPreconditionViolated;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kUsageError;
}

}  // namespace smalldet::cli
