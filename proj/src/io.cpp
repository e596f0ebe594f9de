#include "smalldet/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "smalldet/errors.hpp"

namespace smalldet {

std::string format_real(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Eigen::MatrixXd read_matrix(std::istream& in) {
  std::size_t line_no = 0;
  std::string line;
  auto next_line = [&]() -> std::string {
    while (std::getline(in, line)) {
      ++line_no;
      auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      return line;
    }
    throw ParseError("unexpected end of file", line_no + 1);
  };
  long rows = 0;
  long cols = 0;
  {
    std::istringstream header(next_line());
    std::string extra;
    if (!(header >> rows >> cols) || (header >> extra) || rows < 1 || cols < 1) {
      throw ParseError("header must be 'n m' with positive dimensions", line_no);
    }
  }
  Eigen::MatrixXd m(rows, cols);
  for (long r = 0; r < rows; ++r) {
    std::istringstream row(next_line());
    for (long c = 0; c < cols; ++c) {
      std::string tok;
      if (!(row >> tok)) throw ParseError("row has fewer than m values", line_no);
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size() || !std::isfinite(v)) throw ParseError("invalid number '" + tok + "'", line_no);
      m(r, c) = v;
    }
    std::string extra;
    if (row >> extra) throw ParseError("row has more than m values", line_no);
  }
  return m;
}

Eigen::MatrixXd load_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open matrix file '" + path + "'", 0);
  try {
    return read_matrix(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.detail(), e.line());
  }
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  out << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << format_real(m(r, c));
    out << '\n';
  }
}

void write_product_law_csv(std::ostream& out, const ProductLawTable& table, bool with_asymptotic) {
  out << (with_asymptotic ? "t,cdf,asymptotic,ratio\n" : "t,cdf\n");
  for (std::size_t i = 0; i < table.size(); ++i) {
    const double t = table.t(i);
    out << format_real(t) << ',' << format_real(table.cdf[i]);
    if (with_asymptotic) {
      out << ',';
      if (t < 0.0) {
        const double asym = asymptotic_product_prob(table.n, std::exp(t));
        out << format_real(asym) << ',' << (asym > 0.0 ? format_real(table.cdf[i] / asym) : "");
      } else {
        out << ',';
      }
    }
    out << '\n';
  }
}

nlohmann::json product_law_sidecar(const ProductLawTable& table) {
  return {
      {"n", table.n},
      {"t_min", table.t_min()},
      {"t_max", table.t_max()},
      {"step", table.grid_step},
      {"points", table.size()},
      {"u_min", table.truncation_bounds.first},
      {"u_max", table.truncation_bounds.second},
      {"error_estimate", table.error_estimate},
  };
}

nlohmann::json product_law_json(const ProductLawTable& table, bool with_asymptotic) {
  auto j = product_law_sidecar(table);
  j["t"] = table.grid();
  j["cdf"] = table.cdf;
  if (with_asymptotic) {
    nlohmann::json asym = nlohmann::json::array();
    for (std::size_t i = 0; i < table.size(); ++i) {
      const double t = table.t(i);
      asym.push_back(t < 0.0 ? nlohmann::json(asymptotic_product_prob(table.n, std::exp(t))) : nlohmann::json());
    }
    j["asymptotic"] = std::move(asym);
  }
  return j;
}

void write_bound_rows_csv(std::ostream& out, const std::vector<BoundRow>& rows) {
  out << "eps,n,m,spec_hash,trials,hits,p_hat,ci_low,ci_high,bound,verdict\n";
  for (const auto& r : rows) {
    out << format_real(r.eps) << ',' << r.n << ',' << r.m << ',' << r.spec_hash << ',' << r.estimate.trials << ','
        << r.estimate.hits << ',' << format_real(r.estimate.p_hat) << ',' << format_real(r.estimate.ci_low) << ','
        << format_real(r.estimate.ci_high) << ',' << format_real(r.bound) << ',' << (r.pass ? "pass" : "fail") << '\n';
  }
}

nlohmann::json bound_rows_json(const std::vector<BoundRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({
        {"eps", r.eps},
        {"n", r.n},
        {"m", r.m},
        {"spec_hash", r.spec_hash},
        {"trials", r.estimate.trials},
        {"hits", r.estimate.hits},
        {"p_hat", r.estimate.p_hat},
        {"ci_low", r.estimate.ci_low},
        {"ci_high", r.estimate.ci_high},
        {"bound", r.bound},
        {"verdict", r.pass ? "pass" : "fail"},
    });
  }
  return arr;
}

nlohmann::json to_json(const MonteCarloEstimate& e) {
  nlohmann::json ranges = nlohmann::json::array();
  for (const auto& r : e.seed_record.ranges) ranges.push_back({r.first, r.count});
  return {
      {"hits", e.hits},
      {"trials", e.trials},
      {"p_hat", e.p_hat},
      {"ci_low", e.ci_low},
      {"ci_high", e.ci_high},
      {"confidence", e.confidence},
      {"base_seed", e.seed_record.base_seed},
      {"ranges", ranges},
      {"descriptor", e.descriptor},
  };
}

MonteCarloEstimate estimate_from_json(const nlohmann::json& j) {
  SeedRecord seeds;
  seeds.base_seed = j.at("base_seed").get<std::uint64_t>();
  for (const auto& r : j.at("ranges")) seeds.ranges.push_back({r.at(0).get<std::uint64_t>(), r.at(1).get<std::uint64_t>()});
  return MonteCarloEstimate::from_counts(j.at("hits").get<std::uint64_t>(), j.at("trials").get<std::uint64_t>(),
                                         j.at("confidence").get<double>(), j.at("descriptor").get<std::string>(),
                                         std::move(seeds));
}

}  // namespace smalldet
