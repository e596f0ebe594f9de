#include "smalldet/gaussian_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "smalldet/errors.hpp"

namespace smalldet {

namespace {

std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

double parse_real(std::string_view s, std::string_view what) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) {
    throw UsageError("invalid " + std::string(what) + ": '" + std::string(s) + "'");
  }
  return value;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto end = s.find(sep, start);
    if (end == std::string_view::npos) end = s.size();
    out.push_back(s.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

// Symmetric PSD check by eigenvalues; tolerance relative to the spectral radius.
void require_psd(const Eigen::MatrixXd& cov, std::string_view origin) {
  if (cov.size() == 0) return;
  if (!cov.allFinite()) throw PreconditionError(std::string(origin) + ": covariance has non-finite entries");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw PreconditionError(std::string(origin) + ": covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (lmin < -kRankTolerance * lmax) {
    throw PreconditionError(std::string(origin) + ": covariance is not positive semidefinite (eigenvalue "
                            + format_double(lmin) + ")");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// EntryOrdering

EntryOrdering::EntryOrdering(int n, int m, std::vector<EntryIndex> entries)
    : n_(n), m_(m), entries_(std::move(entries)) {
  if (n < 1 || m < 1) throw UsageError("matrix dimensions must be positive");
  lookup_.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(m), -1);
  if (entries_.size() != lookup_.size()) throw UsageError("ordering must list every entry exactly once");
  for (std::size_t pos = 0; pos < entries_.size(); ++pos) {
    const auto& e = entries_[pos];
    if (e.row < 1 || e.row > n || e.col < 1 || e.col > m) {
      throw UsageError("entry (" + std::to_string(e.row) + "," + std::to_string(e.col) + ") out of range");
    }
    auto& slot = lookup_[static_cast<std::size_t>(e.row - 1) * m + (e.col - 1)];
    if (slot != -1) {
      throw UsageError("entry (" + std::to_string(e.row) + "," + std::to_string(e.col) + ") listed twice");
    }
    slot = static_cast<Eigen::Index>(pos);
  }
}

Eigen::Index EntryOrdering::position(int row, int col) const {
  if (row < 1 || row > n_ || col < 1 || col > m_) throw UsageError("entry index out of range");
  return lookup_[static_cast<std::size_t>(row - 1) * m_ + (col - 1)];
}

EntryOrdering build_ordering(int n, int m) {
  if (n < 1 || m < 1) throw UsageError("build_ordering: dimensions must be positive");
  if (n > m) throw UsageError("build_ordering: requires n <= m");
  std::vector<EntryIndex> entries;
  entries.reserve(static_cast<std::size_t>(n) * m);
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) entries.push_back({i, j});
  }
  // Group by min(i, j); the diagonal entry leads its group; row-major otherwise.
  std::stable_sort(entries.begin(), entries.end(), [](const EntryIndex& a, const EntryIndex& b) {
    const int ga = std::min(a.row, a.col);
    const int gb = std::min(b.row, b.col);
    if (ga != gb) return ga < gb;
    const bool da = a.row == a.col;
    const bool db = b.row == b.col;
    return da && !db;
  });
  return EntryOrdering(n, m, std::move(entries));
}

// ---------------------------------------------------------------------------
// Dense covariance files

DenseCovariance read_dense_covariance(std::istream& in) {
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

  DenseCovariance cov;
  long long p = 0;
  {
    std::istringstream header(next_line());
    std::string extra;
    if (!(header >> cov.n >> cov.m >> p) || (header >> extra)) {
      throw ParseError("header must be 'n m p'", line_no);
    }
  }
  if (cov.n < 1 || cov.m < 1 || cov.n > cov.m) throw ParseError("header requires 1 <= n <= m", line_no);
  if (p != static_cast<long long>(cov.n) * cov.m) throw ParseError("entry count p must equal n*m", line_no);

  cov.entries.reserve(static_cast<std::size_t>(p));
  for (long long k = 0; k < p; ++k) {
    std::istringstream row(next_line());
    EntryIndex e;
    std::string extra;
    if (!(row >> e.row >> e.col) || (row >> extra)) throw ParseError("entry line must be 'i j'", line_no);
    if (e.row < 1 || e.row > cov.n || e.col < 1 || e.col > cov.m) {
      throw ParseError("entry index out of range", line_no);
    }
    if (std::find(cov.entries.begin(), cov.entries.end(), e) != cov.entries.end()) {
      throw ParseError("duplicate entry index", line_no);
    }
    cov.entries.push_back(e);
  }

  cov.covariance.resize(p, p);
  for (long long r = 0; r < p; ++r) {
    std::istringstream row(next_line());
    for (long long c = 0; c < p; ++c) {
      std::string tok;
      if (!(row >> tok)) throw ParseError("covariance row has fewer than p values", line_no);
      try {
        cov.covariance(r, c) = parse_real(tok, "covariance value");
      } catch (const UsageError& e) {
        throw ParseError(e.what(), line_no);
      }
    }
    std::string extra;
    if (row >> extra) throw ParseError("covariance row has more than p values", line_no);
  }
  return cov;
}

DenseCovariance load_dense_covariance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open covariance file '" + path + "'", 0);
  try {
    return read_dense_covariance(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.detail(), e.line());
  }
}

void write_dense_covariance(std::ostream& out, const DenseCovariance& cov) {
  const auto p = cov.entries.size();
  out << cov.n << ' ' << cov.m << ' ' << p << '\n';
  for (const auto& e : cov.entries) out << e.row << ' ' << e.col << '\n';
  out << std::setprecision(17);
  for (Eigen::Index r = 0; r < cov.covariance.rows(); ++r) {
    for (Eigen::Index c = 0; c < cov.covariance.cols(); ++c) {
      if (c) out << ' ';
      out << cov.covariance(r, c);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// CovarianceSpec

CovarianceSpec CovarianceSpec::diagonal(std::vector<double> sigma) {
  for (double s : sigma) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw UsageError("diagonal: sigma values must be finite and >= 0");
  }
  CovarianceSpec spec;
  spec.kind = Kind::diagonal;
  spec.sigma = std::move(sigma);
  return spec;
}

CovarianceSpec CovarianceSpec::equicorrelated(double rho) {
  if (!(rho >= -1.0 && rho <= 1.0)) throw UsageError("equicorrelated: rho must lie in [-1, 1]");
  CovarianceSpec spec;
  spec.kind = Kind::equicorrelated;
  spec.rho = rho;
  return spec;
}

CovarianceSpec CovarianceSpec::ar1(double rho) {
  if (!(rho > -1.0 && rho < 1.0)) throw UsageError("ar1: rho must lie in (-1, 1)");
  CovarianceSpec spec;
  spec.kind = Kind::ar1;
  spec.rho = rho;
  return spec;
}

CovarianceSpec CovarianceSpec::from_dense(DenseCovariance cov, std::string path) {
  require_psd(cov.covariance, path.empty() ? "dense spec" : path);
  CovarianceSpec spec;
  spec.kind = Kind::dense;
  spec.dense = std::move(cov);
  spec.dense_path = std::move(path);
  return spec;
}

std::string_view to_string(CovarianceSpec::Kind kind) {
  switch (kind) {
    case CovarianceSpec::Kind::iid: return "iid";
    case CovarianceSpec::Kind::diagonal: return "diagonal";
    case CovarianceSpec::Kind::equicorrelated: return "equicorrelated";
    case CovarianceSpec::Kind::ar1: return "ar1";
    case CovarianceSpec::Kind::dense: return "dense";
  }
  return "unknown";
}

std::string CovarianceSpec::describe() const {
  std::string out = "kind=" + std::string(to_string(kind));
  switch (kind) {
    case Kind::iid: break;
    case Kind::diagonal:
      if (!sigma.empty()) {
        out += " sigma=";
        for (std::size_t i = 0; i < sigma.size(); ++i) out += (i ? "," : "") + format_double(sigma[i]);
      }
      break;
    case Kind::equicorrelated:
    case Kind::ar1: out += " rho=" + format_double(rho); break;
    case Kind::dense: {
      std::uint64_t h = 0xcbf29ce484222325ULL;
      for (const auto& e : dense.entries) {
        const int rc[2] = {e.row, e.col};
        h = fnv1a(rc, sizeof rc, h);
      }
      h = fnv1a(dense.covariance.data(), sizeof(double) * static_cast<std::size_t>(dense.covariance.size()), h);
      std::ostringstream os;
      os << " n=" << dense.n << " m=" << dense.m << " digest=" << std::hex << std::setw(16) << std::setfill('0') << h;
      out += os.str();
      break;
    }
  }
  return out;
}

CovarianceSpec parse_spec(std::string_view text) {
  std::vector<std::string_view> tokens;
  for (auto tok : split(text, ' ')) {
    if (!tok.empty()) tokens.push_back(tok);
  }
  if (tokens.empty()) throw UsageError("empty covariance spec");

  std::string kind;
  std::string file;
  std::vector<double> sigma;
  double rho = 0.0;
  bool have_rho = false;
  bool have_sigma = false;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    auto tok = tokens[t];
    auto eq = tok.find('=');
    if (eq == std::string_view::npos) {
      if (t != 0) throw UsageError("spec token '" + std::string(tok) + "' is not key=value");
      if (tok == "iid" || tok == "diagonal" || tok == "equicorrelated" || tok == "ar1") {
        kind = std::string(tok);
      } else {
        kind = "dense";
        file = std::string(tok);
      }
      continue;
    }
    auto key = tok.substr(0, eq);
    auto value = tok.substr(eq + 1);
    if (key == "kind") {
      kind = std::string(value);
    } else if (key == "rho") {
      rho = parse_real(value, "rho");
      have_rho = true;
    } else if (key == "sigma") {
      for (auto part : split(value, ',')) sigma.push_back(parse_real(part, "sigma"));
      have_sigma = true;
    } else if (key == "file") {
      file = std::string(value);
    } else {
      throw UsageError("unknown spec key '" + std::string(key) + "'");
    }
  }

  auto reject = [&](bool present, const char* key) {
    if (present) throw UsageError("spec key '" + std::string(key) + "' does not apply to kind=" + kind);
  };
  if (kind == "iid") {
    reject(have_rho, "rho");
    reject(have_sigma, "sigma");
    reject(!file.empty(), "file");
    return CovarianceSpec::iid();
  }
  if (kind == "diagonal") {
    reject(have_rho, "rho");
    reject(!file.empty(), "file");
    return CovarianceSpec::diagonal(std::move(sigma));
  }
  if (kind == "equicorrelated" || kind == "ar1") {
    reject(have_sigma, "sigma");
    reject(!file.empty(), "file");
    if (!have_rho) throw UsageError("kind=" + kind + " requires rho");
    return kind == "ar1" ? CovarianceSpec::ar1(rho) : CovarianceSpec::equicorrelated(rho);
  }
  if (kind == "dense") {
    reject(have_rho, "rho");
    reject(have_sigma, "sigma");
    if (file.empty()) throw UsageError("kind=dense requires file=<path>");
    return CovarianceSpec::from_dense(load_dense_covariance(file), file);
  }
  throw UsageError("unknown covariance kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Materialization and d_k

Eigen::MatrixXd materialize_covariance(const CovarianceSpec& spec, const EntryOrdering& ordering) {
  const Eigen::Index p = ordering.size();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(p, p);
  using Kind = CovarianceSpec::Kind;
  switch (spec.kind) {
    case Kind::iid:
      cov.setIdentity();
      return cov;
    case Kind::diagonal:
      for (Eigen::Index a = 0; a < p; ++a) {
        const auto& e = ordering[a];
        if (e.row != e.col) continue;
        const auto k = static_cast<std::size_t>(e.row - 1);
        const double s = k < spec.sigma.size() ? spec.sigma[k] : 1.0;
        cov(a, a) = s * s;
      }
      return cov;
    case Kind::equicorrelated:
      cov.setConstant(spec.rho);
      cov.diagonal().setOnes();
      // Exchangeable p-vector is PSD iff rho >= -1/(p-1).
      if (p > 1 && spec.rho < -1.0 / static_cast<double>(p - 1) * (1.0 + 1e-12)) {
        throw PreconditionError("equicorrelated: rho=" + format_double(spec.rho)
                                + " is not positive semidefinite for " + std::to_string(p) + " entries");
      }
      return cov;
    case Kind::ar1:
      for (Eigen::Index a = 0; a < p; ++a) {
        for (Eigen::Index b = 0; b < p; ++b) {
          const int lag = std::abs(ordering[a].row - ordering[b].row) + std::abs(ordering[a].col - ordering[b].col);
          cov(a, b) = std::pow(spec.rho, lag);
        }
      }
      return cov;
    case Kind::dense: {
      const auto& d = spec.dense;
      std::vector<Eigen::Index> src(static_cast<std::size_t>(p));
      for (Eigen::Index a = 0; a < p; ++a) {
        const auto& e = ordering[a];
        auto it = std::find(d.entries.begin(), d.entries.end(), e);
        if (it == d.entries.end()) {
          throw UsageError("dense spec (" + std::to_string(d.n) + "x" + std::to_string(d.m)
                           + ") does not cover entry (" + std::to_string(e.row) + "," + std::to_string(e.col)
                           + "): dimension mismatch");
        }
        src[static_cast<std::size_t>(a)] = it - d.entries.begin();
      }
      for (Eigen::Index a = 0; a < p; ++a) {
        for (Eigen::Index b = 0; b < p; ++b) {
          cov(a, b) = d.covariance(src[static_cast<std::size_t>(a)], src[static_cast<std::size_t>(b)]);
        }
      }
      require_psd(cov, spec.dense_path.empty() ? "dense spec" : spec.dense_path);
      return cov;
    }
  }
  return cov;
}

DValues compute_d_values(const Eigen::MatrixXd& covariance, const EntryOrdering& ordering) {
  const int n = ordering.rows();
  DValues out;
  out.values.resize(n);
  for (int k = 1; k <= n; ++k) {
    const Eigen::Index pos = ordering.diagonal_position(k);
    const double var = covariance(pos, pos);
    // The conditioning set is the prefix [0, pos) by construction of the ordering.
    double explained = 0.0;
    if (pos > 0) {
      const Eigen::MatrixXd block = covariance.topLeftCorner(pos, pos);
      const Eigen::VectorXd cross = covariance.col(pos).head(pos);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(block);
      if (es.info() != Eigen::Success) throw PreconditionError("compute_d_values: eigensolver failed");
      const double cutoff = kRankTolerance * std::max(0.0, es.eigenvalues().maxCoeff());
      const Eigen::VectorXd proj = es.eigenvectors().transpose() * cross;
      for (Eigen::Index i = 0; i < pos; ++i) {
        const double lambda = es.eigenvalues()(i);
        if (lambda > cutoff && lambda > 0.0) explained += proj(i) * proj(i) / lambda;
      }
    }
    double d = var - explained;
    const double tol = kRankTolerance * std::max(1.0, std::abs(var));
    if (d < -tol) {
      throw PreconditionError("compute_d_values: negative residual variance " + format_double(d) + " at k="
                              + std::to_string(k) + "; covariance is not PSD");
    }
    if (d <= tol) d = 0.0;
    out.values(k - 1) = d;
  }
  out.epsilon0_scale = out.values.array().sqrt().prod();
  return out;
}

DValues compute_d_values(const CovarianceSpec& spec, int n, int m) {
  const auto ordering = build_ordering(n, m);
  return compute_d_values(materialize_covariance(spec, ordering), ordering);
}

// ---------------------------------------------------------------------------
// Sampling

GaussianSampler::GaussianSampler(const CovarianceSpec& spec, const EntryOrdering& ordering)
    : GaussianSampler(materialize_covariance(spec, ordering), ordering) {}

GaussianSampler::GaussianSampler(const Eigen::MatrixXd& covariance, const EntryOrdering& ordering)
    : ordering_(ordering) {
  if (covariance.rows() != ordering.size() || covariance.cols() != ordering.size()) {
    throw UsageError("GaussianSampler: covariance size does not match ordering");
  }
  factorize(covariance);
}

void GaussianSampler::factorize(const Eigen::MatrixXd& covariance) {
  const Eigen::Index p = covariance.rows();
  const double trace = covariance.trace();
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() == Eigen::Success) {
    Eigen::MatrixXd lower = llt.matrixL();
    if (p == 0 || lower.diagonal().minCoeff() > std::sqrt(kRankTolerance * std::max(trace, 0.0) / p)) {
      factor_ = std::move(lower);
      pivoted_ = false;
      return;
    }
  }
  // Semidefinite: P^T L D L^T P with negligible pivots zeroed.
  Eigen::LDLT<Eigen::MatrixXd> ldlt(covariance);
  if (ldlt.info() != Eigen::Success) throw PreconditionError("GaussianSampler: factorization failed");
  Eigen::VectorXd pivots = ldlt.vectorD();
  const double dmax = std::max(0.0, pivots.maxCoeff());
  for (Eigen::Index i = 0; i < p; ++i) {
    if (pivots(i) < -kRankTolerance * std::max(1.0, dmax)) {
      throw PreconditionError("GaussianSampler: covariance is not positive semidefinite");
    }
    pivots(i) = pivots(i) > kRankTolerance * dmax ? std::sqrt(pivots(i)) : 0.0;
  }
  Eigen::MatrixXd lower = ldlt.matrixL();
  Eigen::MatrixXd scaled = lower * pivots.asDiagonal();
  factor_ = ldlt.transpositionsP().transpose() * scaled;
  pivoted_ = true;
}

Eigen::VectorXd GaussianSampler::sample_entries(CounterRng& rng) const {
  const Eigen::Index p = ordering_.size();
  Eigen::VectorXd z(p);
  StandardNormal normal;
  for (Eigen::Index i = 0; i < p; ++i) z(i) = normal(rng);
  if (pivoted_) return factor_ * z;
  return factor_.triangularView<Eigen::Lower>() * z;
}

void GaussianSampler::sample(CounterRng& rng, Eigen::MatrixXd& out) const {
  const Eigen::VectorXd x = sample_entries(rng);
  out.resize(ordering_.rows(), ordering_.cols());
  for (Eigen::Index a = 0; a < x.size(); ++a) {
    const auto& e = ordering_[a];
    out(e.row - 1, e.col - 1) = x(a);
  }
}

SampledMatrix sample_matrix(const CovarianceSpec& spec, const EntryOrdering& ordering, std::uint64_t seed) {
  GaussianSampler sampler(spec, ordering);
  CounterRng rng = CounterRng::keyed(seed, 0, 0);
  SampledMatrix out;
  out.seed = seed;
  sampler.sample(rng, out.values);
  return out;
}

}  // namespace smalldet
