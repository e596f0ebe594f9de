#include "smalldet/determinant.hpp"

#include <complex>

#include "smalldet/random.hpp"

namespace smalldet {

double complex_gaussian_log_det(int n, std::uint64_t seed, std::uint64_t index, ComplexConvention convention) {
  if (n < 1) throw UsageError("complex_gaussian_det: n must be >= 1");
  const double part_sd = convention == ComplexConvention::unit_complex ? std::sqrt(0.5) : 1.0;
  auto rng = CounterRng::keyed(seed, 1, index);
  StandardNormal normal;
  Eigen::MatrixXcd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double re = normal(rng) * part_sd;
      const double im = normal(rng) * part_sd;
      m(i, j) = {re, im};
    }
  }
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(m);
  double log_abs = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mag = std::abs(lu.matrixLU()(i, i));
    if (mag == 0.0) return -std::numeric_limits<double>::infinity();
    log_abs += std::log(mag);
  }
  return 2.0 * log_abs;
}

double complex_gaussian_det(int n, std::uint64_t seed, std::uint64_t index, ComplexConvention convention) {
  return std::exp(complex_gaussian_log_det(n, seed, index, convention));
}

}  // namespace smalldet
