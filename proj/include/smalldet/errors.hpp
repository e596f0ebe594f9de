#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace smalldet {

/// Invalid argument or configuration (bad dimensions, malformed grid, ...).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A mathematical precondition does not hold for otherwise valid input:
/// non-PSD covariance, non-PD Gram matrix, some d_k = 0.
class PreconditionError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A requested point lies outside a precomputed table.
class TableRangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Malformed input file. Carries the 1-based line number when known (0 otherwise).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        detail_(what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }
  /// Message without the line prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::size_t line_;
};

}  // namespace smalldet
