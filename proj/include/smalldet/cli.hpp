#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace smalldet::cli {

/// Process exit codes.
enum ExitCode : int {
  kSuccess = 0,
  kRuntimeError = 1,
  kUsageError = 2,
  kPreconditionViolated = 3,
  kVerdictFailed = 4,
};

/// Runs the smalldet command line. Reports go to `out` unless --out names a
/// file; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace smalldet::cli
