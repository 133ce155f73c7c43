#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pai::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kInvalidOptions = 2,
  kIoFailure = 3,
  kDiverged = 4,
  kSchemaMismatch = 5,
  kMissingLabels = 6,
};

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kRunManifestName = "run_manifest.json";

/// Runs one command line (args[0] is the program name) and returns its exit
/// code. Nothing is thrown; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pai::cli
