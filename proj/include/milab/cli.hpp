#pragma once

// `milab gen|train|eval|explain|verify-shapley --config <file> [--out <dir>]
// [--seed <u64>]`. The command logic lives in the library so tests can drive
// it without spawning processes.

#include <iosfwd>
#include <string>
#include <vector>

namespace milab::cli {

enum ExitCode : int {
  kOk = 0,
  kInternalError = 1,
  kConfigError = 2,
  kUnsupportedComposition = 3,
};

// Fixed-context discrepancy allowed by verify-shapley.
inline constexpr double kShapleyTolerance = 1e-8;

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace milab::cli
