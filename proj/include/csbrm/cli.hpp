#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace csbrm::cli {

enum ExitCode : int {
  kOk = 0,
  kNoPath = 1,
  kInvalid = 2,
  kSolverFailure = 3,
  kVerifyViolation = 4,
};

/// Runs one command line (arguments after the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace csbrm::cli
