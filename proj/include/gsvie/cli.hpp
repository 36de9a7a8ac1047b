#pragma once

// Command-line front end: simulate | expectation | compare | convergence | check-assumptions.

#include <ostream>
#include <string>
#include <vector>

namespace gsvie::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kConfigError = 2,
    kBlowup = 3,
    kComparisonViolation = 4,
};

/// Runs the CLI with argv-style arguments (args[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gsvie::cli
