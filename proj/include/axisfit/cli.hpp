#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "axisfit/error.hpp"

namespace axisfit {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitParse = 3;
inline constexpr int kExitValidation = 4;
inline constexpr int kExitTooFewFrames = 5;
inline constexpr int kExitConvergence = 6;
inline constexpr int kExitIllConditioned = 7;

int exit_code_for(ErrorKind kind);

/// Subcommands fit-subject, fit-map, fit-population, simulate, validate.
/// `args` excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, const char* const* argv);

}  // namespace axisfit
