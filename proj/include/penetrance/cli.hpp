#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace penetrance {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitFailure = 2;

/// Subcommands: estimate, simulate, validate, priors. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, const char* const* argv);

}  // namespace penetrance
