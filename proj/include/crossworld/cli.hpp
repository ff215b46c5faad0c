#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace crossworld {

inline constexpr std::string_view kVersion = "1.0.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitData = 3,
  kExitRuntime = 4,
};

// Entry point of the `crossworld` tool. args[0] is the program name.
// Subcommands: generate, run, rho-diagnose, interval.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace crossworld
