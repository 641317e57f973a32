#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lcg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // runtime or I/O failure
inline constexpr int kExitUsage = 2;    // bad arguments or config

/// Entry point of the `lcg` tool. `args` excludes the program name.
/// Subcommands: datagen, maskgen, train, sample, eval, check.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lcg
