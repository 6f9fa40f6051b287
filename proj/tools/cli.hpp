#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mtsk::cli {

/// Exit codes shared by every subcommand.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;  // runtime failure or partial run
inline constexpr int kUsage = 2;    // bad flags, bad config, missing input

/// Runs `mtsk <args...>`; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mtsk::cli
