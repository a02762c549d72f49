#pragma once

#include <string>
#include <vector>

namespace sdec {

/// Entry point behind the `sdec` binary. Returns 0 on success, 1 on
/// validation failures (bad arguments, unreadable config, unknown
/// subcommand), 2 on runtime failures (non-finite losses, failing property
/// checks, output errors). Diagnostics go to stderr; results to stdout.
int run_command(const std::vector<std::string>& args);

}  // namespace sdec
