#pragma once

#include <iosfwd>

namespace ecohmpc {

/// Exit codes of the command-line tool.
enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_data = 2, exit_abort = 3 };

/// Entry point of the `ecohmpc` tool: fit-map, gwos, run, compare, bench.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ecohmpc
