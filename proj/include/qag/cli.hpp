#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qag {

// Entry point of the `qag` tool. `args` excludes the program name. Structured
// JSON-line logs go to `out`, diagnostics and usage text to `err`.
// Returns 0 on success, 1 on a runtime failure and 2 on a usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qag
