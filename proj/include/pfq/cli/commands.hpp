#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pfq::cli {

// Runs one `pfq` command line. The summary line goes to `out`; errors are
// written to `err` as a single JSON object. Returns the process exit code:
// 0 on success, 1 for usage and precondition errors, 2 for numerical failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// The same, for main().
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

} // namespace pfq::cli
