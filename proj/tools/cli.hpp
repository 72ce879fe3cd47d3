#pragma once

#include <ostream>

namespace coherency {

// Entry point of the `mcg` command line tool. Returns the process exit code:
// 0 ok, 1 usage, 2 numerical failure, 3 I/O.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace coherency
