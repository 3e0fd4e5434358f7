#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stylevec::cli {

/// Runs the `stylevec` command line. `args` excludes the program name.
/// Exit status: 0 success, 1 validation error, 2 data error, 3 I/O error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace stylevec::cli
