#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace changebind::cli {

enum ExitCode : int {
    exit_ok = 0,
    exit_config = 2,
    exit_data = 3,
    exit_numeric = 4,
};

/// Entry point of the `changebind` tool. Errors are reported on `err` as a
/// single line `error[<category>]: <message>`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace changebind::cli
