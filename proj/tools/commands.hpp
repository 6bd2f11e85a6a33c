#pragma once

#include <string>
#include <vector>

namespace dft::cli {

enum ExitCode : int { ok = 0, failure = 1, config_error = 2, data_error = 3, numerical_error = 4 };

// Full command line including the program name. Diagnostics go to stderr.
int run(const std::vector<std::string>& args);

}  // namespace dft::cli
