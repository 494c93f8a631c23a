#pragma once

#include <string>
#include <vector>

namespace retinn {

// Exit codes: 0 success, 2 configuration, 3 data, 4 training, 5 inference.
// Errors are reported as one line of JSON on stderr.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);  // args without argv[0]

}  // namespace retinn
