#pragma once

#include <string>
#include <vector>

namespace heatcast::cli {

// Entry point shared by the binary and the test suites.
// Exit codes: 0 success, 1 usage error, 2 data/format error.
int run(const std::vector<std::string>& args);

}  // namespace heatcast::cli
