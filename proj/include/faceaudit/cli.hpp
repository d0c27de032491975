#pragma once

#include <string>
#include <vector>

// Command-line driver. Exit codes: 0 success, 1 usage error, 2 data error,
// 3 infeasible analysis.

namespace faceaudit::cli {

int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args without the program name

}  // namespace faceaudit::cli
