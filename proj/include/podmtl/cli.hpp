#pragma once

#include <string>
#include <vector>

namespace podmtl {

/// Entry point shared by the binary and the tests. `args` excludes the
/// program name. Exit codes: 0 success, 1 usage/config error, 2 data error,
/// 3 training divergence, 4 experiment-arm failure.
int run_command(const std::vector<std::string>& args);

}  // namespace podmtl
