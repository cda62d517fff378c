#pragma once

#include <string>
#include <vector>

namespace repmkt {

/// Runs one CLI invocation. Exit codes: 0 success, 1 usage error,
/// 2 numerical failure, 3 I/O failure.
int dispatch(const std::vector<std::string>& args);
int dispatch(int argc, char** argv);

} // namespace repmkt
