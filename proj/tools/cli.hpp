#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ppgfuse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `ppgfuse` tool; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace ppgfuse::cli
