#pragma once

#include <string>
#include <vector>

namespace trafficview::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs the `trafficview` command line. Never throws; returns the exit code.
int run(const std::vector<std::string>& args);

}  // namespace trafficview::cli
