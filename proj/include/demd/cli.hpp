#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace demd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInput = 3;
inline constexpr int kExitNumerical = 4;
inline constexpr int kExitCheckFailed = 5;

/// Largest problem the benchmark command runs without --force.
inline constexpr long long kDeskScaleNodes = 50000;

/// Environment variable holding the default worker count.
inline constexpr const char* kWorkersEnv = "DEMD_WORKERS";

const char* version();

/// Runs one command. args excludes the program name, e.g.
/// {"embed", "--input", "pts.csv", "--output", "emb.bin"}. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace demd::cli
