#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace privdet {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitBackend = 3;

// Runs the command line `args` (without the program name).
int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err);

}  // namespace privdet
