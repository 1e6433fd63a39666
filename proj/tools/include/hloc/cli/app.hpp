#pragma once

#include <iosfwd>

namespace hloc::cli {

// Exit codes. Every failure also prints one line to `err`:
//   hloc: error: <kind>: <message>
inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;
inline constexpr int kExitIo = 4;
inline constexpr int kExitParse = 5;
inline constexpr int kExitInvariant = 6;
inline constexpr int kExitNumeric = 7;

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hloc::cli
