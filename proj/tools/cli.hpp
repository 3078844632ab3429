#pragma once

#include <ostream>

namespace maskroute::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;   // anything not listed below
inline constexpr int kExitUsage = 2;     // bad flags, missing files, invalid configuration
inline constexpr int kExitFormat = 3;    // corrupt or unreadable artifact (magic, version, CRC)
inline constexpr int kExitContract = 4;  // API precondition violated (frozen state, mask fit)

/// Runs one command line. Normal output goes to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace maskroute::cli
