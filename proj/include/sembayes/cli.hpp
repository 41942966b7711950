#pragma once

#include <iosfwd>

namespace sembayes {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitBackend = 3;

// Entry point of the `sembayes` tool: estimate, benchmark, calibrate, auroc,
// simulate. Output goes to `out`, diagnostics to `err`.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sembayes
