#pragma once

#include <iosfwd>

namespace fcomb::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // unexpected internal error
inline constexpr int kExitUsage = 2;    // bad flag, bad config value, unreadable file
inline constexpr int kExitData = 3;     // input data failed validation

/// Entry point for the `fcomb` tool (subcommands synth, backtest, fit).
int run(int argc, char** argv);
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace fcomb::cli
