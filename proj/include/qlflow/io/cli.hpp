#pragma once

// Command-line surface: run, converge, validate-map, mesh-gen, info.

#include <iosfwd>

namespace qlflow::io {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

/// Parses `argv` and executes one subcommand. Results go to `out`, usage and
/// error messages to `err`. Configuration errors count as usage errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace qlflow::io
