#pragma once

#include <iosfwd>

namespace nesya::cli {

// Exit codes shared by every subcommand.
inline constexpr int exit_ok = 0;
inline constexpr int exit_domain_error = 1; // invalid automaton, divergence, unsatisfiable pattern
inline constexpr int exit_usage_error = 2;  // bad flags, unreadable or malformed input

// Entry point for the `nesya` tool: validate, compile, infer, train, generate, bench.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace nesya::cli
