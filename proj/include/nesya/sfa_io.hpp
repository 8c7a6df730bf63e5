#pragma once

#include "nesya/sfa.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace nesya {

// Line-oriented automaton description:
//
//   # comment
//   vars: tired, blocked, fast
//   states: q0, q1, q2
//   initial: q0
//   accepting: q0, q1
//   order: fast, tired, blocked      (optional compilation order)
//   q0 -> q1 : tired | blocked
//
// `vars`, `states` and `initial` are required and must precede transitions.
// ParseError::position() is the 1-based line number.
Sfa parse_sfa(std::string_view text);
Sfa load_sfa(const std::filesystem::path& path);

std::string format_sfa(const Sfa& sfa);

} // namespace nesya
