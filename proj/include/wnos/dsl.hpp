#pragma once

#include <string>
#include <string_view>

#include "wnos/problem.hpp"
#include "wnos/schema.hpp"

namespace wnos {

// Parses and validates a .wnos program. Throws ParseError with the line and
// column of the offending token, ValidationError for semantic problems.
ControlProblemSpec parse_program(std::string_view text, const NetworkSchema& schema);
ControlProblemSpec parse_program(std::string_view text);
ControlProblemSpec load_program(const std::string& path);

// Pretty-prints a spec as a program that parses back to an equal spec.
std::string print_program(const ControlProblemSpec& spec);

// Math sublanguage rendering (sum(...) instead of sum[set](...)).
std::string to_dsl_math(const Expr& e);

}  // namespace wnos
