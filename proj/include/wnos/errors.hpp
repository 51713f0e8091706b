#pragma once

#include <stdexcept>
#include <string>

namespace wnos {

// Base of every error raised by the toolkit. `kind()` is the stable name the
// CLI prints and the python bindings map onto exception types.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define WNOS_DECLARE_ERROR(Name)                                       \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(#Name, what) {}     \
  };

// abstraction
WNOS_DECLARE_ERROR(UnknownElement)
WNOS_DECLARE_ERROR(ArityMismatch)
WNOS_DECLARE_ERROR(SchemaMismatch)
WNOS_DECLARE_ERROR(ValidationError)

class ParseError : public Error {
 public:
  ParseError(int line, int column, const std::string& what)
      : Error("ParseError", std::to_string(line) + ":" + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

// instantiation
WNOS_DECLARE_ERROR(NotGlobal)
WNOS_DECLARE_ERROR(ExhaustedResampling)
WNOS_DECLARE_ERROR(EmptyInstance)
WNOS_DECLARE_ERROR(IncompletePool)
WNOS_DECLARE_ERROR(RuleViolation)

// decomposer
WNOS_DECLARE_ERROR(MissingInstance)
WNOS_DECLARE_ERROR(UnsupportedConstraintSense)
WNOS_DECLARE_ERROR(NotNormalized)
WNOS_DECLARE_ERROR(UnattributableTerm)
WNOS_DECLARE_ERROR(NonSeparable)
WNOS_DECLARE_ERROR(NoMatchingInstance)
WNOS_DECLARE_ERROR(AmbiguousMatch)

// algogen
WNOS_DECLARE_ERROR(NoApplicableMethod)
WNOS_DECLARE_ERROR(MissingParameter)
WNOS_DECLARE_ERROR(NotDifferentiable)

// pps / netsim
WNOS_DECLARE_ERROR(RoleMismatch)
WNOS_DECLARE_ERROR(StaleRegisters)
WNOS_DECLARE_ERROR(FormatError)
WNOS_DECLARE_ERROR(TopologyError)
WNOS_DECLARE_ERROR(IncompatibleProgram)
WNOS_DECLARE_ERROR(InvariantViolation)

#undef WNOS_DECLARE_ERROR

}  // namespace wnos
