#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wnos/expression.hpp"
#include "wnos/schema.hpp"

namespace wnos {

enum class Sense { maximize, minimize };

// lt/gt are kept so that a printed program reads back verbatim; the
// decomposer compiles them as le/ge.
enum class Rel { le, lt, ge, gt, eq };

std::string to_string(Sense s);
std::string to_string(Rel r);

struct Constraint {
  Expr lhs;
  Rel rel = Rel::le;
  Expr rhs;
  std::string warning;  // set for trivially satisfied constraints; not part of equality

  bool operator==(const Constraint& o) const { return lhs == o.lhs && rel == o.rel && rhs == o.rhs; }
};

struct IndexSpec {
  enum class Kind { all, none, fixed };
  Kind kind = Kind::all;
  int value = 0;

  bool operator==(const IndexSpec&) const = default;
};

struct Bounds {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Bounds&) const = default;
};

struct VariableDecl {
  std::string name;
  std::vector<std::string> chain;  // canonical element ids, leaf last
  std::vector<IndexSpec> index;
  std::optional<Bounds> bounds;    // explicit bounds only
  std::vector<std::string> shape;  // set element per free dimension
  bool decision = false;           // leaf is a controllable parameter

  const std::string& leaf() const { return chain.back(); }
  bool operator==(const VariableDecl& o) const {
    return name == o.name && chain == o.chain && index == o.index && bounds == o.bounds;
  }
};

// Value of an nt.set entry: number, string or (nested) list.
struct SettingValue {
  enum class Kind { number, text, list };
  Kind kind = Kind::number;
  double number = 0.0;
  std::string text;
  std::vector<SettingValue> list;

  static SettingValue of(double v);
  static SettingValue of(std::string s);
  static SettingValue of(std::vector<SettingValue> l);
  std::string str() const;
  bool operator==(const SettingValue&) const = default;
};

struct ControlProblemSpec {
  Sense sense = Sense::maximize;
  std::string objective;  // name of the objective expression
  Expr utility;
  std::vector<std::pair<std::string, Expr>> expressions;
  std::vector<Constraint> constraints;
  std::vector<VariableDecl> variables;
  std::map<std::string, SettingValue> settings;
  std::vector<std::string> warnings;

  const VariableDecl* variable(std::string_view name) const;
  const SettingValue* setting(std::string_view key) const;
  double setting_number(std::string_view key, double fallback) const;
  std::string setting_text(std::string_view key, const std::string& fallback) const;

  bool operator==(const ControlProblemSpec& o) const {
    return sense == o.sense && objective == o.objective && utility == o.utility &&
           expressions == o.expressions && constraints == o.constraints &&
           variables == o.variables && settings == o.settings;
  }
};

enum class ComposeOp { add, product, negate, log, sqrt, quotient, sum_over };

// Builds one expression node. sum_over takes the set element name in
// `element`; every other operator ignores it. Throws ArityMismatch.
Expr compose(ComposeOp op, const std::vector<Expr>& args, const std::string& element = {});

// Builds a constraint. When a schema is given, every symbol must be a
// schema path (resolved with read), otherwise SchemaMismatch.
Constraint compare(const Expr& lhs, Rel rel, const Expr& rhs, const NetworkSchema* schema = nullptr);

}  // namespace wnos
