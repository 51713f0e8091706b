#include "wnos/problem.hpp"

#include <charconv>

#include "wnos/errors.hpp"

namespace wnos {

std::string to_string(Sense s) { return s == Sense::maximize ? "max" : "min"; }

std::string to_string(Rel r) {
  switch (r) {
    case Rel::le: return "<=";
    case Rel::lt: return "<";
    case Rel::ge: return ">=";
    case Rel::gt: return ">";
    case Rel::eq: return "==";
  }
  return "?";
}

SettingValue SettingValue::of(double v) {
  SettingValue s;
  s.kind = Kind::number;
  s.number = v;
  return s;
}

SettingValue SettingValue::of(std::string t) {
  SettingValue s;
  s.kind = Kind::text;
  s.text = std::move(t);
  return s;
}

SettingValue SettingValue::of(std::vector<SettingValue> l) {
  SettingValue s;
  s.kind = Kind::list;
  s.list = std::move(l);
  return s;
}

std::string SettingValue::str() const {
  switch (kind) {
    case Kind::number: {
      char buf[32];
      auto r = std::to_chars(buf, buf + sizeof buf, number);
      return std::string(buf, r.ptr);
    }
    case Kind::text:
      return "'" + text + "'";
    case Kind::list: {
      std::string s = "[";
      for (std::size_t i = 0; i < list.size(); ++i) {
        if (i) s += ", ";
        s += list[i].str();
      }
      return s + "]";
    }
  }
  return {};
}

const VariableDecl* ControlProblemSpec::variable(std::string_view name) const {
  for (const auto& v : variables)
    if (v.name == name) return &v;
  return nullptr;
}

const SettingValue* ControlProblemSpec::setting(std::string_view key) const {
  auto it = settings.find(std::string(key));
  return it == settings.end() ? nullptr : &it->second;
}

double ControlProblemSpec::setting_number(std::string_view key, double fallback) const {
  const SettingValue* v = setting(key);
  if (!v) return fallback;
  if (v->kind != SettingValue::Kind::number)
    throw ValidationError("setting '" + std::string(key) + "' must be a number");
  return v->number;
}

std::string ControlProblemSpec::setting_text(std::string_view key, const std::string& fallback) const {
  const SettingValue* v = setting(key);
  if (!v) return fallback;
  if (v->kind != SettingValue::Kind::text)
    throw ValidationError("setting '" + std::string(key) + "' must be a string");
  return v->text;
}

Expr compose(ComposeOp op, const std::vector<Expr>& args, const std::string& element) {
  auto need = [&](std::size_t n, const char* name) {
    if (args.size() != n)
      throw ArityMismatch(std::string(name) + " takes " + std::to_string(n) + " argument(s), got " +
                          std::to_string(args.size()));
  };
  switch (op) {
    case ComposeOp::add:
      if (args.empty()) throw ArityMismatch("add needs at least one argument");
      return Expr::add(args);
    case ComposeOp::product:
      if (args.empty()) throw ArityMismatch("product needs at least one argument");
      return Expr::product(args);
    case ComposeOp::negate:
      need(1, "negate");
      return Expr::negate(args[0]);
    case ComposeOp::log:
      need(1, "log");
      return Expr::log(args[0]);
    case ComposeOp::sqrt:
      need(1, "sqrt");
      return Expr::sqrt(args[0]);
    case ComposeOp::quotient:
      need(2, "quotient");
      return Expr::quotient(args[0], args[1]);
    case ComposeOp::sum_over:
      need(1, "sum_over");
      if (element.empty()) throw ArityMismatch("sum_over needs a set element");
      return Expr::sum_over(element, args[0]);
  }
  throw ArityMismatch("unknown operator");
}

Constraint compare(const Expr& lhs, Rel rel, const Expr& rhs, const NetworkSchema* schema) {
  if (schema) {
    auto check = [&](const Expr& e) {
      for (const auto& k : collect_vars(e)) {
        try {
          read(*schema, k.name);
        } catch (const UnknownElement&) {
          throw SchemaMismatch("'" + k.name + "' does not resolve against the schema");
        }
      }
    };
    check(lhs);
    check(rhs);
  }
  Constraint c{lhs, rel, rhs, {}};
  if ((rel == Rel::le || rel == Rel::ge || rel == Rel::eq) && canonically_equal(lhs, rhs))
    c.warning = "constraint '" + lhs.str() + " " + to_string(rel) + " " + rhs.str() +
                "' is always satisfied";
  return c;
}

}  // namespace wnos
