#pragma once

#include <compare>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace wnos {

// Name of a scalar symbol. `index` is the instance index for instantiated
// symbols (sesrate_04, lbd_12); -1 marks a role-relative symbol in a lifted
// template or an unresolved path in a parsed program.
struct VarKey {
  std::string name;
  int index = -1;

  bool indexed() const { return index >= 0; }
  std::string str() const;
  auto operator<=>(const VarKey&) const = default;
};

enum class ExprKind { constant, var_ref, sum_over, add, product, negate, log, sqrt, quotient };

// Immutable expression tree. All construction goes through the static
// factories, which normalize eagerly: nested sums and products are
// flattened, constants folded, additive zeros and multiplicative ones
// dropped.
class Expr {
 public:
  Expr();  // constant 0

  static Expr constant(double v);
  static Expr var(std::string name, int index = -1);
  static Expr var(VarKey key);
  static Expr sum_over(std::string element, Expr body);
  static Expr add(std::vector<Expr> terms);
  static Expr product(std::vector<Expr> factors);
  static Expr negate(Expr e);
  static Expr log(Expr e);
  static Expr sqrt(Expr e);
  static Expr quotient(Expr numerator, Expr denominator);

  ExprKind kind() const;
  double value() const;
  const VarKey& key() const;
  const std::string& element() const;
  std::span<const Expr> children() const;
  const Expr& child(std::size_t i) const { return children()[i]; }

  bool is_constant() const { return kind() == ExprKind::constant; }
  bool is_constant(double v) const { return is_constant() && value() == v; }

  // Structural equality (no algebraic reasoning; see canonically_equal).
  bool operator==(const Expr& other) const;

  std::string str() const;

 private:
  struct Node;
  explicit Expr(std::shared_ptr<const Node> node);
  static Expr make(ExprKind kind, double value, VarKey key, std::string element,
                   std::vector<Expr> children);

  std::shared_ptr<const Node> node_;
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);

std::set<VarKey> collect_vars(const Expr& e);
bool depends_on(const Expr& e, const std::function<bool(const VarKey&)>& pred);

// Rebuilds `e` replacing every var_ref for which `fn` returns a value.
Expr substitute(const Expr& e, const std::function<std::optional<Expr>(const VarKey&)>& fn);

// Symbolic partial derivative. Throws NotDifferentiable on sum_over nodes.
Expr derivative(const Expr& e, const VarKey& wrt);

// Throws MissingParameter when `lookup` has no value for a symbol.
double evaluate(const Expr& e, const std::function<std::optional<double>(const VarKey&)>& lookup);
double evaluate(const Expr& e, const std::map<VarKey, double>& values);

// One addend of a sum-of-products form: coefficient times a product of atoms.
struct Term {
  double coefficient = 1.0;
  std::vector<Expr> factors;

  Expr to_expr() const;
  // Order-insensitive identity of the factor multiset.
  std::string monomial_key() const;
};

// Distributes products over sums and merges like terms. Term order follows
// first occurrence, so the result of expanding a sum is stable.
std::vector<Term> expand_terms(const Expr& e);
Expr expand(const Expr& e);

// Canonical text of the fully expanded, sorted polynomial over atoms
// (symbols, log/sqrt/inverse/sum applications). Two expressions with equal
// canonical forms are equal up to commutativity, associativity and
// distributivity.
std::string canonical_form(const Expr& e);
bool canonically_equal(const Expr& a, const Expr& b);

std::string format_number(double v);

}  // namespace wnos
