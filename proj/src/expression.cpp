#include "wnos/expression.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "wnos/errors.hpp"

namespace wnos {

struct Expr::Node {
  ExprKind kind = ExprKind::constant;
  double value = 0.0;
  VarKey key;
  std::string element;
  std::vector<Expr> children;
};

std::string VarKey::str() const {
  if (index < 0) return name;
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%02d", index);
  return name + buf;
}

std::string format_number(double v) {
  if (v == 0.0) return "0";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

Expr::Expr() : Expr(constant(0.0)) {}

Expr::Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

Expr Expr::make(ExprKind kind, double value, VarKey key, std::string element,
                std::vector<Expr> children) {
  auto n = std::make_shared<Node>();
  n->kind = kind;
  n->value = value;
  n->key = std::move(key);
  n->element = std::move(element);
  n->children = std::move(children);
  return Expr(std::move(n));
}

Expr Expr::constant(double v) {
  if (v == 0.0) v = 0.0;  // fold -0
  return make(ExprKind::constant, v, {}, {}, {});
}

Expr Expr::var(std::string name, int index) { return var(VarKey{std::move(name), index}); }

Expr Expr::var(VarKey key) { return make(ExprKind::var_ref, 0.0, std::move(key), {}, {}); }

Expr Expr::sum_over(std::string element, Expr body) {
  if (body.is_constant(0.0)) return body;
  return make(ExprKind::sum_over, 0.0, {}, std::move(element), {std::move(body)});
}

Expr Expr::add(std::vector<Expr> terms) {
  std::vector<Expr> flat;
  double c = 0.0;
  std::function<void(const Expr&)> push = [&](const Expr& t) {
    if (t.kind() == ExprKind::add) {
      for (const auto& ch : t.children()) push(ch);
    } else if (t.is_constant()) {
      c += t.value();
    } else {
      flat.push_back(t);
    }
  };
  for (const auto& t : terms) push(t);
  if (c != 0.0) flat.push_back(constant(c));
  if (flat.empty()) return constant(0.0);
  if (flat.size() == 1) return flat.front();
  return make(ExprKind::add, 0.0, {}, {}, std::move(flat));
}

Expr Expr::product(std::vector<Expr> factors) {
  std::vector<Expr> flat;
  double c = 1.0;
  std::function<void(const Expr&)> push = [&](const Expr& f) {
    switch (f.kind()) {
      case ExprKind::product:
        for (const auto& ch : f.children()) push(ch);
        break;
      case ExprKind::negate:
        c = -c;
        push(f.child(0));
        break;
      case ExprKind::constant:
        c *= f.value();
        break;
      default:
        flat.push_back(f);
    }
  };
  for (const auto& f : factors) push(f);
  if (c == 0.0) return constant(0.0);
  if (flat.empty()) return constant(c);
  if (c == -1.0) {
    Expr rest = flat.size() == 1 ? flat.front() : make(ExprKind::product, 0.0, {}, {}, flat);
    return make(ExprKind::negate, 0.0, {}, {}, {std::move(rest)});
  }
  if (c != 1.0) flat.insert(flat.begin(), constant(c));
  if (flat.size() == 1) return flat.front();
  return make(ExprKind::product, 0.0, {}, {}, std::move(flat));
}

Expr Expr::negate(Expr e) {
  switch (e.kind()) {
    case ExprKind::constant:
      return constant(-e.value());
    case ExprKind::negate:
      return e.child(0);
    case ExprKind::product:
      if (e.child(0).is_constant()) {
        std::vector<Expr> f(e.children().begin(), e.children().end());
        f[0] = constant(-f[0].value());
        return product(std::move(f));
      }
      break;
    default:
      break;
  }
  return make(ExprKind::negate, 0.0, {}, {}, {std::move(e)});
}

Expr Expr::log(Expr e) {
  if (e.is_constant() && e.value() > 0.0) return constant(std::log(e.value()));
  return make(ExprKind::log, 0.0, {}, {}, {std::move(e)});
}

Expr Expr::sqrt(Expr e) {
  if (e.is_constant() && e.value() >= 0.0) return constant(std::sqrt(e.value()));
  return make(ExprKind::sqrt, 0.0, {}, {}, {std::move(e)});
}

Expr Expr::quotient(Expr numerator, Expr denominator) {
  if (numerator.is_constant(0.0)) return numerator;
  if (denominator.is_constant() && denominator.value() != 0.0) {
    return product({constant(1.0 / denominator.value()), std::move(numerator)});
  }
  return make(ExprKind::quotient, 0.0, {}, {}, {std::move(numerator), std::move(denominator)});
}

ExprKind Expr::kind() const { return node_->kind; }
double Expr::value() const { return node_->value; }
const VarKey& Expr::key() const { return node_->key; }
const std::string& Expr::element() const { return node_->element; }
std::span<const Expr> Expr::children() const { return node_->children; }

bool Expr::operator==(const Expr& other) const {
  if (node_ == other.node_) return true;
  if (kind() != other.kind()) return false;
  switch (kind()) {
    case ExprKind::constant:
      return value() == other.value();
    case ExprKind::var_ref:
      return key() == other.key();
    case ExprKind::sum_over:
      if (element() != other.element()) return false;
      break;
    default:
      break;
  }
  auto a = children();
  auto b = other.children();
  return std::equal(a.begin(), a.end(), b.begin(), b.end());
}

namespace {

int precedence(const Expr& e) {
  switch (e.kind()) {
    case ExprKind::add:
      return 1;
    case ExprKind::product:
    case ExprKind::quotient:
      return 2;
    case ExprKind::negate:
      return 3;
    case ExprKind::constant:
      return e.value() < 0 ? 3 : 4;
    default:
      return 4;
  }
}

std::string render(const Expr& e, int min_prec);

std::string render_bare(const Expr& e) {
  switch (e.kind()) {
    case ExprKind::constant:
      return format_number(e.value());
    case ExprKind::var_ref:
      return e.key().str();
    case ExprKind::sum_over:
      return "sum[" + e.element() + "](" + render(e.child(0), 0) + ")";
    case ExprKind::log:
      return "log(" + render(e.child(0), 0) + ")";
    case ExprKind::sqrt:
      return "sqrt(" + render(e.child(0), 0) + ")";
    case ExprKind::negate:
      return "-" + render(e.child(0), 3);
    case ExprKind::quotient:
      return render(e.child(0), 2) + "/" + render(e.child(1), 3);
    case ExprKind::product: {
      std::string s;
      for (std::size_t i = 0; i < e.children().size(); ++i) {
        if (i) s += "*";
        s += render(e.child(i), 2);
      }
      return s;
    }
    case ExprKind::add: {
      std::string s;
      bool first = true;
      for (const auto& t : e.children()) {
        bool neg = t.kind() == ExprKind::negate || (t.is_constant() && t.value() < 0) ||
                   (t.kind() == ExprKind::product && t.child(0).is_constant() &&
                    t.child(0).value() < 0);
        if (first) {
          s += render(t, 1);
        } else if (neg) {
          s += " - " + render(Expr::negate(t), 2);
        } else {
          s += " + " + render(t, 1);
        }
        first = false;
      }
      return s;
    }
  }
  return {};
}

std::string render(const Expr& e, int min_prec) {
  std::string s = render_bare(e);
  if (precedence(e) < min_prec) return "(" + s + ")";
  return s;
}

void collect(const Expr& e, std::set<VarKey>& out) {
  if (e.kind() == ExprKind::var_ref) out.insert(e.key());
  for (const auto& c : e.children()) collect(c, out);
}

}  // namespace

std::string Expr::str() const { return render(*this, 0); }

Expr operator+(const Expr& a, const Expr& b) { return Expr::add({a, b}); }
Expr operator-(const Expr& a, const Expr& b) { return Expr::add({a, Expr::negate(b)}); }
Expr operator*(const Expr& a, const Expr& b) { return Expr::product({a, b}); }
Expr operator/(const Expr& a, const Expr& b) { return Expr::quotient(a, b); }
Expr operator-(const Expr& a) { return Expr::negate(a); }

std::set<VarKey> collect_vars(const Expr& e) {
  std::set<VarKey> out;
  collect(e, out);
  return out;
}

bool depends_on(const Expr& e, const std::function<bool(const VarKey&)>& pred) {
  if (e.kind() == ExprKind::var_ref) return pred(e.key());
  for (const auto& c : e.children())
    if (depends_on(c, pred)) return true;
  return false;
}

Expr substitute(const Expr& e, const std::function<std::optional<Expr>(const VarKey&)>& fn) {
  std::vector<Expr> ch;
  auto rebuild = [&] {
    ch.clear();
    for (const auto& c : e.children()) ch.push_back(substitute(c, fn));
  };
  switch (e.kind()) {
    case ExprKind::constant:
      return e;
    case ExprKind::var_ref: {
      auto r = fn(e.key());
      return r ? *r : e;
    }
    case ExprKind::sum_over:
      return Expr::sum_over(e.element(), substitute(e.child(0), fn));
    case ExprKind::add:
      rebuild();
      return Expr::add(ch);
    case ExprKind::product:
      rebuild();
      return Expr::product(ch);
    case ExprKind::negate:
      return Expr::negate(substitute(e.child(0), fn));
    case ExprKind::log:
      return Expr::log(substitute(e.child(0), fn));
    case ExprKind::sqrt:
      return Expr::sqrt(substitute(e.child(0), fn));
    case ExprKind::quotient:
      return Expr::quotient(substitute(e.child(0), fn), substitute(e.child(1), fn));
  }
  return e;
}

Expr derivative(const Expr& e, const VarKey& wrt) {
  switch (e.kind()) {
    case ExprKind::constant:
      return Expr::constant(0.0);
    case ExprKind::var_ref:
      return Expr::constant(e.key() == wrt ? 1.0 : 0.0);
    case ExprKind::sum_over:
      throw NotDifferentiable("sum over '" + e.element() + "' must be instantiated first");
    case ExprKind::add: {
      std::vector<Expr> d;
      for (const auto& c : e.children()) d.push_back(derivative(c, wrt));
      return Expr::add(d);
    }
    case ExprKind::product: {
      std::vector<Expr> terms;
      auto f = e.children();
      for (std::size_t i = 0; i < f.size(); ++i) {
        Expr di = derivative(f[i], wrt);
        if (di.is_constant(0.0)) continue;
        std::vector<Expr> factors{di};
        for (std::size_t j = 0; j < f.size(); ++j)
          if (j != i) factors.push_back(f[j]);
        terms.push_back(Expr::product(factors));
      }
      return Expr::add(terms);
    }
    case ExprKind::negate:
      return Expr::negate(derivative(e.child(0), wrt));
    case ExprKind::log: {
      Expr du = derivative(e.child(0), wrt);
      return du.is_constant(0.0) ? du : Expr::quotient(du, e.child(0));
    }
    case ExprKind::sqrt: {
      Expr du = derivative(e.child(0), wrt);
      if (du.is_constant(0.0)) return du;
      return Expr::quotient(du, Expr::product({Expr::constant(2.0), e}));
    }
    case ExprKind::quotient: {
      const Expr& a = e.child(0);
      const Expr& b = e.child(1);
      Expr da = derivative(a, wrt);
      Expr db = derivative(b, wrt);
      if (db.is_constant(0.0)) return Expr::quotient(da, b);
      return Expr::quotient(da * b - a * db, b * b);
    }
  }
  return Expr::constant(0.0);
}

double evaluate(const Expr& e, const std::function<std::optional<double>(const VarKey&)>& lookup) {
  switch (e.kind()) {
    case ExprKind::constant:
      return e.value();
    case ExprKind::var_ref: {
      auto v = lookup(e.key());
      if (!v) throw MissingParameter("no value for '" + e.key().str() + "'");
      return *v;
    }
    case ExprKind::sum_over:
      throw MissingParameter("sum over '" + e.element() + "' has no runtime set");
    case ExprKind::add: {
      double s = 0.0;
      for (const auto& c : e.children()) s += evaluate(c, lookup);
      return s;
    }
    case ExprKind::product: {
      double p = 1.0;
      for (const auto& c : e.children()) p *= evaluate(c, lookup);
      return p;
    }
    case ExprKind::negate:
      return -evaluate(e.child(0), lookup);
    case ExprKind::log:
      return std::log(evaluate(e.child(0), lookup));
    case ExprKind::sqrt:
      return std::sqrt(evaluate(e.child(0), lookup));
    case ExprKind::quotient:
      return evaluate(e.child(0), lookup) / evaluate(e.child(1), lookup);
  }
  return 0.0;
}

double evaluate(const Expr& e, const std::map<VarKey, double>& values) {
  return evaluate(e, [&](const VarKey& k) -> std::optional<double> {
    auto it = values.find(k);
    if (it == values.end()) return std::nullopt;
    return it->second;
  });
}

namespace {

std::string atom_key(const Expr& a) {
  switch (a.kind()) {
    case ExprKind::var_ref:
      return a.key().str();
    case ExprKind::log:
      return "log(" + canonical_form(a.child(0)) + ")";
    case ExprKind::sqrt:
      return "sqrt(" + canonical_form(a.child(0)) + ")";
    case ExprKind::sum_over:
      return "sum[" + a.element() + "](" + canonical_form(a.child(0)) + ")";
    case ExprKind::quotient:
      // Only reciprocal atoms survive expansion.
      return "inv(" + canonical_form(a.child(1)) + ")";
    default:
      return a.str();
  }
}

std::vector<Term> merge_terms(std::vector<Term> raw) {
  std::vector<Term> out;
  std::unordered_map<std::string, std::size_t> pos;
  for (auto& t : raw) {
    std::string k = t.monomial_key();
    auto it = pos.find(k);
    if (it == pos.end()) {
      pos.emplace(k, out.size());
      out.push_back(std::move(t));
    } else {
      out[it->second].coefficient += t.coefficient;
    }
  }
  std::erase_if(out, [](const Term& t) { return std::abs(t.coefficient) <= 1e-12; });
  return out;
}

}  // namespace

Expr Term::to_expr() const {
  std::vector<Expr> f;
  f.reserve(factors.size() + 1);
  f.push_back(Expr::constant(coefficient));
  f.insert(f.end(), factors.begin(), factors.end());
  return Expr::product(std::move(f));
}

std::string Term::monomial_key() const {
  std::vector<std::string> keys;
  keys.reserve(factors.size());
  for (const auto& f : factors) keys.push_back(atom_key(f));
  std::sort(keys.begin(), keys.end());
  std::string s;
  for (const auto& k : keys) {
    if (!s.empty()) s += "*";
    s += k;
  }
  return s;
}

std::vector<Term> expand_terms(const Expr& e) {
  switch (e.kind()) {
    case ExprKind::constant:
      if (e.value() == 0.0) return {};
      return {Term{e.value(), {}}};
    case ExprKind::add: {
      std::vector<Term> all;
      for (const auto& c : e.children()) {
        auto t = expand_terms(c);
        all.insert(all.end(), t.begin(), t.end());
      }
      return merge_terms(std::move(all));
    }
    case ExprKind::negate: {
      auto t = expand_terms(e.child(0));
      for (auto& x : t) x.coefficient = -x.coefficient;
      return t;
    }
    case ExprKind::product: {
      std::vector<Term> acc{Term{1.0, {}}};
      for (const auto& c : e.children()) {
        auto rhs = expand_terms(c);
        std::vector<Term> next;
        next.reserve(acc.size() * rhs.size());
        for (const auto& a : acc) {
          for (const auto& b : rhs) {
            Term t{a.coefficient * b.coefficient, a.factors};
            t.factors.insert(t.factors.end(), b.factors.begin(), b.factors.end());
            next.push_back(std::move(t));
          }
        }
        acc = merge_terms(std::move(next));
      }
      return acc;
    }
    case ExprKind::quotient: {
      auto num = expand_terms(e.child(0));
      Expr inv = Expr::quotient(Expr::constant(1.0), e.child(1));
      for (auto& t : num) t.factors.push_back(inv);
      return merge_terms(std::move(num));
    }
    default:
      return {Term{1.0, {e}}};
  }
}

Expr expand(const Expr& e) {
  std::vector<Expr> terms;
  for (const auto& t : expand_terms(e)) terms.push_back(t.to_expr());
  return Expr::add(std::move(terms));
}

std::string canonical_form(const Expr& e) {
  auto terms = expand_terms(e);
  std::vector<std::pair<std::string, double>> rows;
  rows.reserve(terms.size());
  for (const auto& t : terms) rows.emplace_back(t.monomial_key(), t.coefficient);
  std::sort(rows.begin(), rows.end());
  if (rows.empty()) return "0";
  std::string s;
  for (const auto& [k, c] : rows) {
    if (!s.empty()) s += " + ";
    s += format_number(c);
    if (!k.empty()) s += "*" + k;
  }
  return s;
}

bool canonically_equal(const Expr& a, const Expr& b) { return canonical_form(a) == canonical_form(b); }

}  // namespace wnos
