#include "wnos/dsl.hpp"

#include <cctype>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "wnos/errors.hpp"

namespace wnos {

namespace {

// ---------------------------------------------------------------- lexing

enum class Tok { ident, number, string, lparen, rparen, lbrack, rbrack, comma, dot, assign, minus, semi, newline, end };

struct Token {
  Tok kind = Tok::end;
  std::string text;
  double number = 0.0;
  int line = 1;
  int col = 1;
};

const char* tok_name(Tok t) {
  switch (t) {
    case Tok::ident: return "identifier";
    case Tok::number: return "number";
    case Tok::string: return "string";
    case Tok::lparen: return "'('";
    case Tok::rparen: return "')'";
    case Tok::lbrack: return "'['";
    case Tok::rbrack: return "']'";
    case Tok::comma: return "','";
    case Tok::dot: return "'.'";
    case Tok::assign: return "'='";
    case Tok::minus: return "'-'";
    case Tok::semi: return "';'";
    case Tok::newline: return "end of line";
    case Tok::end: return "end of input";
  }
  return "?";
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::size_t scan_number(std::string_view s, std::size_t i) {
  std::size_t j = i;
  while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
  if (j < s.size() && s[j] == '.') {
    ++j;
    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
  }
  if (j < s.size() && (s[j] == 'e' || s[j] == 'E')) {
    std::size_t k = j + 1;
    if (k < s.size() && (s[k] == '+' || s[k] == '-')) ++k;
    if (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) {
      while (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) ++k;
      j = k;
    }
  }
  return j;
}

double to_double(std::string_view s, int line, int col) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ParseError(line, col, "malformed number '" + std::string(s) + "'");
  return v;
}

std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  auto push = [&](Tok k, std::string text, int c) { out.push_back(Token{k, std::move(text), 0.0, line, c}); };
  while (i < src.size()) {
    char c = src[i];
    if (c == '\n') {
      push(Tok::newline, "", col);
      ++line;
      col = 1;
      ++i;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
      ++col;
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    int start_col = col;
    if (ident_start(c)) {
      std::size_t j = i;
      while (j < src.size() && ident_char(src[j])) ++j;
      push(Tok::ident, std::string(src.substr(i, j - i)), start_col);
      col += static_cast<int>(j - i);
      i = j;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = scan_number(src, i);
      Token t{Tok::number, std::string(src.substr(i, j - i)), 0.0, line, start_col};
      t.number = to_double(t.text, line, start_col);
      out.push_back(t);
      col += static_cast<int>(j - i);
      i = j;
      continue;
    }
    if (c == '\'' || c == '"' || c == '`') {
      // A backtick opens a string that may close with a quote, as in the
      // typeset listings.
      std::size_t j = i + 1;
      while (j < src.size() && src[j] != '\n' &&
             !(src[j] == c || (c == '`' && src[j] == '\'')))
        ++j;
      if (j >= src.size() || src[j] == '\n') throw ParseError(line, start_col, "unterminated string");
      push(Tok::string, std::string(src.substr(i + 1, j - i - 1)), start_col);
      col += static_cast<int>(j - i + 1);
      i = j + 1;
      continue;
    }
    Tok k;
    switch (c) {
      case '(': k = Tok::lparen; break;
      case ')': k = Tok::rparen; break;
      case '[': k = Tok::lbrack; break;
      case ']': k = Tok::rbrack; break;
      case ',': k = Tok::comma; break;
      case '.': k = Tok::dot; break;
      case '=': k = Tok::assign; break;
      case '-': k = Tok::minus; break;
      case ';': k = Tok::semi; break;
      default:
        throw ParseError(line, start_col, std::string("unexpected character '") + c + "'");
    }
    push(k, std::string(1, c), start_col);
    ++i;
    ++col;
  }
  out.push_back(Token{Tok::end, "", 0.0, line, col});
  return out;
}

// ---------------------------------------------------------- math language

struct Shaped {
  Expr e;
  std::vector<std::string> shape;
};

std::string shape_str(const std::vector<std::string>& s) {
  if (s.empty()) return "scalar";
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + s[i];
  return out + "]";
}

class MathParser {
 public:
  using Lookup = std::function<const Shaped*(const std::string&)>;

  MathParser(std::string_view text, int line, int col, Lookup lookup)
      : s_(text), line_(line), col0_(col), lookup_(std::move(lookup)) {}

  Shaped expression() {
    Shaped r = sum_expr();
    expect_end();
    return r;
  }

  // Returns lhs, relation, rhs.
  std::tuple<Shaped, Rel, Shaped> relation() {
    Shaped lhs = sum_expr();
    skip_ws();
    Rel rel;
    if (accept("<=")) rel = Rel::le;
    else if (accept(">=")) rel = Rel::ge;
    else if (accept("==")) rel = Rel::eq;
    else if (accept("<")) rel = Rel::lt;
    else if (accept(">")) rel = Rel::gt;
    else fail("expected a comparison operator");
    Shaped rhs = sum_expr();
    expect_end();
    broadcast(lhs, rhs, "comparison");
    return {lhs, rel, rhs};
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(line_, col0_ + static_cast<int>(pos_), what);
  }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  bool accept(std::string_view op) {
    skip_ws();
    if (s_.substr(pos_, op.size()) == op) {
      pos_ += op.size();
      return true;
    }
    return false;
  }

  void expect(std::string_view op) {
    if (!accept(op)) fail("expected '" + std::string(op) + "'");
  }

  void expect_end() {
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(s_.substr(pos_)) + "'");
  }

  std::vector<std::string> broadcast(const Shaped& a, const Shaped& b, const char* what) const {
    if (a.shape.empty()) return b.shape;
    if (b.shape.empty() || a.shape == b.shape) return a.shape;
    throw ValidationError(std::string("shape mismatch in ") + what + ": " + shape_str(a.shape) + " vs " +
                          shape_str(b.shape));
  }

  Shaped sum_expr() {
    Shaped acc = term();
    while (true) {
      skip_ws();
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) {
        bool minus = s_[pos_] == '-';
        ++pos_;
        Shaped rhs = term();
        auto shape = broadcast(acc, rhs, minus ? "'-'" : "'+'");
        acc = {minus ? acc.e - rhs.e : acc.e + rhs.e, shape};
      } else {
        return acc;
      }
    }
  }

  Shaped term() {
    Shaped acc = unary();
    while (true) {
      skip_ws();
      if (pos_ < s_.size() && (s_[pos_] == '*' || s_[pos_] == '/')) {
        bool div = s_[pos_] == '/';
        ++pos_;
        Shaped rhs = unary();
        auto shape = broadcast(acc, rhs, div ? "'/'" : "'*'");
        acc = {div ? acc.e / rhs.e : acc.e * rhs.e, shape};
      } else {
        return acc;
      }
    }
  }

  Shaped unary() {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == '-') {
      ++pos_;
      Shaped inner = unary();
      return {-inner.e, inner.shape};
    }
    return primary();
  }

  Shaped primary() {
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end of expression");
    char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t end = scan_number(s_, pos_);
      if (end == pos_) fail("malformed number");
      double v = to_double(s_.substr(pos_, end - pos_), line_, col0_ + static_cast<int>(pos_));
      pos_ = end;
      return {Expr::constant(v), {}};
    }
    if (c == '(') {
      ++pos_;
      Shaped inner = sum_expr();
      expect(")");
      return inner;
    }
    if (!ident_start(c)) fail(std::string("unexpected '") + c + "'");
    std::size_t start = pos_;
    while (pos_ < s_.size() && ident_char(s_[pos_])) ++pos_;
    std::string name(s_.substr(start, pos_ - start));
    skip_ws();
    bool call = pos_ < s_.size() && s_[pos_] == '(';
    if (call && (name == "sum" || name == "log" || name == "sqrt")) {
      ++pos_;
      Shaped arg = sum_expr();
      expect(")");
      if (name == "log") return {Expr::log(arg.e), arg.shape};
      if (name == "sqrt") return {Expr::sqrt(arg.e), arg.shape};
      if (arg.shape.empty()) return arg;
      std::string dim = arg.shape.back();
      arg.shape.pop_back();
      return {Expr::sum_over(dim, arg.e), arg.shape};
    }
    if (call) {
      pos_ = start;
      fail("unknown function '" + name + "'");
    }
    const Shaped* bound = lookup_(name);
    if (!bound) {
      pos_ = start;
      throw ValidationError("unbound identifier '" + name + "' at " + std::to_string(line_) + ":" +
                            std::to_string(col0_ + static_cast<int>(start)));
    }
    return *bound;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int line_;
  int col0_;
  Lookup lookup_;
};

// ------------------------------------------------------------ statements

class ProgramParser {
 public:
  ProgramParser(std::string_view text, const NetworkSchema& schema) : toks_(lex(text)), schema_(schema) {}

  ControlProblemSpec run() {
    while (peek().kind != Tok::end) {
      if (peek().kind == Tok::newline || peek().kind == Tok::semi) {
        ++i_;
        continue;
      }
      statement();
      if (peek().kind == Tok::comma) ++i_;
      const Token& t = peek();
      if (t.kind != Tok::newline && t.kind != Tok::semi && t.kind != Tok::end)
        throw ParseError(t.line, t.col, std::string("expected end of statement, found ") + tok_name(t.kind));
    }
    finish();
    return std::move(spec_);
  }

 private:
  const Token& peek() const { return toks_[i_]; }

  const Token& take(Tok k, const char* what = nullptr) {
    const Token& t = toks_[i_];
    if (t.kind != k)
      throw ParseError(t.line, t.col,
                       std::string("expected ") + (what ? what : tok_name(k)) + ", found " +
                           (t.text.empty() ? tok_name(t.kind) : "'" + t.text + "'"));
    ++i_;
    return t;
  }

  bool accept(Tok k) {
    if (peek().kind != k) return false;
    ++i_;
    return true;
  }

  // Bare word or quoted string.
  const Token& word(const char* what) {
    const Token& t = peek();
    if (t.kind == Tok::ident || t.kind == Tok::string) {
      ++i_;
      return t;
    }
    return take(Tok::ident, what);
  }

  void statement() {
    const Token& head = take(Tok::ident, "statement");
    if (peek().kind == Tok::assign) {
      ++i_;
      const Token& fn = take(Tok::ident, "mkexpr");
      if (fn.text != "mkexpr") throw ParseError(fn.line, fn.col, "expected mkexpr, found '" + fn.text + "'");
      take(Tok::lparen);
      const Token& math = take(Tok::string, "expression string");
      std::optional<Token> vars;
      if (accept(Tok::comma)) vars = take(Tok::string, "variable list");
      take(Tok::rparen);
      mkexpr(head, math, vars);
      return;
    }
    if (head.text != "nt") throw ParseError(head.line, head.col, "unknown statement '" + head.text + "'");
    take(Tok::dot);
    const Token& method = take(Tok::ident, "method name");
    take(Tok::lparen);
    if (method.text == "set") {
      const Token& key = word("setting key");
      take(Tok::comma);
      SettingValue v = value();
      set(key, std::move(v));
    } else if (method.text == "make_var") {
      make_var();
    } else if (method.text == "add_cstr") {
      const Token& math = take(Tok::string, "constraint string");
      std::optional<Token> vars;
      if (accept(Tok::comma)) vars = take(Tok::string, "variable list");
      add_cstr(math, vars);
    } else if (method.text == "objective") {
      const Token& sense = word("max or min");
      take(Tok::comma);
      const Token& name = word("expression name");
      if (sense.text == "max" || sense.text == "maximize") spec_.sense = Sense::maximize;
      else if (sense.text == "min" || sense.text == "minimize") spec_.sense = Sense::minimize;
      else throw ParseError(sense.line, sense.col, "objective sense must be max or min");
      objective_ = name;
    } else {
      throw ParseError(method.line, method.col, "unknown method nt." + method.text);
    }
    take(Tok::rparen);
  }

  SettingValue value() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::minus: {
        ++i_;
        const Token& n = take(Tok::number);
        return SettingValue::of(-n.number);
      }
      case Tok::number:
        ++i_;
        return SettingValue::of(t.number);
      case Tok::string:
      case Tok::ident:
        ++i_;
        return SettingValue::of(t.text);
      case Tok::lbrack: {
        ++i_;
        std::vector<SettingValue> items;
        if (!accept(Tok::rbrack)) {
          do {
            items.push_back(value());
          } while (accept(Tok::comma));
          take(Tok::rbrack);
        }
        return SettingValue::of(std::move(items));
      }
      default:
        throw ParseError(t.line, t.col, std::string("expected a value, found ") + tok_name(t.kind));
    }
  }

  void set(const Token& key, SettingValue v) {
    if (key.text.rfind("bounds.", 0) == 0) {
      const auto& l = v.list;
      if (v.kind != SettingValue::Kind::list || l.size() != 2 || l[0].kind != SettingValue::Kind::number ||
          l[1].kind != SettingValue::Kind::number)
        throw ValidationError("bounds for '" + key.text.substr(7) + "' must be [lo, hi]");
      if (!(l[0].number < l[1].number) || !std::isfinite(l[0].number) || !std::isfinite(l[1].number))
        throw ValidationError("bounds for '" + key.text.substr(7) + "' must be finite with lo < hi");
      pending_bounds_.emplace_back(key, Bounds{l[0].number, l[1].number});
      return;
    }
    spec_.settings[key.text] = std::move(v);
  }

  void make_var() {
    const Token& name = word("variable name");
    if (spec_.variable(name.text) || bound_.count(name.text))
      throw ValidationError("'" + name.text + "' is declared twice");
    take(Tok::comma);
    take(Tok::lbrack);
    std::vector<Token> chain;
    do {
      chain.push_back(word("element"));
    } while (accept(Tok::comma));
    take(Tok::rbrack);
    std::vector<IndexSpec> index;
    bool explicit_index = false;
    if (accept(Tok::comma)) {
      explicit_index = true;
      take(Tok::lbrack);
      do {
        const Token& t = peek();
        if (t.kind == Tok::number) {
          ++i_;
          if (t.number < 0 || t.number != static_cast<int>(t.number))
            throw ParseError(t.line, t.col, "index must be a non-negative integer");
          index.push_back({IndexSpec::Kind::fixed, static_cast<int>(t.number)});
        } else if (t.kind == Tok::ident && t.text == "all") {
          ++i_;
          index.push_back({IndexSpec::Kind::all, 0});
        } else if (t.kind == Tok::ident && t.text == "None") {
          ++i_;
          index.push_back({IndexSpec::Kind::none, 0});
        } else {
          throw ParseError(t.line, t.col, "index must be all, None or an integer");
        }
      } while (accept(Tok::comma));
      take(Tok::rbrack);
    }

    VariableDecl v;
    v.name = name.text;
    std::string path;
    for (std::size_t k = 0; k < chain.size(); ++k) {
      path += (k ? "." : "") + chain[k].text;
      const Element* el;
      try {
        el = &read_element(schema_, path);
      } catch (const UnknownElement& e) {
        throw ValidationError(std::string(e.what()) + " (variable '" + v.name + "')");
      }
      bool last = k + 1 == chain.size();
      if (k == 0 && !(el->is_virtual() && el->virt->scope == Scope::global))
        throw ValidationError("variable '" + v.name + "' must start at a global set, not '" + el->ref.id + "'");
      if (!last && !el->is_virtual())
        throw ValidationError("'" + el->ref.id + "' in variable '" + v.name + "' is not a set");
      if (last && !el->is_parameter())
        throw ValidationError("variable '" + v.name + "' must end at a parameter, not '" + el->ref.id + "'");
      v.chain.push_back(el->ref.id);
    }
    if (!explicit_index) {
      for (std::size_t k = 0; k < chain.size(); ++k)
        index.push_back({k + 1 == chain.size() ? IndexSpec::Kind::none : IndexSpec::Kind::all, 0});
    }
    if (index.size() != chain.size())
      throw ValidationError("variable '" + v.name + "' has " + std::to_string(chain.size()) +
                            " path elements but " + std::to_string(index.size()) + " index entries");
    for (std::size_t k = 0; k + 1 < index.size(); ++k) {
      if (index[k].kind == IndexSpec::Kind::none)
        throw ValidationError("set '" + v.chain[k] + "' in variable '" + v.name + "' needs all or an index");
      if (index[k].kind == IndexSpec::Kind::all) v.shape.push_back(v.chain[k]);
    }
    if (index.back().kind != IndexSpec::Kind::none)
      throw ValidationError("parameter index of variable '" + v.name + "' must be None");
    v.index = std::move(index);
    v.decision = schema_.at(v.leaf()).param->controllable;
    bound_[v.name] = Shaped{Expr::var(v.name), v.shape};
    spec_.variables.push_back(std::move(v));
  }

  MathParser::Lookup lookup() {
    return [this](const std::string& n) -> const Shaped* {
      auto it = bound_.find(n);
      return it == bound_.end() ? nullptr : &it->second;
    };
  }

  void check_var_list(const std::optional<Token>& vars) {
    if (!vars) return;
    std::stringstream ss(vars->text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      auto b = item.find_first_not_of(" \t");
      auto e = item.find_last_not_of(" \t");
      if (b == std::string::npos) continue;
      item = item.substr(b, e - b + 1);
      if (!bound_.count(item))
        throw ValidationError("unbound variable '" + item + "' at " + std::to_string(vars->line) + ":" +
                              std::to_string(vars->col));
    }
  }

  void mkexpr(const Token& name, const Token& math, const std::optional<Token>& vars) {
    check_var_list(vars);
    if (spec_.variable(name.text)) throw ValidationError("'" + name.text + "' is already a variable");
    Shaped s = MathParser(math.text, math.line, math.col + 1, lookup()).expression();
    bound_[name.text] = s;
    for (auto& [n, e] : spec_.expressions) {
      if (n == name.text) {
        e = s.e;
        last_expr_ = name.text;
        return;
      }
    }
    spec_.expressions.emplace_back(name.text, s.e);
    last_expr_ = name.text;
  }

  void add_cstr(const Token& math, const std::optional<Token>& vars) {
    check_var_list(vars);
    auto [lhs, rel, rhs] = MathParser(math.text, math.line, math.col + 1, lookup()).relation();
    Constraint c = compare(lhs.e, rel, rhs.e);
    if (!c.warning.empty()) spec_.warnings.push_back(c.warning);
    spec_.constraints.push_back(std::move(c));
  }

  void finish() {
    for (const auto& [key, b] : pending_bounds_) {
      std::string var = key.text.substr(7);
      auto it = std::find_if(spec_.variables.begin(), spec_.variables.end(),
                             [&](const VariableDecl& v) { return v.name == var; });
      if (it == spec_.variables.end())
        throw ValidationError("bounds given for undeclared variable '" + var + "' at " +
                              std::to_string(key.line) + ":" + std::to_string(key.col));
      it->bounds = b;
    }

    std::string obj = objective_ ? objective_->text : last_expr_;
    if (obj.empty()) throw ValidationError("program defines no objective expression (mkexpr)");
    auto it = std::find_if(spec_.expressions.begin(), spec_.expressions.end(),
                           [&](const auto& p) { return p.first == obj; });
    if (it == spec_.expressions.end())
      throw ValidationError("objective '" + obj + "' is not an expression defined with mkexpr");
    spec_.objective = obj;
    spec_.utility = it->second;

    check_appearance();
    check_linear_bounds();
  }

  void check_appearance() {
    std::set<std::string> names;
    auto add = [&](const Expr& e) {
      for (const auto& k : collect_vars(e)) names.insert(k.name);
    };
    add(spec_.utility);
    for (const auto& c : spec_.constraints) {
      add(c.lhs);
      add(c.rhs);
    }
    std::set<std::string> leaves, inputs;
    for (const auto& n : names) {
      const VariableDecl* v = spec_.variable(n);
      leaves.insert(v->leaf());
      for (const auto& in : schema_.function_inputs(v->leaf())) inputs.insert(in);
    }
    for (const auto& v : spec_.variables) {
      if (names.count(v.name) || leaves.count(v.leaf()) || inputs.count(v.leaf())) continue;
      throw ValidationError("variable '" + v.name + "' appears in neither the utility nor any constraint");
    }
  }

  void check_linear_bounds() {
    std::function<Expr(const Expr&)> strip = [&](const Expr& e) -> Expr {
      if (e.kind() == ExprKind::sum_over) return strip(e.child(0));
      if (e.children().empty()) return e;
      // Rebuild through substitute on a copy with sums removed.
      std::vector<Expr> ch;
      for (const auto& c : e.children()) ch.push_back(strip(c));
      switch (e.kind()) {
        case ExprKind::add: return Expr::add(ch);
        case ExprKind::product: return Expr::product(ch);
        case ExprKind::negate: return Expr::negate(ch[0]);
        case ExprKind::log: return Expr::log(ch[0]);
        case ExprKind::sqrt: return Expr::sqrt(ch[0]);
        case ExprKind::quotient: return Expr::quotient(ch[0], ch[1]);
        default: return e;
      }
    };
    Expr u = strip(spec_.utility);
    for (const auto& k : collect_vars(u)) {
      const VariableDecl* v = spec_.variable(k.name);
      if (!v || !v->decision || v->bounds) continue;
      Expr d = derivative(u, k);
      if (d.is_constant(0.0)) continue;
      bool linear = !depends_on(d, [&](const VarKey& x) { return x.name == k.name; });
      if (linear)
        throw ValidationError("variable '" + k.name + "' enters the utility linearly and needs explicit bounds: nt.set('bounds." +
                              k.name + "', [lo, hi])");
    }
  }

  std::vector<Token> toks_;
  std::size_t i_ = 0;
  const NetworkSchema& schema_;
  ControlProblemSpec spec_;
  std::map<std::string, Shaped> bound_;
  std::vector<std::pair<Token, Bounds>> pending_bounds_;
  std::optional<Token> objective_;
  std::string last_expr_;
};

// ------------------------------------------------------------- printing

std::string number_text(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

int prec(const Expr& e) {
  switch (e.kind()) {
    case ExprKind::add: return 1;
    case ExprKind::product:
    case ExprKind::quotient: return 2;
    case ExprKind::negate: return 3;
    case ExprKind::constant: return e.value() < 0 ? 3 : 4;
    default: return 4;
  }
}

std::string math(const Expr& e, int min_prec);

std::string math_bare(const Expr& e) {
  switch (e.kind()) {
    case ExprKind::constant: return number_text(e.value());
    case ExprKind::var_ref: return e.key().str();
    case ExprKind::sum_over: return "sum(" + math(e.child(0), 0) + ")";
    case ExprKind::log: return "log(" + math(e.child(0), 0) + ")";
    case ExprKind::sqrt: return "sqrt(" + math(e.child(0), 0) + ")";
    case ExprKind::negate: return "-" + math(e.child(0), 3);
    case ExprKind::quotient: return math(e.child(0), 2) + "/" + math(e.child(1), 3);
    case ExprKind::product: {
      std::string s;
      for (std::size_t i = 0; i < e.children().size(); ++i)
        s += (i ? "*" : "") + math(e.child(i), i ? 3 : 2);
      return s;
    }
    case ExprKind::add: {
      std::string s;
      for (std::size_t i = 0; i < e.children().size(); ++i) {
        const Expr& t = e.child(i);
        bool neg = t.kind() == ExprKind::negate || (t.is_constant() && t.value() < 0) ||
                   (t.kind() == ExprKind::product && t.child(0).is_constant() && t.child(0).value() < 0);
        if (i == 0) s += math(t, 1);
        else if (neg) s += " - " + math(Expr::negate(t), 2);
        else s += " + " + math(t, 1);
      }
      return s;
    }
  }
  return {};
}

std::string math(const Expr& e, int min_prec) {
  std::string s = math_bare(e);
  return prec(e) < min_prec ? "(" + s + ")" : s;
}

}  // namespace

std::string to_dsl_math(const Expr& e) { return math(e, 0); }

ControlProblemSpec parse_program(std::string_view text, const NetworkSchema& schema) {
  return ProgramParser(text, schema).run();
}

ControlProblemSpec parse_program(std::string_view text) {
  static const NetworkSchema schema = build_default_schema();
  return parse_program(text, schema);
}

ControlProblemSpec load_program(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open program '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_program(ss.str());
}

std::string print_program(const ControlProblemSpec& spec) {
  std::ostringstream out;
  for (const auto& [k, v] : spec.settings) out << "nt.set('" << k << "', " << v.str() << ")\n";
  auto var_list = [&](std::initializer_list<const Expr*> es) {
    std::set<std::string> used;
    for (const Expr* e : es)
      for (const auto& k : collect_vars(*e)) used.insert(k.name);
    std::string s;
    for (const auto& v : spec.variables)
      if (used.count(v.name)) s += (s.empty() ? "" : ",") + v.name;
    return s;
  };
  for (const auto& v : spec.variables) {
    out << "nt.make_var('" << v.name << "', [";
    for (std::size_t i = 0; i < v.chain.size(); ++i) out << (i ? ", " : "") << v.chain[i];
    out << "], [";
    for (std::size_t i = 0; i < v.index.size(); ++i) {
      out << (i ? ", " : "");
      switch (v.index[i].kind) {
        case IndexSpec::Kind::all: out << "all"; break;
        case IndexSpec::Kind::none: out << "None"; break;
        case IndexSpec::Kind::fixed: out << v.index[i].value; break;
      }
    }
    out << "])\n";
    if (v.bounds)
      out << "nt.set('bounds." << v.name << "', [" << number_text(v.bounds->lo) << ", "
          << number_text(v.bounds->hi) << "])\n";
  }
  for (const auto& [name, e] : spec.expressions)
    out << name << " = mkexpr('" << to_dsl_math(e) << "', '" << var_list({&e}) << "')\n";
  for (const auto& c : spec.constraints)
    out << "nt.add_cstr('" << to_dsl_math(c.lhs) << " " << to_string(c.rel) << " " << to_dsl_math(c.rhs)
        << "', '" << var_list({&c.lhs, &c.rhs}) << "')\n";
  out << "nt.objective(" << to_string(spec.sense) << ", " << spec.objective << ")\n";
  return out.str();
}

}  // namespace wnos
