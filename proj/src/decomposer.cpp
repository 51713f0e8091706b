#include "wnos/decomposer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "wnos/errors.hpp"

namespace wnos {

std::string to_string(const Entity& e) { return to_string(e.type) + " " + std::to_string(e.index); }

namespace {

constexpr const char* kDualPrefix = "lbd";

bool is_dual_name(const std::string& n) { return n.rfind(kDualPrefix, 0) == 0; }

// Nested value of an expression over instantiated sets. Each level of
// `dims` indexes the children of the nodes at that depth.
struct TNode {
  Expr leaf;
  std::vector<int> keys;
  std::vector<TNode> kids;
};

struct Tensor {
  std::vector<std::string> dims;
  TNode root;
};

TNode map_node(const TNode& n, const std::function<Expr(const Expr&)>& f) {
  TNode out;
  if (n.kids.empty()) {
    out.leaf = f(n.leaf);
    return out;
  }
  out.keys = n.keys;
  for (const auto& k : n.kids) out.kids.push_back(map_node(k, f));
  return out;
}

TNode zip_node(const TNode& a, const TNode& b, const std::function<Expr(const Expr&, const Expr&)>& f) {
  TNode out;
  if (a.kids.empty() && b.kids.empty()) {
    out.leaf = f(a.leaf, b.leaf);
    return out;
  }
  if (a.keys != b.keys) throw ValidationError("operands are indexed by different instance sets");
  out.keys = a.keys;
  for (std::size_t i = 0; i < a.kids.size(); ++i) out.kids.push_back(zip_node(a.kids[i], b.kids[i], f));
  return out;
}

Tensor binary(const Tensor& a, const Tensor& b, const std::function<Expr(const Expr&, const Expr&)>& f) {
  if (a.dims.empty()) {
    const Expr& s = a.root.leaf;
    return {b.dims, map_node(b.root, [&](const Expr& x) { return f(s, x); })};
  }
  if (b.dims.empty()) {
    const Expr& s = b.root.leaf;
    return {a.dims, map_node(a.root, [&](const Expr& x) { return f(x, s); })};
  }
  if (a.dims != b.dims) throw ValidationError("shape mismatch between instantiated operands");
  return {a.dims, zip_node(a.root, b.root, f)};
}

void reduce_last(TNode& n, std::size_t depth, std::size_t target) {
  if (depth == target) {
    std::vector<Expr> parts;
    for (const auto& k : n.kids) parts.push_back(k.leaf);
    n.leaf = Expr::add(std::move(parts));
    n.keys.clear();
    n.kids.clear();
    return;
  }
  for (auto& k : n.kids) reduce_last(k, depth + 1, target);
}

struct LeafRef {
  std::vector<int> path;
  Expr value;
};

void leaves(const TNode& n, std::vector<int>& path, std::vector<LeafRef>& out) {
  if (n.kids.empty()) {
    out.push_back({path, n.leaf});
    return;
  }
  for (std::size_t i = 0; i < n.kids.size(); ++i) {
    path.push_back(n.keys[i]);
    leaves(n.kids[i], path, out);
    path.pop_back();
  }
}

class Evaluator {
 public:
  Evaluator(const ControlProblemSpec& spec, const NetworkSchema& schema, const InstancePool& pool)
      : spec_(spec), schema_(schema), pool_(pool) {}

  Tensor variable(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    const VariableDecl* v = spec_.variable(name);
    if (!v) throw ValidationError("unbound variable '" + name + "'");
    const Element& leaf = schema_.at(v->leaf());
    const Element& last_set = schema_.at(v->chain[v->chain.size() - 2]);
    if (last_set.virt->member_type != leaf.param->holder)
      throw ValidationError("'" + leaf.ref.id + "' is not an attribute of the members of '" + last_set.ref.id + "'");
    Tensor t{v->shape, build(*v, 0, -1)};
    cache_[name] = t;
    return t;
  }

  Tensor eval(const Expr& e) {
    switch (e.kind()) {
      case ExprKind::constant:
        return {{}, TNode{e, {}, {}}};
      case ExprKind::var_ref:
        return variable(e.key().name);
      case ExprKind::sum_over: {
        Tensor t = eval(e.child(0));
        if (t.dims.empty() || t.dims.back() != e.element())
          throw ValidationError("sum over '" + e.element() + "' does not match the operand's innermost set");
        reduce_last(t.root, 0, t.dims.size() - 1);
        t.dims.pop_back();
        return t;
      }
      case ExprKind::add:
      case ExprKind::product: {
        bool add = e.kind() == ExprKind::add;
        Tensor acc = eval(e.child(0));
        for (std::size_t i = 1; i < e.children().size(); ++i)
          acc = binary(acc, eval(e.child(i)),
                       [add](const Expr& a, const Expr& b) { return add ? a + b : a * b; });
        return acc;
      }
      case ExprKind::negate: {
        Tensor t = eval(e.child(0));
        return {t.dims, map_node(t.root, [](const Expr& x) { return -x; })};
      }
      case ExprKind::log: {
        Tensor t = eval(e.child(0));
        return {t.dims, map_node(t.root, [](const Expr& x) { return Expr::log(x); })};
      }
      case ExprKind::sqrt: {
        Tensor t = eval(e.child(0));
        return {t.dims, map_node(t.root, [](const Expr& x) { return Expr::sqrt(x); })};
      }
      case ExprKind::quotient:
        return binary(eval(e.child(0)), eval(e.child(1)), [](const Expr& a, const Expr& b) { return a / b; });
    }
    throw ValidationError("unsupported expression");
  }

 private:
  TNode build(const VariableDecl& v, std::size_t k, int entity) {
    if (k + 1 == v.chain.size()) return TNode{Expr::var(v.leaf(), entity), {}, {}};
    const std::string& elem = v.chain[k];
    const Instance* inst = k == 0 ? pool_.global(elem) : pool_.local(elem, entity);
    if (!inst)
      throw MissingInstance("no instance of '" + elem + "'" +
                            (k == 0 ? std::string() : " for owner " + std::to_string(entity)));
    const IndexSpec& spec = v.index[k];
    if (spec.kind == IndexSpec::Kind::fixed) {
      if (!std::binary_search(inst->members.begin(), inst->members.end(), spec.value))
        throw MissingInstance("index " + std::to_string(spec.value) + " is not a member of '" + elem + "'");
      return build(v, k + 1, spec.value);
    }
    TNode n;
    for (int m : inst->members) {
      n.keys.push_back(m);
      n.kids.push_back(build(v, k + 1, m));
    }
    return n;
  }

  const ControlProblemSpec& spec_;
  const NetworkSchema& schema_;
  const InstancePool& pool_;
  std::map<std::string, Tensor> cache_;
};

Expr deindex(const Expr& e, const std::function<bool(const VarKey&)>& own) {
  return substitute(e, [&](const VarKey& k) -> std::optional<Expr> {
    if (k.indexed() && own(k)) return Expr::var(k.name);
    return std::nullopt;
  });
}

bool product_of_atoms(const Expr& e) {
  switch (e.kind()) {
    case ExprKind::add:
      return false;
    case ExprKind::negate:
      return product_of_atoms(e.child(0));
    case ExprKind::product:
      return std::none_of(e.children().begin(), e.children().end(), [](const Expr& f) {
        return f.kind() == ExprKind::add || f.kind() == ExprKind::product || f.kind() == ExprKind::negate;
      });
    default:
      return true;
  }
}

}  // namespace

std::set<std::string> referenced_locals(const ControlProblemSpec& spec, const NetworkSchema& schema) {
  std::set<std::string> out;
  for (const auto& v : spec.variables)
    for (const auto& c : v.chain) {
      const Element& e = schema.at(c);
      if (e.is_virtual() && e.virt->scope == Scope::local) out.insert(e.ref.id);
    }
  return out;
}

std::vector<VarKey> instantiate_variable(const ControlProblemSpec& spec, const NetworkSchema& schema,
                                         const InstancePool& pool, const std::string& name) {
  Evaluator ev(spec, schema, pool);
  Tensor t = ev.variable(name);
  std::vector<LeafRef> ls;
  std::vector<int> path;
  leaves(t.root, path, ls);
  std::vector<VarKey> out;
  for (const auto& l : ls) out.push_back(l.value.key());
  return out;
}

Expr instantiate_scalar(const Expr& abstract, const ControlProblemSpec& spec, const NetworkSchema& schema,
                        const InstancePool& pool) {
  Evaluator ev(spec, schema, pool);
  Tensor t = ev.eval(abstract);
  if (!t.dims.empty()) throw ValidationError("expression is not scalar after instantiation");
  return t.root.leaf;
}

ProblemInstance instantiate_problem(const ControlProblemSpec& spec, const NetworkSchema& schema,
                                    const InstancePool& pool) {
  ProblemInstance inst;
  Evaluator ev(spec, schema, pool);

  Tensor u = ev.eval(spec.utility);
  if (!u.dims.empty()) throw ValidationError("utility must reduce to a scalar; wrap it in sum(...)");
  inst.utility = u.root.leaf;
  if (spec.sense == Sense::minimize) {
    inst.utility = -inst.utility;
    inst.negated = true;
  }

  // Decision parameters and their bounds.
  for (const auto& v : spec.variables)
    if (v.decision) inst.decision_params.insert(v.leaf());
  for (const auto& p : inst.decision_params) {
    const auto& info = *schema.at(p).param;
    Bounds b{info.lo, info.hi};
    for (const auto& v : spec.variables) {
      bool covers_all = v.leaf() == p && v.chain.size() == 2 && v.index[0].kind == IndexSpec::Kind::all;
      if (covers_all && v.bounds) {
        b = *v.bounds;
        break;
      }
    }
    inst.base_bounds[p] = b;
    const Instance* g = pool.global(schema.global_of(info.holder));
    if (!g) throw MissingInstance("no global instance for " + to_string(info.holder));
    for (int m : g->members) inst.bounds[VarKey{p, m}] = b;
  }
  for (const auto& v : spec.variables) {
    if (!v.decision || !v.bounds) continue;
    for (const auto& k : instantiate_variable(spec, schema, pool, v.name)) {
      Bounds& b = inst.bounds[k];
      b.lo = std::max(b.lo, v.bounds->lo);
      b.hi = std::min(b.hi, v.bounds->hi);
    }
  }

  auto is_decision_symbol = [&](const Expr& e) {
    return e.kind() == ExprKind::var_ref && inst.decision_params.count(e.key().name);
  };

  int dual_family = 0;
  for (std::size_t f = 0; f < spec.constraints.size(); ++f) {
    const Constraint& c = spec.constraints[f];
    Tensor l = ev.eval(c.lhs);
    Tensor r = ev.eval(c.rhs);
    Tensor both = binary(l, r, [](const Expr& a, const Expr& b) { return a - b; });
    std::vector<int> path;
    std::vector<LeafRef> lhs_leaves, rhs_leaves;
    // Broadcast both sides onto the joint shape before pairing leaves.
    Tensor zeros{both.dims, map_node(both.root, [](const Expr&) { return Expr::constant(0.0); })};
    auto first = [](const Expr& a, const Expr&) { return a; };
    Tensor lb = binary(l, zeros, first);
    Tensor rb = binary(r, zeros, first);
    leaves(lb.root, path, lhs_leaves);
    leaves(rb.root, path, rhs_leaves);

    Rel rel = c.rel;
    if (rel == Rel::lt || rel == Rel::gt)
      inst.notes.push_back("constraint " + std::to_string(f) + ": strict '" + to_string(rel) +
                           "' compiled as non-strict");
    bool flip = rel == Rel::ge || rel == Rel::gt;
    Rel norm = rel == Rel::eq ? Rel::eq : Rel::le;

    // A family whose every instance bounds one decision symbol by a
    // constant narrows variable bounds instead of being dualized.
    bool box = norm == Rel::le;
    for (std::size_t i = 0; i < lhs_leaves.size() && box; ++i) {
      const Expr& a = lhs_leaves[i].value;
      const Expr& b = rhs_leaves[i].value;
      box = (is_decision_symbol(a) && b.is_constant()) || (is_decision_symbol(b) && a.is_constant());
    }
    if (box) {
      for (std::size_t i = 0; i < lhs_leaves.size(); ++i) {
        Expr a = lhs_leaves[i].value, b = rhs_leaves[i].value;
        if (flip) std::swap(a, b);  // now a <= b
        BoxBound bb{static_cast<int>(f), {}, {}, {}};
        if (a.kind() == ExprKind::var_ref) {
          bb.var = a.key();
          bb.hi = b.value();
        } else {
          bb.var = b.key();
          bb.lo = a.value();
        }
        Bounds& cur = inst.bounds[bb.var];
        if (bb.hi) cur.hi = std::min(cur.hi, *bb.hi);
        if (bb.lo) cur.lo = std::max(cur.lo, *bb.lo);
        // Overlapping design-time sets can over-constrain a symbol that no
        // runtime entity shares; the lifted overrides are applied per family.
        if (cur.lo > cur.hi)
          inst.notes.push_back("constraint " + std::to_string(f) + ": bounds of '" + bb.var.str() +
                               "' are empty in this instance");
        inst.boxes.push_back(bb);
      }
      inst.notes.push_back("constraint " + std::to_string(f) + ": folded into variable bounds");
      continue;
    }

    std::string symbol = dual_family == 0 ? std::string(kDualPrefix) : kDualPrefix + std::to_string(dual_family);
    ++dual_family;
    inst.dualized_families.insert(static_cast<int>(f));
    std::string set_element = both.dims.size() == 1 ? both.dims[0] : std::string();
    for (std::size_t i = 0; i < lhs_leaves.size(); ++i) {
      ConstraintInstance ci;
      ci.family = static_cast<int>(f);
      ci.index = both.dims.size() == 1 ? lhs_leaves[i].path[0] : static_cast<int>(i);
      ci.set_element = set_element;
      ci.lhs = flip ? rhs_leaves[i].value : lhs_leaves[i].value;
      ci.rhs = flip ? lhs_leaves[i].value : rhs_leaves[i].value;
      ci.rel = norm;
      ci.lambda = VarKey{symbol, ci.index};
      inst.constraints.push_back(std::move(ci));
    }
  }
  return inst;
}

Expr build_dual(const ProblemInstance& inst, std::vector<std::string>* notes) {
  std::vector<Expr> parts{inst.utility};
  for (const auto& c : inst.constraints) {
    if (c.rel == Rel::eq)
      throw UnsupportedConstraintSense("equality constraint " + std::to_string(c.family) +
                                       " cannot be dualized with a nonnegative multiplier");
    parts.push_back(Expr::var(c.lambda) * (c.rhs - c.lhs));
  }
  if (notes)
    for (const auto& n : inst.notes) notes->push_back(n);
  return expand(Expr::add(std::move(parts)));
}

Expr ExprTree::reassemble() const {
  std::vector<Expr> parts;
  for (const auto& l : level1) parts.push_back(l.dual_factor * l.primal_factor);
  return Expr::add(std::move(parts));
}

ExprTree build_tree(const Expr& dual) {
  ExprTree tree;
  tree.root = dual;
  std::vector<Expr> children;
  if (dual.kind() == ExprKind::add) children.assign(dual.children().begin(), dual.children().end());
  else if (!dual.is_constant(0.0)) children.push_back(dual);
  for (const auto& child : children) {
    if (!product_of_atoms(child)) throw NotNormalized("'" + child.str() + "' is not a product of atoms");
    auto terms = expand_terms(child);
    if (terms.size() != 1) throw NotNormalized("'" + child.str() + "' does not reduce to one term");
    const Term& t = terms.front();
    std::vector<Expr> duals{Expr::constant(t.coefficient)}, primals;
    for (const auto& f : t.factors) {
      if (f.kind() == ExprKind::var_ref && is_dual_name(f.key().name)) duals.push_back(f);
      else primals.push_back(f);
    }
    tree.level1.push_back(Level1{child, t.coefficient, Expr::product(duals), Expr::product(primals)});
  }
  return tree;
}

Classifier::Classifier(const ProblemInstance& inst, const NetworkSchema& schema) : inst_(inst), schema_(schema) {
  for (const auto& c : inst.constraints) duals_[c.lambda] = {c.family, &c};
  for (const auto& e : schema.elements()) {
    if (!e.is_parameter() || inst.decision_params.count(e.ref.id)) continue;
    for (const auto& in : schema.function_inputs(e.ref.id))
      if (inst.decision_params.count(in)) dependent_.insert(e.ref.id);
  }
}

bool Classifier::is_dual(const VarKey& k) const { return duals_.count(k) > 0; }

Classifier::Info Classifier::classify(const VarKey& k) const {
  Info info;
  auto d = duals_.find(k);
  if (d != duals_.end()) {
    info.role = Role::dual;
    info.family = d->second.first;
    return info;
  }
  const Element* e = schema_.find(k.name);
  if (!e || !e->is_parameter()) return info;
  bool decision = inst_.decision_params.count(k.name) > 0;
  if (!decision && !dependent_.count(k.name)) return info;
  info.role = decision ? Role::decision : Role::dependent;
  info.layer = e->ref.layer;
  if (k.indexed()) info.entity = Entity{e->param->holder, k.index};
  return info;
}

Expr Subproblem::expression() const {
  std::vector<Expr> parts;
  for (const auto& t : terms) parts.push_back(t.to_expr());
  return Expr::add(std::move(parts));
}

const Subproblem* LayerSplit::layer(Layer l) const {
  for (const auto& s : layers)
    if (s.layer == l) return &s;
  return nullptr;
}

LayerSplit decompose_cross_layer(const ExprTree& tree, const Classifier& cls) {
  std::map<Layer, Subproblem> groups;
  LayerSplit out;
  out.dual_group.layer = Layer::none;
  for (const auto& l1 : tree.level1) {
    Term t = expand_terms(l1.expr).front();
    std::set<Layer> layers;
    std::set<VarKey> vars, duals;
    for (const auto& k : collect_vars(l1.expr)) {
      auto info = cls.classify(k);
      if (info.role == Classifier::Role::dual) duals.insert(k);
      if (info.role == Classifier::Role::decision || info.role == Classifier::Role::dependent) {
        layers.insert(info.layer);
        vars.insert(k);
      }
    }
    if (layers.size() > 1)
      throw UnattributableTerm("'" + l1.expr.str() + "' involves variables of more than one layer");
    Subproblem& g = layers.empty() ? out.dual_group : groups[*layers.begin()];
    if (!layers.empty()) g.layer = *layers.begin();
    g.terms.push_back(t);
    g.variables.insert(vars.begin(), vars.end());
    g.duals.insert(duals.begin(), duals.end());
  }
  for (auto& [l, g] : groups) out.layers.push_back(std::move(g));
  return out;
}

std::vector<Subproblem> decompose_per_entity(const Subproblem& group, const Classifier& cls) {
  std::map<Entity, Subproblem> by;
  for (const auto& t : group.terms) {
    std::set<Entity> ents;
    std::set<VarKey> vars, duals;
    for (const auto& k : collect_vars(t.to_expr())) {
      auto info = cls.classify(k);
      if (info.role == Classifier::Role::dual) duals.insert(k);
      if ((info.role == Classifier::Role::decision || info.role == Classifier::Role::dependent)) {
        vars.insert(k);
        if (info.entity) ents.insert(*info.entity);
      }
    }
    if (ents.size() != 1)
      throw NonSeparable("'" + t.to_expr().str() + "' couples " + std::to_string(ents.size()) + " entities");
    Subproblem& s = by[*ents.begin()];
    s.layer = group.layer;
    s.entity = *ents.begin();
    s.terms.push_back(t);
    s.variables.insert(vars.begin(), vars.end());
    s.duals.insert(duals.begin(), duals.end());
  }
  std::vector<Subproblem> out;
  for (auto& [_, s] : by) out.push_back(std::move(s));
  return out;
}

std::string SetRef::str() const {
  switch (kind) {
    case Kind::self: return "self";
    case Kind::global: return element;
    case Kind::local: return owner_is_self ? element : element + "[" + std::to_string(owner) + "]";
  }
  return "?";
}

double StepSchedule::at(long k) const {
  if (k < 1) k = 1;
  if (kind == Kind::constant) return alpha0;
  long stage = (k + period - 1) / period;
  return alpha0 / static_cast<double>(stage);
}

std::string StepSchedule::str() const {
  std::ostringstream s;
  if (kind == Kind::constant) s << "constant(" << format_number(alpha0) << ")";
  else s << "diminishing(" << format_number(alpha0) << "," << period << ")";
  return s.str();
}

StepSchedule StepSchedule::parse(const std::string& text) {
  StepSchedule s;
  auto open = text.find('(');
  auto close = text.rfind(')');
  if (open == std::string::npos || close == std::string::npos || close < open)
    throw ValidationError("step schedule must look like constant(a) or diminishing(a0,K): '" + text + "'");
  std::string name = text.substr(0, open);
  std::string args = text.substr(open + 1, close - open - 1);
  std::vector<double> nums;
  std::stringstream ss(args);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      nums.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ValidationError("bad number in step schedule '" + text + "'");
    }
  }
  if (name == "constant" && nums.size() == 1) {
    s.kind = Kind::constant;
    s.alpha0 = nums[0];
  } else if (name == "diminishing" && (nums.size() == 1 || nums.size() == 2)) {
    s.kind = Kind::diminishing;
    s.alpha0 = nums[0];
    s.period = nums.size() == 2 ? static_cast<int>(nums[1]) : 1;
  } else {
    throw ValidationError("unknown step schedule '" + text + "'");
  }
  if (!(s.alpha0 > 0) || s.period < 1) throw ValidationError("step schedule needs alpha0 > 0 and K >= 1");
  return s;
}

const RoleTemplate* AbstractProgram::role(EntityType t, Layer l) const {
  for (const auto& r : roles)
    if (r.entity_type == t && r.layer == l) return &r;
  return nullptr;
}

Expr to_parameter_form(const Expr& e, const ControlProblemSpec& spec) {
  return substitute(e, [&](const VarKey& k) -> std::optional<Expr> {
    const VariableDecl* v = spec.variable(k.name);
    if (!v) return std::nullopt;
    return Expr::var(v->leaf(), k.index);
  });
}

namespace {

class Matcher {
 public:
  Matcher(const InstancePool& pool, const NetworkSchema& schema) : pool_(pool), schema_(schema) {}

  // Finds the pool instance whose members equal `indices`, preferring one
  // owned by `owner` when given.
  std::optional<SetRef> match(const std::vector<int>& indices, EntityType member_type,
                              std::optional<Entity> owner) const {
    std::string member_g = schema_.global_of(member_type);
    std::vector<const Instance*> cands;
    for (const Instance* i : pool_.find_any(indices))
      if (pool_.member_global(i->element) == member_g) cands.push_back(i);
    if (owner) {
      std::string owner_g = schema_.global_of(owner->type);
      std::vector<const Instance*> own;
      for (const Instance* i : cands)
        if (i->owner == owner->index && pool_.owner_global(i->element) == owner_g) own.push_back(i);
      if (own.size() > 1) throw AmbiguousMatch(describe(indices) + " matches several instances owned by the entity");
      if (own.size() == 1) return SetRef{SetRef::Kind::local, own[0]->element, true, own[0]->owner};
    }
    if (cands.size() > 1) throw AmbiguousMatch(describe(indices) + " matches " + std::to_string(cands.size()) + " instances");
    if (cands.size() == 1) return SetRef{SetRef::Kind::local, cands[0]->element, false, cands[0]->owner};
    const Instance* g = pool_.global(member_g);
    if (g && g->members == indices) return SetRef{SetRef::Kind::global, member_g, false, -1};
    return std::nullopt;
  }

  static std::string describe(const std::vector<int>& s) {
    std::string out = "{";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "}";
  }

 private:
  const InstancePool& pool_;
  const NetworkSchema& schema_;
};

}  // namespace

AbstractProgram lift(const std::vector<Subproblem>& subs, const InstancePool& pool, const Classifier& cls,
                     const ControlProblemSpec& spec) {
  const NetworkSchema& schema = cls.schema();
  const ProblemInstance& inst = cls.instance();
  Matcher matcher(pool, schema);
  AbstractProgram prog;
  prog.sense = spec.sense;
  prog.base_bounds = inst.base_bounds;

  std::map<int, std::string> family_symbol;
  std::map<int, std::string> family_set;
  for (const auto& c : inst.constraints) {
    family_symbol[c.family] = c.lambda.name;
    family_set[c.family] = c.set_element;
  }

  // role key -> index in prog.roles
  std::map<std::tuple<EntityType, Layer, std::string>, std::size_t> seen;
  std::map<std::pair<EntityType, Layer>, int> variants;

  for (const auto& sub : subs) {
    if (!sub.entity) continue;
    const Entity ent = *sub.entity;
    auto own = [&](const VarKey& k) {
      auto info = cls.classify(k);
      return info.entity && *info.entity == ent;
    };

    RoleTemplate rt;
    rt.entity_type = ent.type;
    rt.layer = sub.layer;
    std::set<std::string> vars;
    for (const auto& k : sub.variables) {
      auto role = cls.classify(k).role;
      if (role == Classifier::Role::decision) vars.insert(k.name);
      // A dependent parameter is controlled through its decision inputs.
      if (role == Classifier::Role::dependent)
        for (const auto& in : schema.function_inputs(k.name))
          if (inst.decision_params.count(in)) vars.insert(in);
    }
    rt.variables.assign(vars.begin(), vars.end());

    // Group dual terms by (family, coefficient, primal monomial).
    struct Group {
      int family;
      double coef;
      Expr primal;
      std::vector<int> idx;
    };
    std::vector<Group> groups;
    std::map<std::tuple<int, double, std::string>, std::size_t> gindex;
    for (const auto& t : sub.terms) {
      std::vector<Expr> lam, rest;
      for (const auto& f : t.factors) {
        if (f.kind() == ExprKind::var_ref && cls.is_dual(f.key())) lam.push_back(f);
        else rest.push_back(f);
      }
      if (lam.empty()) {
        rt.own_terms.push_back(deindex(t.to_expr(), own));
        continue;
      }
      if (lam.size() > 1) throw NonSeparable("'" + t.to_expr().str() + "' multiplies several dual coefficients");
      int fam = cls.classify(lam[0].key()).family;
      Term pt{1.0, rest};
      auto key = std::make_tuple(fam, t.coefficient, pt.monomial_key());
      auto it = gindex.find(key);
      if (it == gindex.end()) {
        gindex[key] = groups.size();
        groups.push_back(Group{fam, t.coefficient, deindex(Expr::product(rest), own), {}});
        it = gindex.find(key);
      }
      groups[it->second].idx.push_back(lam[0].key().index);
    }

    std::vector<Expr> parts = rt.own_terms;
    for (auto& g : groups) {
      std::sort(g.idx.begin(), g.idx.end());
      const std::string& set_el = family_set[g.family];
      if (set_el.empty())
        throw NoMatchingInstance("constraint family " + std::to_string(g.family) + " has no indexing set");
      EntityType member_type = schema.at(set_el).virt->member_type;
      SetRef ref;
      if (g.idx.size() == 1 && g.idx[0] == ent.index && member_type == ent.type) {
        ref = SetRef{SetRef::Kind::self, {}, true, ent.index};
      } else {
        auto m = matcher.match(g.idx, member_type, ent);
        if (!m)
          throw NoMatchingInstance("dual set " + Matcher::describe(g.idx) + " of " + to_string(ent) +
                                   " matches no pool instance");
        ref = *m;
      }
      prog.matches.push_back(LiftMatch{ent, g.family, g.idx, ref});
      Expr lam = Expr::var(family_symbol[g.family]);
      Expr agg = ref.kind == SetRef::Kind::self ? lam : Expr::sum_over(ref.str(), lam);
      rt.dual_terms.push_back(LiftedDualTerm{g.family, g.coef, g.primal, ref});
      parts.push_back(Expr::product({Expr::constant(g.coef), g.primal, agg}));
    }
    rt.expression = Expr::add(parts);

    auto key = std::make_tuple(ent.type, sub.layer, rt.expression.str());
    auto it = seen.find(key);
    if (it != seen.end()) {
      prog.roles[it->second].entities.push_back(ent.index);
      continue;
    }
    int& n = variants[{ent.type, sub.layer}];
    ++n;
    rt.role = to_string(ent.type) + "@" + to_string(sub.layer) + (n > 1 ? "#" + std::to_string(n) : "");
    rt.entities.push_back(ent.index);
    seen[key] = prog.roles.size();
    prog.roles.push_back(std::move(rt));
  }

  StepSchedule step = StepSchedule::parse(spec.setting_text("step", "diminishing(0.05,10)"));
  for (int f : inst.dualized_families) {
    const Constraint& c = spec.constraints[static_cast<std::size_t>(f)];
    bool flip = c.rel == Rel::ge || c.rel == Rel::gt;
    Expr slack = flip ? c.rhs - c.lhs : c.lhs - c.rhs;
    DualUpdateFamily d;
    d.family = f;
    d.symbol = family_symbol[f];
    d.set_element = family_set[f];
    if (!d.set_element.empty()) d.entity_type = schema.at(d.set_element).virt->member_type;
    d.slack = to_parameter_form(slack, spec);
    d.step = step;
    prog.dual_updates.push_back(std::move(d));
  }

  // Bounds narrowed by a box constraint family or by bounds declared on a
  // partial variable are lifted to the set of entities they apply to.
  struct Narrowing {
    std::string param;
    Bounds bounds;
    std::vector<int> idx;
  };
  std::vector<Narrowing> narrowed;
  std::map<int, std::size_t> by_family;
  for (const auto& bb : inst.boxes) {
    auto it = by_family.find(bb.family);
    if (it == by_family.end()) {
      Bounds b = inst.base_bounds.at(bb.var.name);
      if (bb.lo) b.lo = std::max(b.lo, *bb.lo);
      if (bb.hi) b.hi = std::min(b.hi, *bb.hi);
      it = by_family.emplace(bb.family, narrowed.size()).first;
      narrowed.push_back({bb.var.name, b, {}});
    }
    narrowed[it->second].idx.push_back(bb.var.index);
  }
  for (const auto& v : spec.variables) {
    if (!v.decision || !v.bounds) continue;
    const Bounds& base = inst.base_bounds.at(v.leaf());
    if (*v.bounds == base) continue;
    Narrowing n{v.leaf(), Bounds{std::max(base.lo, v.bounds->lo), std::min(base.hi, v.bounds->hi)}, {}};
    for (const auto& k : instantiate_variable(spec, schema, pool, v.name)) n.idx.push_back(k.index);
    narrowed.push_back(std::move(n));
  }
  for (auto& n : narrowed) {
    std::sort(n.idx.begin(), n.idx.end());
    n.idx.erase(std::unique(n.idx.begin(), n.idx.end()), n.idx.end());
    BoundOverride o;
    o.param = n.param;
    o.bounds = n.bounds;
    EntityType holder = schema.at(n.param).param->holder;
    const Instance* all = pool.global(schema.global_of(holder));
    if (all && all->members == n.idx) {
      // Narrowing that covers every entity replaces the base bounds.
      prog.base_bounds[n.param] = n.bounds;
      continue;
    }
    if (n.idx.size() == 1) {
      o.entity = n.idx[0];
      o.set = SetRef{SetRef::Kind::self, {}, true, n.idx[0]};
    } else {
      auto m = matcher.match(n.idx, holder, std::nullopt);
      if (!m)
        throw NoMatchingInstance("bounds of '" + n.param + "' on " + Matcher::describe(n.idx) +
                                 " match no pool instance");
      o.set = *m;
    }
    prog.overrides.push_back(std::move(o));
  }
  return prog;
}

}  // namespace wnos
