#include "wnos/pipeline.hpp"

#include <sstream>

#include "wnos/errors.hpp"

namespace wnos {

namespace {

int int_setting(const ControlProblemSpec& spec, const std::string& key, int fallback) {
  double v = spec.setting_number(key, fallback);
  if (v != static_cast<int>(v)) throw ValidationError("setting '" + key + "' must be an integer");
  return static_cast<int>(v);
}

std::string csv(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string bounds_str(const Bounds& b) { return "[" + format_number(b.lo) + "," + format_number(b.hi) + "]"; }

}  // namespace

DIConfig di_config(const ControlProblemSpec& spec, std::optional<std::uint64_t> seed) {
  DIConfig c;
  c.n_global = int_setting(spec, "n_global", c.n_global);
  c.n_local = int_setting(spec, "n_local", c.n_local);
  c.max_resample = int_setting(spec, "max_resample", c.max_resample);
  double s = spec.setting_number("seed", static_cast<double>(c.rng_seed));
  if (s < 0 || s != static_cast<double>(static_cast<std::uint64_t>(s)))
    throw ValidationError("setting 'seed' must be a non-negative integer");
  c.rng_seed = seed ? *seed : static_cast<std::uint64_t>(s);
  c.validate();
  return c;
}

Pins pins_of(const ControlProblemSpec& spec, const NetworkSchema& schema) {
  Pins pins;
  for (const auto& [key, value] : spec.settings) {
    if (key.rfind("pin.", 0) != 0) continue;
    std::string el = schema.canonical(key.substr(4));
    if (value.kind != SettingValue::Kind::list) throw ValidationError("setting '" + key + "' must be a list of lists");
    auto& rows = pins[el];
    for (const auto& row : value.list) {
      if (row.kind != SettingValue::Kind::list) throw ValidationError("setting '" + key + "' must be a list of lists");
      std::vector<int> members;
      for (const auto& m : row.list) {
        if (m.kind != SettingValue::Kind::number || m.number < 0 || m.number != static_cast<int>(m.number))
          throw ValidationError("setting '" + key + "' members must be non-negative integers");
        members.push_back(static_cast<int>(m.number));
      }
      std::sort(members.begin(), members.end());
      rows.push_back(std::move(members));
    }
  }
  return pins;
}

Compiled compile(const ControlProblemSpec& spec, const NetworkSchema& schema, std::optional<std::uint64_t> seed) {
  Compiled c;
  c.spec = spec;
  c.config = di_config(spec, seed);
  c.pool = build_pool(schema, referenced_locals(spec, schema), c.config, pins_of(spec, schema));
  c.instance = instantiate_problem(spec, schema, c.pool);
  c.notes = c.instance.notes;
  c.dual = build_dual(c.instance);
  c.tree = build_tree(c.dual);
  Classifier cls(c.instance, schema);
  c.split = decompose_cross_layer(c.tree, cls);
  for (const auto& layer : c.split.layers)
    for (auto& s : decompose_per_entity(layer, cls)) c.subproblems.push_back(std::move(s));
  c.program = lift(c.subproblems, c.pool, cls, spec);
  c.plans = synthesize_plans(c.program, spec.settings);
  c.duals = dual_rules(c.program);
  return c;
}

Compiled compile_text(const std::string& text, std::optional<std::uint64_t> seed) {
  static const NetworkSchema schema = build_default_schema();
  return compile(parse_program(text, schema), schema, seed);
}

Compiled compile_file(const std::string& path, std::optional<std::uint64_t> seed) {
  static const NetworkSchema schema = build_default_schema();
  return compile(load_program(path), schema, seed);
}

std::string dump_compile(const Compiled& c) {
  std::ostringstream o;
  o << "# dual\n" << c.dual.str() << "\n";

  o << "# tree\nroot: " << c.tree.root.str() << "\n";
  for (std::size_t i = 0; i < c.tree.level1.size(); ++i) {
    const auto& l = c.tree.level1[i];
    o << "level1[" << i << "]: " << l.expr.str() << " | dual=" << l.dual_factor.str()
      << " | primal=" << l.primal_factor.str() << "\n";
  }

  o << "# layers\n";
  for (const auto& g : c.split.layers) o << to_string(g.layer) << ": " << g.expression().str() << "\n";
  o << "dual-group: " << c.split.dual_group.expression().str() << "\n";

  o << "# subproblems\n";
  for (const auto& s : c.subproblems)
    o << to_string(s.layer) << " " << to_string(*s.entity) << ": " << s.expression().str() << "\n";

  o << "# lifted\n";
  for (const auto& r : c.program.roles) {
    std::vector<int> ents = r.entities;
    o << "role=" << r.role << " entities=" << csv(ents) << " template=" << r.expression.str() << "\n";
    for (const auto& t : r.dual_terms)
      o << "  family=" << t.family << " coef=" << format_number(t.coefficient) << " primal=" << t.primal.str()
        << " set=" << t.set.str() << "\n";
  }

  o << "# dual-updates\n";
  for (const auto& d : c.program.dual_updates)
    o << "family=" << d.family << " symbol=" << d.symbol << " set=" << d.set_element << " slack=" << d.slack.str()
      << " step=" << d.step.str() << "\n";

  o << "# bounds\n";
  for (const auto& [p, b] : c.program.base_bounds) o << p << " " << bounds_str(b) << "\n";
  for (const auto& ov : c.program.overrides)
    o << "override " << ov.param << " "
      << (ov.set.kind == SetRef::Kind::self ? "entity " + std::to_string(ov.entity) : ov.set.str()) << " "
      << bounds_str(ov.bounds) << "\n";

  if (!c.notes.empty()) {
    o << "# notes\n";
    for (const auto& n : c.notes) o << n << "\n";
  }
  return o.str();
}

std::string dump_plans(const Compiled& c) {
  std::ostringstream o;
  for (const auto& p : c.plans) o << p.str() << "\n";
  return o.str();
}

std::string dump_inspect(const Compiled& c, const NetworkSchema& schema) {
  std::ostringstream o;
  const auto& cfg = c.config;
  o << "# pool\n"
    << "n_global=" << cfg.n_global << " n_local=" << cfg.n_local << " seed=" << cfg.rng_seed
    << " capacity=C(" << cfg.n_global << "," << cfg.n_local
    << ")=" << binomial(static_cast<std::uint64_t>(cfg.n_global), static_cast<std::uint64_t>(cfg.n_local)) << "\n";
  for (const auto& el : c.pool.local_elements()) {
    const Element& e = schema.at(el);
    o << "# instances " << el << " (" << to_string(schema.at(*e.virt->owner).ref.entity_type) << " -> "
      << to_string(e.virt->member_type) << ")\n";
    o << "owner\tsize\tmembers\thash\n";
    for (const Instance* i : c.pool.locals(el))
      o << i->owner << "\t" << i->members.size() << "\t" << csv(i->members) << "\t" << hash_hex(i->hash)
        << (i->derived ? "\tderived" : "") << "\n";
  }
  o << "# element graph\n";
  for (const auto& edge : schema.edges())
    o << edge.src << " -" << to_string(edge.relation) << "-> " << edge.dst << "\n";
  o << "# tree levels\n";
  o << "level0: " << c.tree.root.str() << "\n";
  for (const auto& l : c.tree.level1)
    o << "level1: " << l.expr.str() << "\n  level2: " << l.dual_factor.str() << " * " << l.primal_factor.str()
      << "\n";
  return o.str();
}

}  // namespace wnos
