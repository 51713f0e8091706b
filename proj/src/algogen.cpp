#include "wnos/algogen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "wnos/errors.hpp"

namespace wnos {

std::string to_string(Method m) {
  switch (m) {
    case Method::closed_form_reciprocal: return "closed_form_reciprocal";
    case Method::bound_projection: return "bound_projection";
    case Method::projected_gradient: return "projected_gradient";
    case Method::best_response: return "best_response";
    case Method::dpl: return "dpl";
  }
  return "?";
}

std::string to_string(PenaltyCase c) {
  switch (c) {
    case PenaltyCase::case1_best_response: return "best_response";
    case PenaltyCase::case2_gradient: return "gradient";
    case PenaltyCase::case3_dpl: return "dpl";
  }
  return "?";
}

PenaltyCase parse_penalty_case(const std::string& text) {
  if (text == "gradient" || text == "case2") return PenaltyCase::case2_gradient;
  if (text == "best_response" || text == "case1") return PenaltyCase::case1_best_response;
  if (text == "dpl" || text == "case3") return PenaltyCase::case3_dpl;
  throw ValidationError("penalty must be gradient, best_response or dpl, not '" + text + "'");
}

std::string SolverPlan::str() const {
  std::ostringstream s;
  s << "entity=" << role << " method=" << to_string(method) << " step=" << step.str()
    << " bounds=" << format_number(bounds.lo) << "," << format_number(bounds.hi);
  return s.str();
}

namespace {

double setting(const std::map<std::string, SettingValue>& s, const std::string& key, double fallback) {
  auto it = s.find(key);
  if (it == s.end()) return fallback;
  if (it->second.kind != SettingValue::Kind::number) throw ValidationError("setting '" + key + "' must be a number");
  return it->second.number;
}

std::string setting_text(const std::map<std::string, SettingValue>& s, const std::string& key,
                         const std::string& fallback) {
  auto it = s.find(key);
  if (it == s.end()) return fallback;
  if (it->second.kind != SettingValue::Kind::text) throw ValidationError("setting '" + key + "' must be a string");
  return it->second.text;
}

// The single factor of `e`, or nullopt when e is not c * atom.
std::optional<Term> single_term(const Expr& e) {
  auto terms = expand_terms(e);
  if (terms.size() != 1) return std::nullopt;
  return terms.front();
}

bool is_atom(const Term& t, const Expr& atom) { return t.factors.size() == 1 && t.factors[0] == atom; }

double lookup(const LocalState& st, const VarKey& k, const std::string& var, double x) {
  if (k.name == var) return x;
  auto it = st.registers.find(k.name);
  if (it == st.registers.end()) throw MissingParameter("register '" + k.str() + "' is not available");
  return it->second;
}

double eval_at(const Expr& e, const LocalState& st, const std::string& var, double x) {
  return evaluate(e, [&](const VarKey& k) -> std::optional<double> { return lookup(st, k, var, x); });
}

double clip(double x, const Bounds& b) { return std::clamp(x, b.lo, b.hi); }

double coupling_slope(const SolverPlan& plan, const LocalState& st) {
  double s = 0.0;
  for (std::size_t t = 0; t < plan.coupling.size(); ++t) s += plan.coupling[t].coefficient * st.dual_sums[t];
  return s;
}

void check_duals(const SolverPlan& plan, const LocalState& st) {
  if (st.dual_sums.size() != plan.coupling.size())
    throw MissingParameter("plan " + plan.role + " needs " + std::to_string(plan.coupling.size()) +
                           " dual sums, got " + std::to_string(st.dual_sums.size()));
  for (double d : st.dual_sums)
    if (!(d >= 0) || !std::isfinite(d)) throw MissingParameter("dual sums must be finite and nonnegative");
}

// Transport objective with every aggregate replaced by its received value.
Expr bound_objective(const SolverPlan& plan, const LocalState& st) {
  std::vector<Expr> parts{plan.own_utility};
  for (std::size_t t = 0; t < plan.coupling.size(); ++t)
    parts.push_back(Expr::constant(plan.coupling[t].coefficient * st.dual_sums[t]) * plan.coupling[t].primal);
  return Expr::add(std::move(parts));
}

const PhysicalRegisters& phys(const SolverPlan& plan, const LocalState& st) {
  if (!st.physical) throw MissingParameter("plan " + plan.role + " needs physical registers");
  return *st.physical;
}

double physical_value(const SolverPlan& plan, const LocalState& st, double p, bool with_price) {
  const auto& r = phys(plan, st);
  double c = capacity_from_sinr(r.model, p * r.own_gain / r.interference);
  double v = eval_at(plan.own_utility, st, plan.variable, p) + coupling_slope(plan, st) * c;
  if (with_price) v -= r.victim_price * p;
  return v;
}

// d/d(ln p) of the Case 2 linearization: own terms, own capacity, and the
// interference price collected from victims.
double physical_gradient(const SolverPlan& plan, const LocalState& st, double p) {
  const auto& r = phys(plan, st);
  double s = p * r.own_gain / r.interference;
  double k = r.model.packets_per_slot_factor() / std::numbers::ln2;
  double dc = r.model.high_snr_approx ? k : k * s / (1.0 + s);
  Expr d_own = derivative(plan.own_utility, VarKey{plan.variable});
  return p * eval_at(d_own, st, plan.variable, p) + coupling_slope(plan, st) * dc - p * r.victim_price;
}

}  // namespace

SolverPlan synthesize_plan(const RoleTemplate& role, const AbstractProgram& program,
                           const std::map<std::string, SettingValue>& settings) {
  SolverPlan plan;
  plan.role = role.role;
  plan.entity_type = role.entity_type;
  plan.layer = role.layer;
  plan.objective = role.expression;
  plan.own_utility = Expr::add(role.own_terms);
  plan.coupling = role.dual_terms;
  plan.step = program.dual_updates.empty() ? StepSchedule{} : program.dual_updates.front().step;
  plan.iterations_per_tick = static_cast<int>(setting(settings, "iterations", 1));
  plan.gradient_step = setting(settings, "gradient_step", 0.1);
  plan.damping = setting(settings, "damping", 0.5);
  plan.high_sinr = setting(settings, "high_sinr", 0) != 0;
  if (plan.iterations_per_tick < 1) throw ValidationError("iterations must be at least 1");
  if (!(plan.gradient_step > 0)) throw ValidationError("gradient_step must be positive");
  if (!(plan.damping > 0 && plan.damping <= 1)) throw ValidationError("damping must lie in (0, 1]");

  if (role.variables.size() != 1)
    throw NoApplicableMethod("role " + role.role + " controls " + std::to_string(role.variables.size()) +
                             " variables; local solvers handle exactly one");
  plan.variable = role.variables.front();
  auto b = program.base_bounds.find(plan.variable);
  if (b == program.base_bounds.end()) throw NoApplicableMethod("no bounds for '" + plan.variable + "'");
  plan.bounds = b->second;

  Expr x = Expr::var(plan.variable);
  try {
    (void)derivative(plan.own_utility, VarKey{plan.variable});
  } catch (const NotDifferentiable& e) {
    throw NoApplicableMethod("role " + role.role + ": " + e.what());
  }
  for (const auto& v : collect_vars(plan.own_utility))
    if (v.name != plan.variable && plan.layer == Layer::physical)
      throw NoApplicableMethod("physical role " + role.role + " has own terms in '" + v.str() + "'");

  if (plan.layer == Layer::physical) {
    for (const auto& c : plan.coupling)
      if (!(c.primal == Expr::var("lnkcap")) || c.set.kind != SetRef::Kind::self)
        throw NoApplicableMethod("physical role " + role.role + " couples through '" + c.primal.str() +
                                 "' over " + c.set.str() + "; only the own link capacity is supported");
    switch (parse_penalty_case(setting_text(settings, "penalty", "gradient"))) {
      case PenaltyCase::case1_best_response: plan.method = Method::best_response; break;
      case PenaltyCase::case2_gradient: plan.method = Method::projected_gradient; break;
      case PenaltyCase::case3_dpl: plan.method = Method::dpl; break;
    }
    return plan;
  }

  bool linear_coupling = std::all_of(plan.coupling.begin(), plan.coupling.end(),
                                     [&](const LiftedDualTerm& c) { return c.primal == x; });
  auto own = single_term(plan.own_utility);
  if (linear_coupling && own && own->coefficient > 0 && is_atom(*own, Expr::log(x))) {
    plan.method = Method::closed_form_reciprocal;
    plan.weight = own->coefficient;
  } else if (linear_coupling && plan.own_utility.is_constant()) {
    plan.method = Method::bound_projection;
    plan.weight = 0.0;
  } else if (linear_coupling && own && is_atom(*own, x)) {
    plan.method = Method::bound_projection;
    plan.weight = own->coefficient;
  } else {
    plan.method = Method::projected_gradient;
  }
  return plan;
}

std::vector<SolverPlan> synthesize_plans(const AbstractProgram& program,
                                         const std::map<std::string, SettingValue>& settings) {
  std::vector<SolverPlan> out;
  for (const auto& r : program.roles) out.push_back(synthesize_plan(r, program, settings));
  return out;
}

std::vector<DualUpdateRule> dual_rules(const AbstractProgram& program) {
  std::vector<DualUpdateRule> out;
  for (const auto& d : program.dual_updates) out.push_back({d.family, d.symbol, d.set_element, d.slack, d.step});
  return out;
}

double dual_update(double lambda, double slack, const StepSchedule& step, long k) {
  return std::max(0.0, lambda + step.at(k) * slack);
}

double victim_price_payload(const ChannelModel& m, double lambda, double sinr, double interference) {
  double k = m.packets_per_slot_factor() / std::numbers::ln2;
  double share = m.high_snr_approx ? 1.0 : sinr / (1.0 + sinr);
  return lambda * k * share / interference;
}

double local_objective(const SolverPlan& plan, const LocalState& st, double x) {
  check_duals(plan, st);
  if (plan.layer == Layer::physical) return physical_value(plan, st, x, true);
  return eval_at(bound_objective(plan, st), st, plan.variable, x);
}

double golden_section_max(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    } else {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    }
  }
  double mid = (a + b) / 2.0;
  // The interior search cannot land exactly on an endpoint optimum.
  double best = mid, fbest = f(mid);
  for (double e : {lo, hi}) {
    double fe = f(e);
    if (fe > fbest) {
      best = e;
      fbest = fe;
    }
  }
  return best;
}

double solve_local(const SolverPlan& plan, const LocalState& st, const Bounds& bounds) {
  check_duals(plan, st);
  auto cur = st.registers.find(plan.variable);
  if (cur == st.registers.end()) throw MissingParameter("register '" + plan.variable + "' is not available");
  double x = clip(cur->second, bounds);

  switch (plan.method) {
    case Method::closed_form_reciprocal: {
      double price = -coupling_slope(plan, st);
      if (price <= 0) return bounds.hi;
      return clip(plan.weight / price, bounds);
    }
    case Method::bound_projection: {
      double slope = plan.weight + coupling_slope(plan, st);
      return slope > 0 ? bounds.hi : bounds.lo;
    }
    case Method::projected_gradient: {
      if (plan.layer == Layer::physical) {
        for (int i = 0; i < plan.iterations_per_tick; ++i) {
          double g = physical_gradient(plan, st, x);
          x = clip(std::exp(std::log(x) + plan.gradient_step * std::clamp(g, -1.0, 1.0)), bounds);
        }
        return x;
      }
      Expr d = derivative(bound_objective(plan, st), VarKey{plan.variable});
      for (int i = 0; i < plan.iterations_per_tick; ++i) {
        double g = eval_at(d, st, plan.variable, x);
        x = clip(x + plan.gradient_step * std::clamp(g, -1.0, 1.0), bounds);
      }
      return x;
    }
    case Method::best_response:
    case Method::dpl: {
      bool price = plan.method == Method::dpl;
      double lo = std::log(bounds.lo), hi = std::log(bounds.hi);
      double y_star = golden_section_max(
          [&](double y) { return physical_value(plan, st, std::exp(y), price); }, lo, hi, 1e-6);
      double y = std::log(x);
      return clip(std::exp(y + plan.damping * (y_star - y)), bounds);
    }
  }
  return x;
}

PenalizedUtility penalize(PenaltyCase which, int agent, const std::vector<AgentUtility>& joint,
                          const std::map<VarKey, double>& x0) {
  const AgentUtility* self = nullptr;
  for (const auto& a : joint)
    if (a.agent == agent) self = &a;
  if (!self) throw MissingParameter("agent " + std::to_string(agent) + " has no utility");

  PenalizedUtility out;
  out.which = which;
  if (which == PenaltyCase::case1_best_response) {
    out.individual = self->utility;
    return out;
  }

  auto at_ref = [&](const Expr& e) { return evaluate(e, x0); };
  auto ref = [&](const VarKey& v) {
    auto it = x0.find(v);
    if (it == x0.end()) throw MissingParameter("reference point lacks '" + v.str() + "'");
    return it->second;
  };
  // Sum over the other agents of dU_j/dv at x0, times `factor(v)`.
  auto others = [&](const std::function<Expr(const VarKey&)>& factor) {
    std::vector<Expr> parts;
    for (const auto& a : joint) {
      if (a.agent == agent) continue;
      for (const auto& v : self->variables)
        parts.push_back(Expr::constant(at_ref(derivative(a.utility, v))) * factor(v));
    }
    return Expr::add(std::move(parts));
  };

  if (which == PenaltyCase::case2_gradient) {
    auto delta = [&](const VarKey& v) { return Expr::var(v) - Expr::constant(ref(v)); };
    std::vector<Expr> own;
    for (const auto& v : self->variables) own.push_back(Expr::constant(at_ref(derivative(self->utility, v))) * delta(v));
    out.individual = Expr::add(std::move(own));
    out.penalty = others(delta);
    return out;
  }

  std::set<VarKey> mine(self->variables.begin(), self->variables.end());
  out.individual = substitute(self->utility, [&](const VarKey& k) -> std::optional<Expr> {
    if (mine.count(k)) return std::nullopt;
    return Expr::constant(ref(k));
  });
  out.penalty = others([](const VarKey& v) { return Expr::var(v); });
  return out;
}

}  // namespace wnos
