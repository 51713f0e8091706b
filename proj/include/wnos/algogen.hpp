#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wnos/channel.hpp"
#include "wnos/decomposer.hpp"

namespace wnos {

enum class Method { closed_form_reciprocal, bound_projection, projected_gradient, best_response, dpl };
enum class PenaltyCase { case1_best_response, case2_gradient, case3_dpl };

std::string to_string(Method m);
std::string to_string(PenaltyCase c);
PenaltyCase parse_penalty_case(const std::string& text);

struct SolverPlan {
  std::string role;
  EntityType entity_type = EntityType::session;
  Layer layer = Layer::transport;
  Method method = Method::projected_gradient;
  StepSchedule step;            // schedule of the duals this plan reads
  std::string variable;         // de-indexed decision parameter
  Bounds bounds;                // base bounds; overrides narrow them per entity
  int iterations_per_tick = 1;
  double weight = 1.0;          // w of w*log(x) or a of a*x
  double gradient_step = 0.1;   // per iteration, in the solver's coordinates
  double damping = 0.5;         // fraction of the way to a best response
  bool high_sinr = false;       // physical solvers use log(SINR) in place of log(1 + SINR)
  Expr objective;               // lifted template
  Expr own_utility;             // template terms without dual coefficients
  std::vector<LiftedDualTerm> coupling;

  // entity=<role> method=<name> step=<schedule> bounds=<lo,hi>
  std::string str() const;
};

struct DualUpdateRule {
  int family = 0;
  std::string symbol;
  std::string set_element;
  Expr slack;
  StepSchedule step;
};

// Pattern match on the template shape. Settings read: "penalty"
// (gradient|best_response|dpl), "iterations", "gradient_step", "damping",
// "high_sinr".
SolverPlan synthesize_plan(const RoleTemplate& role, const AbstractProgram& program,
                           const std::map<std::string, SettingValue>& settings);
std::vector<SolverPlan> synthesize_plans(const AbstractProgram& program,
                                         const std::map<std::string, SettingValue>& settings);
std::vector<DualUpdateRule> dual_rules(const AbstractProgram& program);

// lambda' = max(0, lambda + alpha_k * slack). k >= 1.
double dual_update(double lambda, double slack, const StepSchedule& step, long k);

// Measurements a physical-layer plan needs about its own link.
struct PhysicalRegisters {
  ChannelModel model;
  double own_gain = 0.0;        // gain from own transmitter to own receiver
  double interference = 0.0;    // noise plus interference at own receiver (mW)
  double victim_price = 0.0;    // sum_k pi_k * G_jk from gradient reports
};

struct LocalState {
  // Sum of the received dual coefficients over each coupling term's set,
  // in plan.coupling order.
  std::vector<double> dual_sums;
  // Current values of de-indexed parameters; must contain plan.variable.
  std::map<std::string, double> registers;
  std::optional<PhysicalRegisters> physical;
};

// One tick of the plan's local solver. Returns the new value of
// plan.variable, always inside `bounds`. Throws MissingParameter.
double solve_local(const SolverPlan& plan, const LocalState& state, const Bounds& bounds);

// Local objective value at x, as maximized by the plan (physical plans use
// the linearized interference price of Case 3).
double local_objective(const SolverPlan& plan, const LocalState& state, double x);

// Price a victim link broadcasts so transmitters can form their share of
// the interference gradient: lambda * K/ln2 * SINR/((1+SINR) * D).
double victim_price_payload(const ChannelModel& m, double lambda, double sinr, double interference);

// Agent-local utility of a joint objective sum_j U_j.
struct AgentUtility {
  int agent = 0;
  Expr utility;
  std::vector<VarKey> variables;  // the agent's own strategy
};

struct PenalizedUtility {
  PenaltyCase which = PenaltyCase::case1_best_response;
  Expr individual;  // Theta_i
  Expr penalty;     // Gamma_i
};

// Case 1: (U_i, 0). Case 2: gradients of U_i and of the other agents'
// utilities times (x_i - x_i0). Case 3: U_i with the others frozen at x0
// plus the others' sensitivities times x_i. Throws NotDifferentiable.
PenalizedUtility penalize(PenaltyCase which, int agent, const std::vector<AgentUtility>& joint,
                          const std::map<VarKey, double>& reference);

// Maximizes f on [lo, hi] by golden-section search.
double golden_section_max(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-9);

}  // namespace wnos
