#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "wnos/expression.hpp"
#include "wnos/instantiation.hpp"
#include "wnos/problem.hpp"
#include "wnos/schema.hpp"

namespace wnos {

struct Entity {
  EntityType type = EntityType::session;
  int index = 0;
  auto operator<=>(const Entity&) const = default;
};

std::string to_string(const Entity& e);

// One instantiated constraint, normalized to lhs <= rhs unless rel is eq.
struct ConstraintInstance {
  int family = 0;           // position in the spec's constraint list
  int index = 0;            // member index of `set_element`, else running count
  std::string set_element;  // set whose member owns this constraint; empty if none
  Expr lhs;
  Rel rel = Rel::le;
  Expr rhs;
  VarKey lambda;
};

// Bounds narrowed by a constraint on a single decision symbol.
struct BoxBound {
  int family = 0;
  VarKey var;
  std::optional<double> lo;
  std::optional<double> hi;
};

struct ProblemInstance {
  Expr utility;  // maximization form
  bool negated = false;
  std::vector<ConstraintInstance> constraints;  // dualized constraints
  std::vector<BoxBound> boxes;                  // folded into bounds
  std::map<VarKey, Bounds> bounds;              // every decision symbol
  std::map<std::string, Bounds> base_bounds;    // per decision parameter
  std::set<std::string> decision_params;
  std::set<int> dualized_families;
  std::vector<std::string> notes;
};

// Virtual elements referenced by a spec (chain hops that are local sets).
std::set<std::string> referenced_locals(const ControlProblemSpec& spec, const NetworkSchema& schema);

// Instantiates the DSL variable `name` against the pool and returns the
// symbols it denotes, in traversal order.
std::vector<VarKey> instantiate_variable(const ControlProblemSpec& spec, const NetworkSchema& schema,
                                         const InstancePool& pool, const std::string& name);

// Scalar instantiation of an abstract expression (all sums expanded).
Expr instantiate_scalar(const Expr& abstract, const ControlProblemSpec& spec, const NetworkSchema& schema,
                        const InstancePool& pool);

ProblemInstance instantiate_problem(const ControlProblemSpec& spec, const NetworkSchema& schema,
                                    const InstancePool& pool);

// L = utility + sum_j lbd_j (rhs_j - lhs_j), expanded into sum-of-products.
// Throws UnsupportedConstraintSense for equality constraints.
Expr build_dual(const ProblemInstance& inst, std::vector<std::string>* notes = nullptr);

struct Level1 {
  Expr expr;
  double coefficient = 1.0;
  Expr dual_factor;    // coefficient times the dual coefficients, or the coefficient alone
  Expr primal_factor;  // remaining factors, 1 when none
};

struct ExprTree {
  Expr root;
  std::vector<Level1> level1;

  Expr reassemble() const;
};

ExprTree build_tree(const Expr& dual);

// Attribution of symbols to layers and entities.
class Classifier {
 public:
  Classifier(const ProblemInstance& inst, const NetworkSchema& schema);

  enum class Role { dual, decision, dependent, constant };
  struct Info {
    Role role = Role::constant;
    Layer layer = Layer::none;
    std::optional<Entity> entity;
    int family = -1;  // dual coefficients only
  };

  Info classify(const VarKey& k) const;
  bool is_dual(const VarKey& k) const;
  const NetworkSchema& schema() const { return schema_; }
  const ProblemInstance& instance() const { return inst_; }

 private:
  const ProblemInstance& inst_;
  const NetworkSchema& schema_;
  std::map<VarKey, std::pair<int, const ConstraintInstance*>> duals_;
  std::set<std::string> dependent_;
};

struct Subproblem {
  Layer layer = Layer::none;  // none for the dual-update group
  std::optional<Entity> entity;
  std::vector<Term> terms;
  std::set<VarKey> variables;
  std::set<VarKey> duals;

  Expr expression() const;
};

struct LayerSplit {
  std::vector<Subproblem> layers;  // ordered by layer enum
  Subproblem dual_group;

  const Subproblem* layer(Layer l) const;
};

LayerSplit decompose_cross_layer(const ExprTree& tree, const Classifier& cls);
std::vector<Subproblem> decompose_per_entity(const Subproblem& layer_group, const Classifier& cls);

// Reference to a set of dual coefficients after lifting.
struct SetRef {
  enum class Kind { self, local, global };
  Kind kind = Kind::self;
  std::string element;  // local or global set name
  bool owner_is_self = true;
  int owner = -1;  // for a local set not owned by the entity itself

  std::string str() const;
  bool operator==(const SetRef&) const = default;
};

struct LiftedDualTerm {
  int family = 0;
  double coefficient = 0.0;
  Expr primal;  // de-indexed primal factor
  SetRef set;
};

struct LiftMatch {
  Entity entity;
  int family = 0;
  std::vector<int> indices;  // sorted dual coefficient indices
  SetRef set;
};

struct StepSchedule {
  enum class Kind { constant, diminishing };
  Kind kind = Kind::diminishing;
  double alpha0 = 0.05;
  int period = 10;

  // Step for iteration k >= 1: alpha0, or alpha0 / ceil(k / period).
  double at(long k) const;
  std::string str() const;
  static StepSchedule parse(const std::string& text);
  bool operator==(const StepSchedule&) const = default;
};

struct RoleTemplate {
  std::string role;  // e.g. session@transport
  EntityType entity_type = EntityType::session;
  Layer layer = Layer::transport;
  Expr expression;
  std::vector<Expr> own_terms;  // terms without dual coefficients
  std::vector<LiftedDualTerm> dual_terms;
  std::vector<std::string> variables;  // de-indexed decision parameters
  std::vector<int> entities;
};

struct DualUpdateFamily {
  int family = 0;
  std::string symbol;
  std::string set_element;
  EntityType entity_type = EntityType::link;
  Expr slack;  // abstract g - c in parameter names
  StepSchedule step;
};

struct BoundOverride {
  std::string param;
  SetRef set;             // set of entities the override applies to
  int entity = -1;        // single entity when no set matches
  Bounds bounds;
};

struct AbstractProgram {
  Sense sense = Sense::maximize;
  std::vector<RoleTemplate> roles;
  std::vector<DualUpdateFamily> dual_updates;
  std::map<std::string, Bounds> base_bounds;
  std::vector<BoundOverride> overrides;
  std::vector<LiftMatch> matches;

  const RoleTemplate* role(EntityType t, Layer l) const;
};

AbstractProgram lift(const std::vector<Subproblem>& subs, const InstancePool& pool, const Classifier& cls,
                     const ControlProblemSpec& spec);

// Replaces DSL variable names by their leaf parameter names.
Expr to_parameter_form(const Expr& e, const ControlProblemSpec& spec);

}  // namespace wnos
