#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wnos/algogen.hpp"
#include "wnos/decomposer.hpp"
#include "wnos/dsl.hpp"
#include "wnos/instantiation.hpp"

namespace wnos {

// Everything produced by compiling one program, stage by stage.
struct Compiled {
  ControlProblemSpec spec;
  DIConfig config;
  InstancePool pool;
  ProblemInstance instance;
  Expr dual;
  ExprTree tree;
  LayerSplit split;
  std::vector<Subproblem> subproblems;  // per entity, all layers
  AbstractProgram program;
  std::vector<SolverPlan> plans;
  std::vector<DualUpdateRule> duals;
  std::vector<std::string> notes;
};

// Pool configuration from the program's settings (n_global, n_local, seed,
// max_resample, pin.<element>). `seed` overrides the setting.
DIConfig di_config(const ControlProblemSpec& spec, std::optional<std::uint64_t> seed = std::nullopt);
Pins pins_of(const ControlProblemSpec& spec, const NetworkSchema& schema);

Compiled compile(const ControlProblemSpec& spec, const NetworkSchema& schema,
                 std::optional<std::uint64_t> seed = std::nullopt);
Compiled compile_text(const std::string& text, std::optional<std::uint64_t> seed = std::nullopt);
Compiled compile_file(const std::string& path, std::optional<std::uint64_t> seed = std::nullopt);

// Sections: # dual, # tree, # layers, # subproblems, # lifted,
// # dual-updates, # bounds.
std::string dump_compile(const Compiled& c);
std::string dump_plans(const Compiled& c);
// Instantiation tables, element graph and tree levels.
std::string dump_inspect(const Compiled& c, const NetworkSchema& schema);

}  // namespace wnos
