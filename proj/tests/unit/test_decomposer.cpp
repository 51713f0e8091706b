#include <doctest.h>

#include <algorithm>

#include "support.hpp"
#include "wnos/errors.hpp"
#include "wnos/pipeline.hpp"

using namespace wnos;

namespace {

Expr v(const std::string& n, int i) { return Expr::var(n, i); }

// Sum of the expressions of a list of subproblems.
Expr total(const std::vector<Subproblem>& subs) {
  std::vector<Expr> parts;
  for (const auto& s : subs) parts.push_back(s.expression());
  return Expr::add(parts);
}

}  // namespace

TEST_CASE("toy dual function") {
  Compiled c = compile_file(source_path("programs/toy.wnos"));
  // Links own sessions {0,1}, {0,2}, {1,2}.
  const int sets[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  std::vector<Expr> parts{v("sesrate", 0), v("sesrate", 1), v("sesrate", 2)};
  for (int l = 0; l < 3; ++l) {
    Expr slack = v("lnkcap", l) - (v("sesrate", sets[l][0]) + v("sesrate", sets[l][1]));
    parts.push_back(v("lbd", l) * slack);
  }
  CHECK(canonically_equal(c.dual, Expr::add(parts)));
  CHECK(c.tree.level1.size() == 12);
}

TEST_CASE("tree, layers and entities partition the dual") {
  const NetworkSchema schema = build_default_schema();
  for (const char* prog : {"toy", "jocp", "cp1", "cp3", "cp4", "powermin"}) {
    for (std::uint64_t seed : {1, 2, 3}) {
      CAPTURE(prog);
      CAPTURE(seed);
      Compiled c = compile_file(source_path(std::string("programs/") + prog + ".wnos"), seed);
      CHECK(canonically_equal(c.tree.reassemble(), c.dual));
      std::vector<Expr> layer_parts;
      for (const auto& l : c.split.layers) layer_parts.push_back(l.expression());
      layer_parts.push_back(c.split.dual_group.expression());
      CHECK(canonically_equal(Expr::add(layer_parts), c.dual));
      std::vector<Subproblem> per_entity = c.subproblems;
      per_entity.push_back(c.split.dual_group);
      CHECK(canonically_equal(total(per_entity), c.dual));
      // Every entity subproblem only holds its own decision symbols.
      Classifier cls(c.instance, schema);
      for (const auto& s : c.subproblems) {
        REQUIRE(s.entity);
        for (const auto& var : s.variables) {
          auto info = cls.classify(var);
          if (info.role == Classifier::Role::decision) CHECK(info.entity == s.entity);
        }
      }
    }
  }
}

TEST_CASE("transport subproblems read the duals of their own path") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Compiled c = compile_file(source_path("programs/jocp.wnos"), seed);
    for (const auto& s : c.subproblems) {
      if (s.layer != Layer::transport) continue;
      std::vector<int> idx;
      for (const auto& d : s.duals) idx.push_back(d.index);
      std::sort(idx.begin(), idx.end());
      CHECK(idx == c.pool.local("seslnk", s.entity->index)->members);
    }
  }
}

TEST_CASE("lifting produces one template per role") {
  Compiled c = compile_file(source_path("programs/toy.wnos"));
  const RoleTemplate* t = c.program.role(EntityType::session, Layer::transport);
  REQUIRE(t);
  REQUIRE(t->dual_terms.size() == 1);
  CHECK(t->dual_terms[0].set.kind == SetRef::Kind::local);
  CHECK(t->dual_terms[0].set.element == "seslnk");
  CHECK(t->dual_terms[0].coefficient == -1.0);
  CHECK(t->entities == std::vector<int>{0, 1, 2});
  const RoleTemplate* p = c.program.role(EntityType::link, Layer::physical);
  REQUIRE(p);
  CHECK(p->dual_terms[0].set.kind == SetRef::Kind::self);
  REQUIRE(c.program.dual_updates.size() == 1);
  CHECK(c.program.dual_updates[0].set_element == "netlnk");
}

TEST_CASE("minimization is negated and box constraints become bounds") {
  Compiled c = compile_file(source_path("programs/powermin.wnos"));
  CHECK(c.instance.negated);
  CHECK(c.program.sense == Sense::minimize);
  Compiled cp3 = compile_file(source_path("programs/cp3.wnos"));
  CHECK_FALSE(cp3.instance.boxes.empty());
  CHECK_FALSE(cp3.program.overrides.empty());
}

TEST_CASE("step schedules") {
  StepSchedule d = StepSchedule::parse("diminishing(0.05,10)");
  CHECK(d.at(1) == doctest::Approx(0.05));
  CHECK(d.at(10) == doctest::Approx(0.05));
  CHECK(d.at(11) == doctest::Approx(0.025));
  CHECK(d.at(31) == doctest::Approx(0.0125));
  StepSchedule k = StepSchedule::parse("constant(0.5)");
  CHECK(k.at(1000) == 0.5);
  CHECK(StepSchedule::parse(d.str()) == d);
  CHECK_THROWS(StepSchedule::parse("sometimes(1)"));
}

TEST_CASE("equality constraints have no dual sign") {
  ProblemInstance inst;
  inst.utility = Expr::var("sesrate", 0);
  inst.constraints.push_back(
      ConstraintInstance{0, 0, "netlnk", Expr::var("sesrate", 0), Rel::eq, Expr::constant(1), VarKey{"lbd", 0}});
  CHECK_THROWS_AS(build_dual(inst), UnsupportedConstraintSense);
}

TEST_CASE("lifted program does not depend on the pool seed") {
  auto lifted = [](std::uint64_t seed) {
    std::string d = dump_compile(compile_file(source_path("programs/jocp.wnos"), seed));
    auto b = d.find("# lifted"), e = d.find("# dual-updates");
    return d.substr(b, e - b);
  };
  std::string first = lifted(1);
  for (std::uint64_t seed = 2; seed <= 10; ++seed) CHECK(lifted(seed) == first);
}
