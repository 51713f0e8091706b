#include <doctest.h>

#include "support.hpp"
#include "wnos/dsl.hpp"
#include "wnos/errors.hpp"
#include "wnos/pipeline.hpp"

using namespace wnos;

namespace {

const char* kBase = R"(nt.make_var('wos_x', [ntses, sesrate])
nt.make_var('wos_y', [ntlk, lkses, sesrate], [all, all, None])
nt.make_var('wos_c', [ntlk, lkcap])
)";

}  // namespace

TEST_CASE("bundled programs parse") {
  for (const char* f : {"toy", "jocp", "cp1", "cp2", "cp3", "cp4", "powermin"}) {
    CAPTURE(f);
    ControlProblemSpec spec = load_program(source_path(std::string("programs/") + f + ".wnos"));
    CHECK_FALSE(spec.constraints.empty());
  }
}

TEST_CASE("toy program settings and sense") {
  auto spec = load_program(source_path("programs/toy.wnos"));
  CHECK(spec.sense == Sense::maximize);
  CHECK(spec.setting_number("n_global", 0) == 3);
  CHECK(spec.setting_number("n_local", 0) == 2);
  CHECK(spec.variables.size() == 4);
}

TEST_CASE("print and parse round trip") {
  for (const char* f : {"toy", "cp3", "cp4", "powermin"}) {
    CAPTURE(f);
    auto spec = load_program(source_path(std::string("programs/") + f + ".wnos"));
    CHECK(parse_program(print_program(spec)) == spec);
  }
}

TEST_CASE("syntax errors carry the line") {
  std::string text = std::string(kBase) + "expr = mkexpr('sum(log(wos_x))', 'wos_x'\n";
  try {
    parse_program(text);
    FAIL("no error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }
  CHECK_THROWS_AS(parse_program("nt.make_var('a', [ntses, sesrate]) $"), ParseError);
  CHECK_THROWS_AS(parse_program("foo.bar()"), ParseError);
}

TEST_CASE("linear utility without bounds is rejected") {
  std::string text = std::string(kBase) +
                     "expr = mkexpr('sum(wos_x)', 'wos_x')\n"
                     "nt.add_cstr('sum(wos_y) <= wos_c', 'wos_y, wos_c')\n"
                     "nt.objective(max, expr)\n";
  CHECK_THROWS_AS(parse_program(text), ValidationError);
}

TEST_CASE("unknown elements and undeclared names") {
  CHECK_THROWS(parse_program("nt.make_var('a', [ntfoo, sesrate])\n"));
  std::string text = std::string(kBase) + "expr = mkexpr('sum(log(wos_q))', 'wos_q')\nnt.objective(max, expr)\n";
  CHECK_THROWS_AS(parse_program(text), ValidationError);
}

TEST_CASE("equality constraints are refused by decomposition") {
  std::string text = std::string(kBase) +
                     "expr = mkexpr('sum(log(wos_x))', 'wos_x')\n"
                     "nt.add_cstr('sum(wos_y) == wos_c', 'wos_y, wos_c')\n"
                     "nt.objective(max, expr)\n";
  CHECK_THROWS_AS(compile_text(text), UnsupportedConstraintSense);
}
