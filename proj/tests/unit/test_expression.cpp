#include <doctest.h>

#include <cmath>

#include "wnos/errors.hpp"
#include "wnos/expression.hpp"
#include "wnos/rng.hpp"

using namespace wnos;

TEST_CASE("factories fold constants and flatten") {
  Expr x = Expr::var("x");
  CHECK(Expr::add({Expr::constant(1), Expr::constant(2)}).is_constant(3));
  CHECK(Expr::product({x, Expr::constant(1)}) == x);
  CHECK(Expr::add({x, Expr::constant(0)}) == x);
  CHECK(Expr::product({x, Expr::constant(0)}).is_constant(0));
  Expr nested = Expr::add({x, Expr::add({x, Expr::var("y")})});
  CHECK(nested.kind() == ExprKind::add);
  CHECK(nested.children().size() == 3);
}

TEST_CASE("canonical equality ignores order and distribution") {
  Expr a = Expr::var("a"), b = Expr::var("b"), c = Expr::var("c");
  CHECK(canonically_equal(a * (b + c), b * a + a * c));
  CHECK(canonically_equal(a - a, Expr::constant(0)));
  CHECK_FALSE(canonically_equal(a * b, a + b));
}

TEST_CASE("evaluate and missing symbols") {
  Expr e = Expr::log(Expr::var("x", 0)) + Expr::constant(2) * Expr::var("y");
  std::map<VarKey, double> v{{VarKey{"x", 0}, std::exp(1.0)}, {VarKey{"y"}, 3.0}};
  CHECK(evaluate(e, v) == doctest::Approx(7.0));
  v.erase(VarKey{"y"});
  CHECK_THROWS_AS(evaluate(e, v), MissingParameter);
}

TEST_CASE("indexed symbols print with two digits") {
  CHECK(VarKey{"lbd", 3}.str() == "lbd_03");
  CHECK(VarKey{"sesrate", 12}.str() == "sesrate_12");
  CHECK(VarKey{"sesrate"}.str() == "sesrate");
}

TEST_CASE("derivative of sum_over is refused") {
  Expr s = Expr::sum_over("seslnk", Expr::var("lbd"));
  CHECK_THROWS_AS(derivative(s, VarKey{"lbd"}), NotDifferentiable);
}

TEST_CASE("symbolic derivatives match central differences") {
  Rng rng(7);
  Expr x = Expr::var("x"), y = Expr::var("y");
  Expr f = Expr::log(Expr::constant(1) + x * y) + Expr::sqrt(x) * y - x / (Expr::constant(1) + y);
  Expr dfx = derivative(f, VarKey{"x"});
  for (int i = 0; i < 100; ++i) {
    double xv = rng.uniform(0.1, 5), yv = rng.uniform(0.1, 5), h = 1e-5;
    auto at = [&](double a) { return evaluate(f, std::map<VarKey, double>{{{"x"}, a}, {{"y"}, yv}}); };
    double fd = (at(xv + h) - at(xv - h)) / (2 * h);
    double sym = evaluate(dfx, std::map<VarKey, double>{{{"x"}, xv}, {{"y"}, yv}});
    CHECK(std::abs(fd - sym) <= 1e-6 * std::max(1.0, std::abs(sym)));
  }
}

TEST_CASE("expand merges like terms") {
  Expr a = Expr::var("a"), b = Expr::var("b");
  auto terms = expand_terms(a * (b + Expr::constant(1)) + a * b);
  REQUIRE(terms.size() == 2);
  double total = 0;
  for (const auto& t : terms) total += t.coefficient;
  CHECK(total == doctest::Approx(3.0));
}

TEST_CASE("substitute replaces symbols") {
  Expr e = Expr::var("lbd", 1) * Expr::var("sesrate", 0);
  Expr s = substitute(e, [](const VarKey& k) -> std::optional<Expr> {
    if (k.name == "lbd") return Expr::constant(2);
    return std::nullopt;
  });
  CHECK(canonically_equal(s, Expr::constant(2) * Expr::var("sesrate", 0)));
  CHECK(collect_vars(s).size() == 1);
}
