#include "doctest.h"

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "oscint/expr.hpp"
#include "oscint/tape.hpp"

using namespace oscint;

namespace {

std::vector<std::pair<std::string, Dims>> all_expressions() {
  std::vector<std::pair<std::string, Dims>> out;
  for (const auto& c : fixture::valid_phases()) out.emplace_back(c.text, c.dims);
  out.emplace_back(fixture::kMoyalHyper, Dims(2, 2));
  out.emplace_back("exp(-t1^2-t2^2-t3^2)*cos(x1*t2) + sin(x2)/(1+t1^2)", Dims(4, 3));
  return out;
}

std::vector<Var> all_vars(const Dims& d) {
  std::vector<Var> v;
  for (int i = 0; i < d.n; ++i) v.push_back(X(i));
  for (int j = 0; j < d.s; ++j) v.push_back(Theta(j));
  return v;
}

}  // namespace

TEST_SUITE("expr") {
  TEST_CASE("parse builds the expected trees") {
    const Dims d(1, 1);
    CHECK(parse("x1*t1", d) == mul({variable(X(0)), variable(Theta(0))}));
    CHECK(parse(" x1 *  t1 ", d) == parse("t1*x1", d));
    CHECK(format(parse("x1*t1", d)) == "x1*t1");
    CHECK(format(constant(3, 2)) == "3/2");
    CHECK(parse("3/2", d) == constant(3, 2));
    CHECK(parse("6/4", d) == constant(3, 2));
  }

  TEST_CASE("Klein-Gordon phase parses into the dispersion form") {
    const Dims d(4, 3);
    const Expr kg = parse(fixture::kKleinGordon, d);
    const Expr omega = sqrt(theta_norm2(3) + constant(1));
    const Expr built = -(variable(X(0)) * omega) + variable(X(1)) * variable(Theta(0)) +
                       variable(X(2)) * variable(Theta(1)) + variable(X(3)) * variable(Theta(2));
    CHECK(kg == built);
    const double x[4] = {0, 0, 0, 0};
    const double th[3] = {3.0, -1.0, 7.5};
    CHECK(eval(kg, x, th) == 0.0);
  }

  TEST_CASE("parse errors carry position and names") {
    CHECK_THROWS_AS(parse("x1*t5", Dims(1, 3)), UnknownVariable);
    try {
      parse("x1*+", Dims(1, 1));
      FAIL("expected a syntax error");
    } catch (const SyntaxError& e) {
      CHECK(e.position() == 3);
      CHECK_FALSE(e.expected().empty());
    }
    CHECK_THROWS_AS(parse("x1^1.5", Dims(1, 1)), SyntaxError);
    CHECK_THROWS_AS(parse("abs(x1)", Dims(1, 1)), Error);
    CHECK_THROWS_AS(parse("(x1", Dims(1, 1)), SyntaxError);
    CHECK_THROWS_AS(Dims(0, 1), Error);
  }

  TEST_CASE("eval and domain errors") {
    const Dims d(1, 1);
    const double x = 2, t = 3;
    CHECK(eval(parse("x1*t1", d), {&x, 1}, {&t, 1}) == 6.0);
    const double z = 0;
    try {
      eval(parse("sqrt(t1^2-1)", d), {&z, 1}, {&z, 1});
      FAIL("expected a domain error");
    } catch (const DomainError& e) {
      CHECK(e.value() == -1.0);
      CHECK(e.node().find("sqrt") != std::string::npos);
    }
    CHECK_THROWS_AS(eval(parse("1/x1", d), {&z, 1}, {&z, 1}), DomainError);
  }

  TEST_CASE("derivatives: closed forms") {
    const Dims d1(1, 1);
    CHECK(diff(parse("sqrt(t1^2+1)", d1), Theta(0)) == parse("t1/sqrt(t1^2+1)", d1));
    const Dims d(4, 3);
    CHECK(diff(parse(fixture::kKleinGordon, d), Theta(0)) == parse("-x1*t1/sqrt(t1^2+t2^2+t3^2+1) + x2", d));
    MultiIndex mi{{1, 0, 0, 0}, {2, 0, 0}};
    CHECK(diff(parse(fixture::kKleinGordon, d), mi) ==
          diff(diff(diff(parse(fixture::kKleinGordon, d), X(0)), Theta(0)), Theta(0)));
  }

  TEST_CASE("derivatives match central differences") {
    std::mt19937_64 rng(7);
    for (const auto& [text, d] : all_expressions()) {
      const Expr e = parse(text, d);
      for (const Var v : all_vars(d)) {
        const Expr de = diff(e, v);
        for (int k = 0; k < 100; ++k) {
          auto x = oracle::uniform_point(rng, d.n, -2, 2);
          auto th = oracle::uniform_point(rng, d.s, -3, 3);
          auto& slot = v.axis == Axis::X ? x[v.index] : th[v.index];
          const double at = slot;
          const double fd = oracle::central_difference(
              [&](double u) {
                slot = u;
                return eval(e, x, th);
              },
              at);
          slot = at;
          const double exact = eval(de, x, th);
          INFO(text << " d/" << (v.axis == Axis::X ? "x" : "t") << v.index + 1);
          REQUIRE(std::abs(exact - fd) <= 1e-6 * (1 + std::abs(fd)));
        }
      }
    }
  }

  TEST_CASE("mixed partials commute") {
    std::mt19937_64 rng(11);
    for (const auto& [text, d] : all_expressions()) {
      const Expr e = parse(text, d);
      for (int i = 0; i < d.n; ++i) {
        for (int j = 0; j < d.s; ++j) {
          const Expr a = diff(diff(e, X(i)), Theta(j));
          const Expr b = diff(diff(e, Theta(j)), X(i));
          for (int k = 0; k < 10; ++k) {
            auto x = oracle::uniform_point(rng, d.n, -2, 2);
            auto th = oracle::uniform_point(rng, d.s, -3, 3);
            const double va = eval(a, x, th), vb = eval(b, x, th);
            REQUIRE(std::abs(va - vb) <= 1e-12 * std::max(1.0, std::abs(va)));
          }
        }
      }
    }
  }

  TEST_CASE("format and parse round trip") {
    for (const auto& [text, d] : all_expressions()) {
      const Expr e = parse(text, d);
      CHECK(parse(format(e), d) == e);
      for (const Var v : all_vars(d)) {
        const Expr de = diff(e, v);
        CHECK(parse(format(de), d) == de);
      }
    }
    const Dims d(1, 1);
    for (const char* t : {"-x1", "x1 - (t1 - 1)", "(x1^2)^3", "1/(1/x1)", "-(-t1)^3", "x1/t1/2", "2^-1*x1"}) {
      INFO(t);
      Expr e;
      try {
        e = parse(t, d);
      } catch (const SyntaxError&) {
        continue;  // not every spelling is in the grammar
      }
      CHECK(parse(format(e), d) == e);
    }
  }

  TEST_CASE("simplify identities") {
    const Dims d(1, 1);
    CHECK(format(simplify(parse("0*t1 + x1", d))) == "x1");
    CHECK(simplify(parse("t1^2/t1^2", d)) == constant(1));
    CHECK(simplify(parse("x1 - x1", d)).is_zero());
    CHECK(simplify(parse("1*(x1+0)", d)) == variable(X(0)));
  }

  TEST_CASE("simplify preserves values and never grows") {
    std::mt19937_64 rng(3);
    for (const auto& [text, d] : all_expressions()) {
      for (const Var v : all_vars(d)) {
        const Expr e = diff(diff(parse(text, d), v), v);
        const Expr s = simplify(e);
        CHECK(node_count(s) <= node_count(e));
        for (int k = 0; k < 20; ++k) {
          auto x = oracle::uniform_point(rng, d.n, -2, 2);
          auto th = oracle::uniform_point(rng, d.s, -3, 3);
          const double a = eval(e, x, th), b = eval(s, x, th);
          REQUIRE(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)));
        }
      }
    }
  }

  TEST_CASE("hash-consing shares equal subtrees") {
    const Dims d(4, 3);
    const Expr a = parse(fixture::kKleinGordon, d);
    const Expr b = parse(fixture::kKleinGordon, d);
    CHECK(a.get() == b.get());
    std::vector<Expr> roots{a, diff(a, Theta(0)), diff(a, Theta(1))};
    CHECK(node_count(roots) < node_count(roots[0]) + node_count(roots[1]) + node_count(roots[2]));
  }

  TEST_CASE("tape agrees with tree evaluation") {
    std::mt19937_64 rng(5);
    for (const auto& [text, d] : all_expressions()) {
      const Expr e = parse(text, d);
      std::vector<Expr> outs{e, diff(e, Theta(0))};
      Tape tape(outs, d);
      std::vector<double> in, out(2 * 8);
      std::vector<std::vector<double>> pts;
      for (int k = 0; k < 8; ++k) {
        auto x = oracle::uniform_point(rng, d.n, -2, 2);
        auto th = oracle::uniform_point(rng, d.s, -3, 3);
        in.insert(in.end(), x.begin(), x.end());
        in.insert(in.end(), th.begin(), th.end());
        pts.push_back(x);
        pts.push_back(th);
      }
      tape.eval_batch(in, 8, out);
      for (int k = 0; k < 8; ++k) {
        CHECK(out[2 * k] == doctest::Approx(eval(outs[0], pts[2 * k], pts[2 * k + 1])).epsilon(1e-14));
        CHECK(out[2 * k + 1] == doctest::Approx(eval(outs[1], pts[2 * k], pts[2 * k + 1])).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("multi-index enumeration") {
    const auto idx = MultiIndex::up_to(Dims(1, 2), 2);
    CHECK(idx.size() == 10);  // C(3 + 2, 2)
    CHECK(idx.front().order() == 0);
    CHECK(idx.back().order() == 2);
  }
}
