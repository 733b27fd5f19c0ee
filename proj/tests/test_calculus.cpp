#include "doctest.h"

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "oscint/calculus.hpp"

using namespace oscint;

namespace {

ScanConfig cube(int n, double h) {
  ScanConfig c;
  c.box = Box::cube(n, -h, h);
  return c;
}

}  // namespace

TEST_SUITE("calculus") {
  TEST_CASE("growth of explicit functions") {
    const Dims d(1, 3);
    const auto omega = estimate_growth(parse("sqrt(t1^2+t2^2+t3^2+1)", d), d, cube(1, 1));
    CHECK(omega.slope == doctest::Approx(1.0).epsilon(0.05));
    CHECK(omega.lambda_min < omega.lambda_max);
    CHECK(omega.residual >= 0);

    const auto one = estimate_growth(constant(1), d, cube(1, 1));
    CHECK(one.slope == 0.0);

    const Dims d4(4, 3);
    const auto kg = estimate_growth(parse(fixture::kKleinGordon, d4), d4, cube(4, 1));
    CHECK(kg.slope == doctest::Approx(1.0).epsilon(0.05));

    // Independent log-log regression of max |omega| over the same rungs.
    const Vec lambdas = Ladder{}.values();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (std::size_t i = lambdas.size() / 2; i < lambdas.size(); ++i, ++m) {
      const double lx = std::log(lambdas[i]), ly = 0.5 * std::log(lambdas[i] * lambdas[i] + 1);
      sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly;
    }
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    CHECK(omega.slope == doctest::Approx(slope).epsilon(1e-3));
  }

  TEST_CASE("growth errors") {
    const Dims d(1, 1);
    CHECK_THROWS_AS(estimate_growth(constant(0), d, cube(1, 1)), DegenerateFit);
  }

  TEST_CASE("symbol seminorm checks") {
    const Dims d(1, 3);
    CHECK(verify_symbol_order(constant(1), 0.0, 2, d, cube(1, 1)).ok);
    const Expr omega = parse("sqrt(t1^2+t2^2+t3^2+1)", d);
    CHECK(verify_symbol_order(omega, 1.0, 2, d, cube(1, 1)).ok);
    const auto bad = verify_symbol_order(omega, 0.5, 2, d, cube(1, 1));
    CHECK_FALSE(bad.ok);
    CHECK(bad.witness.index.order_theta() == 0);
    CHECK(verify_symbol_order(parse("exp(-t1^2-t2^2-t3^2)", d), -10.0, 2, d, cube(1, 1)).ok);
  }

  TEST_CASE("eta closed forms") {
    std::mt19937_64 rng(2);
    const Dims d(2, 2);
    const Expr lin = eta_expr(parse("x1*t1 + x2*t2", d), d);
    const Dims d4(4, 3);
    const Expr kg = eta_expr(parse(fixture::kKleinGordon, d4), d4);
    for (int k = 0; k < 100; ++k) {
      auto x = oracle::uniform_point(rng, 2, -2, 2);
      auto t = oracle::uniform_point(rng, 2, -5, 5);
      const double t2 = t[0] * t[0] + t[1] * t[1];
      CHECK(eval(lin, x, t) == doctest::Approx(t2 + t2 * (x[0] * x[0] + x[1] * x[1])));

      auto y = oracle::uniform_point(rng, 4, -2, 2);
      auto th = oracle::uniform_point(rng, 3, -5, 5);
      const double th2 = th[0] * th[0] + th[1] * th[1] + th[2] * th[2];
      const double w = std::sqrt(th2 + 1);
      double g2 = 0;
      for (int j = 0; j < 3; ++j) g2 += std::pow(-th[j] / w * y[0] + y[j + 1], 2);
      const double expect = (w * w + th2) + th2 * g2;
      CHECK(eval(kg, y, th) == doctest::Approx(expect).epsilon(1e-12));
      CHECK(eval(kg, y, th) >= 2 * th2 + 1 - 1e-9);
    }
  }

  TEST_CASE("eta is nonnegative for every phase") {
    std::mt19937_64 rng(4);
    auto cases = fixture::valid_phases();
    cases.push_back({"moyal-hyper", fixture::kMoyalHyper, Dims(2, 2), 2.0, 1.0});
    for (const auto& c : cases) {
      const Expr eta = eta_expr(parse(c.text, c.dims), c.dims);
      for (int k = 0; k < 1000; ++k) {
        auto x = oracle::uniform_point(rng, c.dims.n, -c.box, c.box);
        auto t = oracle::uniform_point(rng, c.dims.s, -50, 50);
        REQUIRE(eval(eta, x, t) >= 0.0);
      }
    }
  }

  TEST_CASE("phase validation verdicts") {
    for (const auto& c : fixture::valid_phases()) {
      INFO(c.name);
      const PhaseFn p = fixture::validated(c);
      CHECK(p.mu == c.mu);
      CHECK(p.cert.C > 0);
      CHECK(p.cert.D > 0);
      CHECK(p.cert.min_ratio >= p.cert.C);
      CHECK(p.chi.r0 < p.chi.r1);
      if (c.name == "kg2pt") CHECK(p.cert.C >= 1 - 0.05);
    }
    const Dims d(2, 2);
    try {
      validate_phase(parse(fixture::kMoyalHyper, d), d, 2.0, cube(2, 1));
      FAIL("hyperbolic Moyal phase must be rejected");
    } catch (const DegeneratePhase& e) {
      REQUIRE(e.direction().size() == 2);
      CHECK(e.direction()[0] * e.direction()[1] > 0);
      CHECK(e.ratios().size() == e.lambdas().size());
      CHECK(e.ratios().back() < e.ratios().front());
    }
    // Overclaimed order: x.theta is of order 1, not 2.
    const Dims d1(1, 1);
    CHECK_THROWS_AS(validate_phase(parse("x1*t1", d1), d1, 2.0, cube(1, 2)), Error);
  }

  TEST_CASE("cutoff profile") {
    const CutoffFn chi = build_cutoff(1.0, 3.0, 2);
    const double x[1] = {0};
    auto at = [&](double r) {
      const double t[2] = {r / std::sqrt(2.0), r / std::sqrt(2.0)};
      return chi(x, t);
    };
    CHECK(at(0.5) == 1.0);
    CHECK(at(6.0) == 0.0);
    CHECK(at(2.0) == doctest::Approx(0.5).epsilon(1e-12));
    for (double r = 0; r < 4; r += 0.01) {
      const double v = at(r);
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
      const double t[2] = {r, 0};
      REQUIRE(eval(chi.expr, x, t) + eval(chi.complement, x, t) == doctest::Approx(1.0).epsilon(1e-14));
    }
    CHECK_THROWS_AS(build_cutoff(2.0, 1.0, 2), BadRadii);
    CHECK_THROWS_AS(build_cutoff(0.0, 1.0, 2), BadRadii);
  }

  TEST_CASE("bump in x space") {
    const CutoffFn b = build_bump(Axis::X, {1.0, 0.0}, 0.5, 1.0);
    const double t[1] = {0};
    const double in[2] = {1.2, 0.1}, out[2] = {2.5, 0.0};
    CHECK(b(in, t) == 1.0);
    CHECK(b(out, t) == 0.0);
  }

  TEST_CASE("direction sets are unit and deterministic") {
    for (int s : {1, 2, 3, 4}) {
      const auto a = direction_set(s, 0, 9), b = direction_set(s, 0, 9);
      CHECK(a == b);
      CHECK(static_cast<int>(a.size()) == default_direction_count(s));
      for (const auto& v : a) {
        double n2 = 0;
        for (double c : v) n2 += c * c;
        REQUIRE(n2 == doctest::Approx(1.0).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("box grid") {
    const Box b = Box::cube(2, -1, 1);
    CHECK(b.grid(3).size() == 9);
    CHECK(b.grid(1) == std::vector<Vec>{{0.0, 0.0}});
    CHECK(b.contains(Vec{1.0, -1.0}));
    CHECK_FALSE(b.contains(Vec{1.1, 0.0}));
    CHECK_THROWS_AS(Box({1.0}, {0.0}), Error);
  }
}
