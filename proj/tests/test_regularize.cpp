#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "oscint/regularize.hpp"

using namespace oscint;

namespace {

const fixture::PhaseCase& find(const std::string& name) {
  static const auto cases = fixture::valid_phases();
  for (const auto& c : cases) {
    if (c.name == name) return c;
  }
  throw std::out_of_range(name);
}

double cabs_growth(const CExpr& e, const Dims& d, const ScanConfig& cfg) {
  return estimate_growth(std::vector<Expr>{e.re, e.im}, d, cfg).slope;
}

std::complex<double> ceval(const CExpr& e, std::span<const double> x, std::span<const double> t) {
  return {eval(e.re, x, t), eval(e.im, x, t)};
}

}  // namespace

TEST_SUITE("regularize") {
  TEST_CASE("linear phase coefficients in closed form") {
    const PhaseFn p = fixture::validated(find("linear"));
    const Reducer R = build_reducer(p);
    REQUIRE(R.a.size() == 1);
    REQUIRE(R.b.size() == 1);
    std::mt19937_64 rng(1);
    for (int k = 0; k < 50; ++k) {
      const double x = oracle::uniform_point(rng, 1, -2, 2)[0];
      const double t = (k % 2 ? 1 : -1) * (4 * p.chi.r1 + k);
      const double eta = t * t * (1 + x * x);
      const auto a = ceval(R.a[0], Vec{x}, Vec{t});
      const auto b = ceval(R.b[0], Vec{x}, Vec{t});
      CHECK(a.real() == doctest::Approx(0.0));
      CHECK(a.imag() == doctest::Approx(x / (1 + x * x)).epsilon(1e-12));
      CHECK(b.real() == doctest::Approx(0.0));
      CHECK(b.imag() == doctest::Approx(t / eta).epsilon(1e-12));
    }
  }

  TEST_CASE("transpose identity holds to rounding") {
    for (const auto& c : fixture::valid_phases()) {
      INFO(c.name);
      const PhaseFn p = fixture::validated(c);
      CHECK(verify_transpose_identity(build_reducer(p), p, 1000) <= 1e-9);
    }
  }

  TEST_CASE("inside the cutoff plateau the operator is the identity") {
    for (const auto& c : fixture::valid_phases()) {
      const PhaseFn p = fixture::validated(c);
      const Reducer R = build_reducer(p);
      std::mt19937_64 rng(8);
      for (int k = 0; k < 50; ++k) {
        auto x = oracle::uniform_point(rng, c.dims.n, -c.box, c.box);
        auto t = oracle::uniform_point(rng, c.dims.s, -1, 1);
        const double r = std::sqrt(std::inner_product(t.begin(), t.end(), t.begin(), 0.0));
        for (auto& v : t) v *= 0.9 * p.chi.r0 * std::abs(std::sin(k + 1.0)) / r;
        for (const auto& a : R.a) REQUIRE(ceval(a, x, t) == std::complex<double>(0, 0));
        for (const auto& b : R.b) REQUIRE(ceval(b, x, t) == std::complex<double>(0, 0));
        REQUIRE(ceval(R.c, x, t) == std::complex<double>(1, 0));
      }
    }
  }

  TEST_CASE("dropping the cutoff term is detected") {
    const PhaseFn p = fixture::validated(find("kg2pt"));
    Reducer R = build_reducer(p);
    R.c.re = constant(0);
    CHECK(verify_transpose_identity(R, p, 1000) > 0.5);
  }

  TEST_CASE("coefficient orders") {
    const auto& kc = find("kg2pt");
    const PhaseFn kg = fixture::validated(kc);
    const Reducer R = build_reducer(kg);
    const ScanConfig cfg = fixture::scan_on(kc);
    const double tol = 0.1;
    for (const auto& a : R.a) CHECK(cabs_growth(a, kc.dims, cfg) <= 0.0 + tol);
    for (const auto& b : R.b) CHECK(cabs_growth(b, kc.dims, cfg) <= -1.0 + tol);
    CHECK(cabs_growth(R.c, kc.dims, cfg) <= -1.0 + tol);

    const auto& mc = find("moyal-euclid");
    const PhaseFn moyal = fixture::validated(mc);
    const Reducer M = build_reducer(moyal);
    for (const auto& a : M.a) CHECK(cabs_growth(a, mc.dims, fixture::scan_on(mc)) <= -1.0 + tol);
    for (const auto& b : M.b) CHECK(cabs_growth(b, mc.dims, fixture::scan_on(mc)) <= -2.0 + tol);
  }

  TEST_CASE("applying the operator lowers the order and is linear") {
    const auto& kc = find("kg2pt");
    const PhaseFn kg = fixture::validated(kc);
    const Reducer R = build_reducer(kg);
    const ScanConfig cfg = fixture::scan_on(kc);

    SymbolFn zero{CExpr(constant(0)), kc.dims, 0.0};
    CHECK(apply_reducer(R, zero).expr.is_zero());

    SymbolFn u{CExpr(build_bump(Axis::X, {0, 0, 0, 0}, 0.5, 1).expr), kc.dims, 0.0};
    const SymbolFn vu = apply_reducer(R, u, &cfg);
    CHECK(vu.order <= -1.0 + 0.1);
    CHECK(apply_reducer(R, u).order == -1.0);

    SymbolFn w{CExpr(parse("cos(x2)*t1/sqrt(1+t1^2)", kc.dims), parse("x3", kc.dims)), kc.dims, 0.0};
    SymbolFn sum{u.expr + w.expr, kc.dims, 0.0};
    const SymbolFn vw = apply_reducer(R, w), vs = apply_reducer(R, sum), v1 = apply_reducer(R, u);
    std::mt19937_64 rng(12);
    for (int k = 0; k < 100; ++k) {
      auto x = oracle::uniform_point(rng, 4, -1, 1);
      auto t = oracle::uniform_point(rng, 3, -20, 20);
      const auto lhs = ceval(vs.expr, x, t), rhs = ceval(v1.expr, x, t) + ceval(vw.expr, x, t);
      REQUIRE(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));
    }
  }

  TEST_CASE("simplification of twice-reduced amplitudes preserves values") {
    const auto& kc = find("kg2pt");
    const PhaseFn kg = fixture::validated(kc);
    const Reducer R = build_reducer(kg);
    const CExpr u = CExpr(build_bump(Axis::X, {0, 0, 0, 0}, 0.5, 1).expr) * CExpr(parse("1/(1+t1^2)", kc.dims));
    // Unsimplified V: a . grad_theta + b . grad_x + c, applied twice.
    auto V = [&](const CExpr& f) {
      CExpr out = R.c * f;
      for (int j = 0; j < kc.dims.s; ++j) out = out + R.a[j] * cdiff(f, Theta(j));
      for (int i = 0; i < kc.dims.n; ++i) out = out + R.b[i] * cdiff(f, X(i));
      return out;
    };
    const CExpr raw = V(V(u));
    const CExpr simp = csimplify(raw);
    CHECK(node_count(simp.re) <= node_count(raw.re));
    std::mt19937_64 rng(13);
    for (int k = 0; k < 100; ++k) {
      auto x = oracle::uniform_point(rng, 4, -1, 1);
      auto t = oracle::uniform_point(rng, 3, -20, 20);
      const auto a = ceval(raw, x, t), b = ceval(simp, x, t);
      REQUIRE(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)));
    }
  }

  TEST_CASE("swell cap is enforced") {
    const PhaseFn kg = fixture::validated(find("kg2pt"));
    Reducer R = build_reducer(kg);
    R.swell_cap = 10;
    SymbolFn u{CExpr(build_bump(Axis::X, {0, 0, 0, 0}, 0.5, 1).expr), kg.dims, 0.0};
    CHECK_THROWS_AS(apply_reducer(R, u), ExpressionSwell);
  }

  TEST_CASE("theta-only operator away from the critical set") {
    const auto& lc = find("linear");
    const PhaseFn lin = fixture::validated(lc);
    const ConicRegion away{Box({0.5}, {2.0})};
    const CutoffFn psi = choose_theta_bump(lin, away);
    const Reducer T = build_theta_reducer(lin, away, psi);
    CHECK(T.kind == Reducer::Kind::ThetaOnly);
    CHECK(verify_transpose_identity(T, lin, 1000) <= 1e-9);
    // Far out in theta, a = i x / x^2.
    const auto a = ceval(T.a[0], Vec{0.8}, Vec{4 * psi.r1});
    CHECK(a.imag() == doctest::Approx(1 / 0.8).epsilon(1e-12));

    CHECK_THROWS_AS(build_theta_reducer(lin, ConicRegion{Box({-0.5}, {0.5})}, psi), RegionTouchesCriticalSet);

    const PhaseFn kg = fixture::validated(find("kg2pt"));
    const ConicRegion off_cone{Box({2, 0.2, -0.2, -0.2}, {2.5, 0.6, 0.2, 0.2})};
    const Reducer Tk = build_theta_reducer(kg, off_cone, choose_theta_bump(kg, off_cone));
    CHECK(verify_transpose_identity(Tk, kg, 1000) <= 1e-9);
    const ConicRegion on_cone{Box({0.9, 0.9, -0.1, -0.1}, {1.1, 1.1, 0.1, 0.1})};
    CHECK_THROWS_AS(build_theta_reducer(kg, on_cone, choose_theta_bump(kg, off_cone)), RegionTouchesCriticalSet);
  }

  TEST_CASE("Fourier-adapted operator") {
    // x . theta in two dimensions: with theta confined to one ray, the
    // distance to k is bounded below by the angle between them.
    const Dims d(2, 2);
    ScanConfig sc;
    sc.box = Box::cube(2, -1, 1);
    const PhaseFn lin = validate_phase(parse("x1*t1 + x2*t2", d), d, 1.0, sc);
    const CutoffFn zeta = build_bump(Axis::X, {0, 0}, 0.25, 0.5);
    for (double beta : {0.5, 1.0, 1.5707963267948966, 2.5}) {
      FourierOptions o;
      o.theta_dirs = {{1.0, 0.0}};
      const FourierCheck fc = fourier_condition(lin, zeta, {std::cos(beta), std::sin(beta)}, o);
      CHECK(fc.min_ratio >= std::sin(beta / 2) - 1e-9);
      CHECK(fc.min_ratio >= 0.5 * std::sin(beta));
    }

    const PhaseFn kg = fixture::validated(find("kg2pt"));
    const CutoffFn z = build_bump(Axis::X, {1, 1, 0, 0}, 0.05, 0.1);
    CHECK_THROWS_AS(build_fourier_reducer(kg, z, kg.chi, {-1, 1, 0, 0}), ConeIntersectsSP);
    const Reducer Rk = build_fourier_reducer(kg, z, kg.chi, {1, 1, 0, 0});
    CHECK(Rk.kind == Reducer::Kind::FourierVk);
    CHECK(Rk.covector);
    CHECK(verify_transpose_identity(Rk, kg, 1000) <= 1e-9);
    // Off the window support the operator has no derivative part.
    const double x[4] = {0, 0, 0, 0}, t[3] = {100, 3, 0}, k[4] = {50, 50, 0, 0};
    for (const auto& b : Rk.b) {
      CHECK(eval(b.re, x, t, k) == 0.0);
      CHECK(eval(b.im, x, t, k) == 0.0);
    }
  }
}
