#include "doctest.h"

#include <cmath>
#include <numbers>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "oscint/quadrature.hpp"

using namespace oscint;
using cplx = std::complex<double>;

namespace {

const Dims kLine(1, 1);

PhaseFn linear_phase(const std::string& text = "x1*t1") {
  ScanConfig cfg;
  cfg.box = Box::cube(1, -2, 2);
  return validate_phase(parse(text, kLine), kLine, 1.0, cfg);
}

SymbolFn gauss() { return fixture::symbol("exp(-t1^2)", kLine, fixture::kMinusInf); }

// int bump(x) sqrt(pi) exp(-x^2/4) e^{-i k x} dx over the bump's support.
cplx gaussian_oracle(double k, double c = 0.0, double r = 1.0) {
  return oracle::simpson(
      [&](double x) { return oracle::bump(x, c, r) * oracle::gaussian_transform(x) * std::polar(1.0, -k * x); },
      c - r, c + r);
}

}  // namespace

TEST_SUITE("quadrature") {
  TEST_CASE("regularization depth") {
    CHECK(choose_p(0, 1, 3, SmoothnessTarget::Pairing) == 4);
    CHECK(choose_p(-10, 1, 3, SmoothnessTarget::Pairing) == 0);
    CHECK(choose_p(0, 2, 2, SmoothnessTarget::Pointwise) == -1);
    CHECK(choose_p(-5, 1, 1, SmoothnessTarget::Pointwise) == 3);
    CHECK(choose_p(fixture::kMinusInf, 1, 3, SmoothnessTarget::Pairing) == 0);
  }

  TEST_CASE("Gauss-Legendre integrates polynomials exactly") {
    std::vector<double> x, w;
    gauss_legendre(6, x, w);
    REQUIRE(x.size() == 6);
    for (int deg = 0; deg <= 11; ++deg) {
      double q = 0;
      for (int i = 0; i < 6; ++i) q += w[i] * std::pow(x[i], deg);
      CHECK(q == doctest::Approx(deg % 2 ? 0.0 : 2.0 / (deg + 1)).epsilon(1e-14));
    }
  }

  TEST_CASE("tail bound") {
    CHECK(tail_integral(-3, 1, 4) == doctest::Approx(2 * std::pow(5.0, -2) / 2).epsilon(1e-14));
    const double exact = 4 * std::numbers::pi * oracle::simpson([](double r) { return r * r * std::pow(1 + r, -6.0); },
                                                                 2.0, 2000.0, 200000);
    CHECK(tail_integral(-6, 3, 2) >= exact);
    CHECK(std::isinf(tail_integral(-3, 3, 2)));
    CHECK(tail_integral(fixture::kMinusInf, 3, 2) == 0.0);
  }

  TEST_CASE("test function transforms") {
    for (const auto& f : {TestFn::bump({0.3}, 1.0), TestFn::gaussian({-0.2}, 0.5, 2.0)}) {
      for (double q : {0.0, 1.0, 7.5}) {
        const cplx ref = oracle::simpson(
            [&](double x) {
              const double c = f.center[0];
              const double v = f.kind == TestFn::Kind::Bump
                                   ? f.amplitude * oracle::bump(x, c, f.radius)
                                   : f.amplitude * std::exp(-(x - c) * (x - c) / (2 * f.sigma() * f.sigma()));
              return v * std::polar(1.0, q * x);
            },
            f.center[0] - f.support_radius(), f.center[0] + f.support_radius());
        const double qq[1] = {q};
        CHECK(std::abs(f.transform(qq) - ref) <= 1e-9);
      }
    }
  }

  TEST_CASE("test function expressions follow their definitions") {
    const TestFn b = TestFn::bump({0.3}, 1.0, 2.0);
    const Expr e = b.expr();
    for (double x = -1.0; x <= 1.6; x += 0.05) {
      REQUIRE(eval(e, Vec{x}, Vec{0.0}) == doctest::Approx(2.0 * oracle::bump(x, 0.3, 1.0)).epsilon(1e-12));
    }
    CHECK(b.support_radius() == 1.0);
    const TestFn g = TestFn::gaussian({0.0, 0.0}, 0.6);
    CHECK(g.sigma() == doctest::Approx(0.1));
    CHECK(eval(g.expr(), Vec{0.1, 0.0}, Vec{0.0}) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  }

  TEST_CASE("Gaussian amplitude pairs like its transform") {
    const PhaseFn phi = linear_phase();
    const cplx ref = gaussian_oracle(0.0);
    const auto r = pair_direct(gauss(), phi, TestFn::bump({0.0}, 1.0));
    CHECK(r.converged);
    CHECK(std::abs(r.value - ref) <= 1e-6);
    QuadOptions nested;
    nested.allow_spectral = false;
    const auto n = pair_direct(gauss(), phi, TestFn::bump({0.0}, 1.0), nested);
    CHECK(n.method != "spectral");
    CHECK(std::abs(n.value - ref) <= 1e-6);
  }

  TEST_CASE("zero amplitude and conjugate phase") {
    const PhaseFn phi = linear_phase();
    const auto z = pair_direct(fixture::symbol("0", kLine, fixture::kMinusInf), phi, TestFn::bump({0.2}, 1.0));
    CHECK(z.value == cplx(0, 0));

    const PhaseFn neg = linear_phase("-x1*t1");
    const SymbolFn a = fixture::symbol("exp(-t1^2)*(1+t1)", kLine, fixture::kMinusInf);
    const auto p = pair_direct(a, phi, TestFn::bump({0.2}, 1.0));
    const auto m = pair_direct(a, neg, TestFn::bump({0.2}, 1.0));
    CHECK(std::abs(p.value - std::conj(m.value)) <= p.abs_err + m.abs_err + 1e-12);
    CHECK(std::abs(p.value.imag()) > 1e-3);
  }

  TEST_CASE("linearity in the amplitude") {
    const PhaseFn phi = linear_phase();
    const TestFn f = TestFn::bump({0.1}, 1.5);
    const auto a = pair_direct(gauss(), phi, f);
    const auto b = pair_direct(fixture::symbol("t1^2/(1+t1^2)^4", kLine, -6), phi, f);
    const auto ab = pair_direct(fixture::symbol("exp(-t1^2) + t1^2/(1+t1^2)^4", kLine, -6), phi, f);
    CHECK(std::abs(ab.value - (a.value + b.value)) <= a.abs_err + b.abs_err + ab.abs_err + 1e-9);
  }

  TEST_CASE("regularized and direct pairings coincide") {
    const PhaseFn phi = linear_phase();
    const TestFn f = TestFn::bump({0.0}, 1.0);
    const auto d = pair_direct(gauss(), phi, f);
    for (int p : {1, 2}) {
      const auto r = pair_regularized(gauss(), phi, f, p);
      CHECK(r.p == p);
      CHECK(std::abs(r.value - d.value) <= r.abs_err + r.tail_bound + d.abs_err + d.tail_bound + 1e-12);
    }
    // Order 0: only the regularized pairing exists, and p and p + 1 agree.
    // The tail after p steps decays like R^(1-p), so the tolerance is loose.
    const SymbolFn one = fixture::symbol("1", kLine, 0.0);
    CHECK_THROWS_AS(pair_direct(one, phi, f), NotConvergent);
    CHECK(choose_p(0, 1, 1, SmoothnessTarget::Pairing) == 2);
    QuadOptions loose;
    loose.tol = 1e-4;
    loose.strict = false;
    const TestFn g = TestFn::bump({0.5}, 1.0);
    const auto r3 = pair_regularized(one, phi, g, 3, loose);
    const auto r4 = pair_regularized(one, phi, g, 4, loose);
    CHECK(std::abs(r3.value - r4.value) <= r3.abs_err + r4.abs_err + r3.tail_bound + r4.tail_bound);
    // int e^{i x t} dt = 2 pi delta(x), and g vanishes at 0 to all orders.
    CHECK(std::abs(r4.value) <= r4.abs_err + r4.tail_bound);
  }

  TEST_CASE("pointwise values") {
    const PhaseFn phi = linear_phase();
    const std::vector<Vec> xs{{-2}, {-1}, {0}, {1}, {2}};
    const auto pw = eval_pointwise(gauss(), phi, xs);
    REQUIRE(pw.values.size() == xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double ref = oracle::gaussian_transform(xs[i][0]);
      CHECK(std::abs(pw.values[i] - ref) / ref <= 1e-6);
    }

    const PhaseFn kg = fixture::validated(fixture::valid_phases()[1]);
    const auto k0 = eval_pointwise(fixture::symbol("exp(-t1^2-t2^2-t3^2)", kg.dims, fixture::kMinusInf), kg,
                                   {{0, 0, 0, 0}});
    CHECK(std::abs(k0.values[0] - std::pow(std::numbers::pi, 1.5)) <= std::max(1e-6, k0.errors[0]));

    const PhaseFn moyal = fixture::validated(fixture::valid_phases()[3]);
    CHECK_THROWS_AS(eval_pointwise(fixture::symbol("1", moyal.dims, 0.0), moyal, {{0, 0}}), NotConvergent);
  }

  TEST_CASE("pointwise values are continuous under refinement") {
    const PhaseFn phi = linear_phase();
    const SymbolFn a = fixture::symbol("1/(1+t1^2)^3", kLine, -6);
    QuadOptions o;
    o.strict = false;
    double prev = 0;
    for (int level = 0; level < 3; ++level) {
      const int n = 8 << level;
      std::vector<Vec> xs;
      for (int i = 0; i <= n; ++i) xs.push_back({-1.0 + 2.0 * i / n});
      const auto pw = eval_pointwise(a, phi, xs, o);
      double jump = 0;
      for (int i = 0; i < n; ++i) jump = std::max(jump, std::abs(pw.values[i + 1] - pw.values[i]));
      if (level > 0) CHECK(prev / jump >= 1.8);
      prev = jump;
    }
  }

  TEST_CASE("windowed Fourier transform") {
    const PhaseFn phi = linear_phase();
    const TestFn psi = TestFn::bump({0.0}, 1.0);
    for (double k : {0.0, 3.0, -5.0}) {
      const auto r = windowed_fourier(gauss(), phi, psi, {k}, FourierPolicy::Direct);
      CHECK(std::abs(r.value - gaussian_oracle(k)) <= 1e-6);
    }
    const auto s = windowed_fourier(gauss(), phi, psi, {3.0}, FourierPolicy::Spectral);
    CHECK(std::abs(s.value - gaussian_oracle(3.0)) <= 1e-6);
    const auto t = windowed_fourier(gauss(), phi, psi, {3.0}, FourierPolicy::ThetaReduced, {}, 1);
    CHECK(std::abs(t.value - gaussian_oracle(3.0)) <= 1e-6);

    const auto k0 = windowed_fourier(gauss(), phi, psi, {0.0}, FourierPolicy::Direct);
    const auto p0 = pair_direct(gauss(), phi, psi);
    CHECK(std::abs(k0.value - p0.value) <= k0.abs_err + p0.abs_err + 1e-12);

    const TestFn off = TestFn::bump({0.4}, 1.0);
    const auto plus = windowed_fourier(gauss(), phi, off, {2.5}, FourierPolicy::Direct);
    const auto minus = windowed_fourier(gauss(), phi, off, {-2.5}, FourierPolicy::Direct);
    CHECK(std::abs(plus.value - std::conj(minus.value)) <= plus.abs_err + minus.abs_err + 1e-12);

    CHECK(spectral_applicable(gauss(), phi));
    CHECK_FALSE(spectral_applicable(fixture::symbol("exp(-t1^2)*x1", kLine, fixture::kMinusInf), phi));
  }

  TEST_CASE("strict mode reports unreachable tolerances") {
    const PhaseFn phi = linear_phase();
    QuadOptions o;
    o.tol = 1e-15;
    o.budget = 1e4;
    o.allow_spectral = false;
    CHECK_THROWS_AS(pair_direct(gauss(), phi, TestFn::bump({0.0}, 1.0), o), ToleranceNotReached);
    o.strict = false;
    const auto r = pair_direct(gauss(), phi, TestFn::bump({0.0}, 1.0), o);
    CHECK_FALSE(r.converged);
  }
}
