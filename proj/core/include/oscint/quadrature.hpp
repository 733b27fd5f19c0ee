#pragma once

// Oscillatory integrals against test functions: direct and regularized
// pairings, pointwise values and windowed Fourier transforms.

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "oscint/calculus.hpp"
#include "oscint/regularize.hpp"

namespace oscint {

using Complex = std::complex<double>;

// Smooth test function / window over x-space.
//   Bump:     amplitude * (1 - h((|x-c| - radius/2)/(radius/2))), support |x-c| <= radius.
//   Gaussian: amplitude * exp(-|x-c|^2 / (2 sigma^2)), sigma = radius/6, treated as
//             supported in |x-c| <= radius * 4/3 (8 sigma, relative mass below 1e-13).
struct TestFn {
  enum class Kind { Bump, Gaussian };
  Kind kind = Kind::Bump;
  Vec center;
  double radius = 1.0;
  double amplitude = 1.0;

  static TestFn bump(Vec center, double radius = 1.0, double amplitude = 1.0);
  static TestFn gaussian(Vec center, double radius = 1.0, double amplitude = 1.0);

  int dim() const { return static_cast<int>(center.size()); }
  double sigma() const { return radius / 6.0; }
  double support_radius() const;
  Box support_box() const;
  Expr expr() const;
  // Fourier transform  int f(x) e^{i x.q} dx.
  Complex transform(std::span<const double> q) const;
};

struct QuadOptions {
  double tol = 1e-6;           // absolute target per pairing
  double R0 = 8.0;             // initial theta truncation radius
  double R_max = 64.0;         // R doubles from R0 up to this
  int order = 6;               // Gauss-Legendre order per panel and axis
  double budget = 4e9;         // max tape instructions executed per integral
  int max_panels = 200000;     // adaptive theta cubature
  int threads = 1;
  bool allow_spectral = true;  // exact inner x-integral when the structure allows it
  bool strict = true;          // throw ToleranceNotReached instead of returning converged = false
  std::size_t swell_cap = 200000;
  std::uint64_t seed = 1;      // lattice shifts of the high-dimensional fallback
  double fourier_rel_tol = 1e-12;  // spectral Fourier target relative to the integrand's L1 mass
};

struct PairingResult {
  Complex value{};
  double abs_err = 0.0;     // quadrature estimate + |value(R) - value(R/2)|
  double quad_err = 0.0;
  double tail_bound = 0.0;  // a priori bound of the |theta| > R contribution
  int p = 0;
  double R = 0.0;
  double post_order = 0.0;  // order of the integrated amplitude
  std::int64_t nodes = 0;
  bool converged = false;   // abs_err + tail_bound <= tol
  std::string method;       // "spectral", "nested" or "lattice"
};

enum class SmoothnessTarget { Pairing, Pointwise };

// Pairing: smallest p >= 0 with m - p mu <= -s - 1. Pointwise: largest k >= 0
// with m + k mu < -s, or -1 when none exists.
int choose_p(double m, double mu, int s, SmoothnessTarget target);

PairingResult pair_direct(const SymbolFn& a, const PhaseFn& phi, const TestFn& f, const QuadOptions& opts = {});
PairingResult pair_regularized(const SymbolFn& a, const PhaseFn& phi, const TestFn& f, std::optional<int> p = {},
                               const QuadOptions& opts = {});

struct PointwiseResult {
  std::vector<Complex> values;
  std::vector<double> errors;
  int smoothness = 0;  // certified C^k order
};

PointwiseResult eval_pointwise(const SymbolFn& a, const PhaseFn& phi, const std::vector<Vec>& xs,
                               const QuadOptions& opts = {});

enum class FourierPolicy { Direct, Spectral, ThetaReduced, FourierReduced };
const char* to_string(FourierPolicy p);

struct FourierResult {
  Complex value{};
  double abs_err = 0.0;
  double mass = 0.0;  // L1 norm of the integrand (spectral paths), the scale for noise floors
  std::int64_t nodes = 0;
  bool converged = false;
  std::string method;
};

// int int e^{i(phi - k.x)} psi(x) a(x, theta) dx dtheta.
//   Direct:         requires a.order < -s.
//   Spectral:       x-first evaluation; requires phi affine in x and a
//                   independent of x. Converges whenever |grad_x phi - k|
//                   grows in theta.
//   ThetaReduced:   global V applied `reductions` times, then nested rule.
//   FourierReduced: V_k applied `reductions` times, then nested rule.
FourierResult windowed_fourier(const SymbolFn& a, const PhaseFn& phi, const TestFn& psi, const Vec& k,
                               FourierPolicy policy, const QuadOptions& opts = {}, int reductions = 0);

// True when phi is affine in x and a does not depend on x, so the inner
// x-integral has a closed form through the window's transform.
bool spectral_applicable(const SymbolFn& a, const PhaseFn& phi);

// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

// Tail bound S * int_{|theta|>R} (1+|theta|)^M d^s theta with M < -s.
double tail_integral(double M, int s, double R);

}  // namespace oscint
