#pragma once

// Numerical symbol calculus: growth-order fits along rays, seminorm plateau
// checks, phase-function certification and smooth cutoffs.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oscint/expr.hpp"

namespace oscint {

using Vec = std::vector<double>;

// Axis-aligned compact box. `lo[i] <= hi[i]`, all finite.
struct Box {
  Vec lo, hi;

  Box() = default;
  Box(Vec lo_, Vec hi_);
  static Box cube(int dim, double lo, double hi);

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(std::span<const double> x, double slack = 0.0) const;
  // Tensor grid with `per_axis` points per axis (endpoints included; a single
  // point sits at the center).
  std::vector<Vec> grid(int per_axis) const;
};

struct Ladder {
  double start = 1.0;
  double base = 2.0;
  int rungs = 15;

  Vec values() const;
};

// Unit directions in R^s. count <= 0 selects the default density:
// s=1 {+1,-1}; s=2 64 angles; s=3 256 Fibonacci points; s>=4 512 seeded
// Gaussian-normalized points.
std::vector<Vec> direction_set(int s, int count = 0, std::uint64_t seed = 1);
int default_direction_count(int s);

struct ScanConfig {
  Box box;
  int grid_per_axis = 3;
  int directions = 0;  // 0: default_direction_count(s)
  Ladder ladder{};
  std::uint64_t seed = 1;
  double order_tol = 0.1;
  double plateau_drift = 0.1;  // allowed growth per octave on the plateau
  int threads = 1;
};

struct OrderEstimate {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  int directions = 0;
};

// Fit of log max|e| against log lambda over the upper half of the ladder.
// A vector of expressions is measured by its Euclidean norm, so a complex
// amplitude is passed as {re, im}. Throws EvaluationFailed on NaN and
// DegenerateFit when every sample is zero.
OrderEstimate estimate_growth(std::span<const Expr> e, const Dims& dims, const ScanConfig& cfg);
OrderEstimate estimate_growth(const Expr& e, const Dims& dims, const ScanConfig& cfg);

struct SeminormWitness {
  MultiIndex index;
  Vec x, theta;
  double value = 0.0;
  double drift = 0.0;  // fitted growth per octave over the plateau window
};

struct SymbolReport {
  bool ok = true;
  double worst_ratio = 0.0;  // largest weighted seminorm sample
  SeminormWitness witness;
};

SymbolReport verify_symbol_order(std::span<const Expr> a, double m, int depth, const Dims& dims,
                                 const ScanConfig& cfg);
SymbolReport verify_symbol_order(const Expr& a, double m, int depth, const Dims& dims, const ScanConfig& cfg);

// Smooth step 1 -> 0 in the radial variable of one axis group:
// value 1 for |v - center| <= r0, 0 for |v - center| >= r1, with profile
// 1 - h((r - r0)/(r1 - r0)), h(t) = g(t)/(g(t)+g(1-t)), g(t) = exp(-1/t).
struct CutoffFn {
  Axis axis = Axis::Theta;
  Vec center;  // empty means the origin
  double r0 = 1.0;
  double r1 = 2.0;
  Expr expr;
  Expr complement;  // 1 - expr, built directly as h(...)

  double operator()(std::span<const double> x, std::span<const double> theta) const;
};

CutoffFn build_cutoff(double r0, double r1, int s);
CutoffFn build_bump(Axis axis, Vec center, double r0, double r1);

// Symbol: complex amplitude (real part, imaginary part) with its order.
struct SymbolFn {
  enum class Provenance { Declared, Estimated };
  CExpr expr;
  Dims dims;
  double order = 0.0;
  Provenance provenance = Provenance::Declared;
};

struct Certificate {
  double C = 0.0;
  double D = 0.0;
  double min_ratio = 0.0;  // over rungs >= D
  Box box;
  int directions = 0;
  int grid_per_axis = 0;
  Ladder ladder{};
};

struct PhaseFn {
  Expr expr;
  Dims dims;
  double mu = 1.0;
  Certificate cert;
  CutoffFn chi;
};

// eta = |grad_x phi|^2 + |theta|^2 |grad_theta phi|^2.
Expr eta_expr(const Expr& phi, const Dims& dims);

// Certifies the nondegeneracy bound eta >= C |theta|^(2 mu) for |theta| >= D
// on the configured box. Throws NotASymbol or DegeneratePhase.
PhaseFn validate_phase(const Expr& phi, const Dims& dims, double mu, const ScanConfig& cfg);

// Per-ray log-log fit over the upper half of a ladder.
struct RayFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;
};
RayFit fit_tail(std::span<const double> lambdas, std::span<const double> values);

}  // namespace oscint
