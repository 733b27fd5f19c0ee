#pragma once

// First-order operators V = sum a_i d/dtheta_i + sum b_j d/dx_j + c whose
// transpose fixes the oscillatory factor (up to a cutoff), so that
// int e^{i phi} u = int e^{i phi} V[u] and each application lowers the order
// of u.

#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "oscint/calculus.hpp"

namespace oscint {

struct Reducer {
  enum class Kind { GlobalV, ThetaOnly, FourierVk };

  Kind kind = Kind::GlobalV;
  Dims dims;
  std::vector<CExpr> a;  // theta-gradient coefficients, size s (empty for FourierVk)
  std::vector<CExpr> b;  // x-gradient coefficients, size n (empty for ThetaOnly)
  CExpr c;
  double order_drop = 0.0;
  bool covector = false;  // coefficients reference k1..kn
  // Phase the operator is adapted to (phi, or phi - k.x for FourierVk) and
  // the expected value of e^{-i phase} V^t e^{i phase}.
  Expr phase;
  CExpr target;
  std::optional<Box> region;  // x-region of validity, when restricted
  std::size_t swell_cap = 200000;
};

const char* to_string(Reducer::Kind k);

Reducer build_reducer(const PhaseFn& phi);

// Max |e^{-i phase} V^t e^{i phase} - target| over seeded samples with x in
// the validity box and D <= |theta| <= 2^10 (log-uniform radius). With
// `covector`, k is drawn uniformly from the sphere of radius 2^10.
double verify_transpose_identity(const Reducer& R, const PhaseFn& phi, int samples, std::uint64_t seed = 1);

// V[u] = a . grad_theta u + b . grad_x u + c u. The result order is
// u.order - order_drop, or the fitted growth when `estimate` is given.
// Throws ExpressionSwell when either part exceeds the node cap.
SymbolFn apply_reducer(const Reducer& R, const SymbolFn& u, const ScanConfig* estimate = nullptr);

// Conic region in (x, theta): x in a box, theta within `half_angle` of
// `axis` (full space when axis is empty).
struct ConicRegion {
  Box x_box;
  Vec axis;
  double half_angle = std::numbers::pi;
  int grid_per_axis = 3;
};

// Radial theta bump with plateau covering every sampled theta in the region
// where |grad_theta phi| stays below half its asymptotic lower bound.
CutoffFn choose_theta_bump(const PhaseFn& phi, const ConicRegion& region);

// Theta-only operator on a region disjoint from the critical set:
// eta = |grad_theta phi|^2, a_i = i (1 - psi) d_i phi / eta, c = div a + psi.
// Throws RegionTouchesCriticalSet when the growth bound fails on a sampled ray.
Reducer build_theta_reducer(const PhaseFn& phi, const ConicRegion& avoid, const CutoffFn& psi);

struct FourierCheck {
  double min_ratio = 0.0;  // min |grad_x phi - k| / (|theta|^mu + |k|)
  Vec x, theta, k;         // where the minimum was attained
};

struct FourierOptions {
  std::vector<Vec> theta_dirs;  // empty: default direction set
  Vec rhos;                     // |k| ladder; empty: 4 * 2^i, i = 0..8
  double threshold = 0.05;
  int grid_per_axis = 3;
  bool check = true;
};

// Minimizes |grad_x phi(x, theta) - k| / (|theta|^mu + |k|) over x on the
// zeta plateau grid, theta = lambda * dir (lambda geometric with ratio
// 2^(1/8) from D to 2^14) and k = rho * khat.
FourierCheck fourier_condition(const PhaseFn& phi, const CutoffFn& zeta, const Vec& khat, const FourierOptions& opts);

// b_j = i zeta (1 - chi) (d_{x_j} phi - k_j) / |grad_x phi - k|^2, c = div_x b,
// with k1..kn kept symbolic. When opts.check is set the condition above is
// verified for the direction of k; a minimum below opts.threshold throws
// ConeIntersectsSP.
Reducer build_fourier_reducer(const PhaseFn& phi, const CutoffFn& zeta, const CutoffFn& chi, const Vec& k,
                              const FourierOptions& opts = {});

}  // namespace oscint
