#pragma once

// Numerical scans for the critical set, the asymptotic stationary-phase set,
// the singular support and the empirical wave front set.

#include <string>
#include <vector>

#include "oscint/calculus.hpp"
#include "oscint/quadrature.hpp"

namespace oscint {

struct Thresholds {
  double eps_crit = 1e-3;   // ratio floor for critical rays
  double slope_tol = 0.1;   // ratio trending to 0 faster than lambda^-slope_tol
  double alpha_tol = 0.05;  // rad, stationary-phase angle
  double N_threshold = 6.0;
  double N_singular = 1.5;
  double residual_cap = 1.0;  // max RMS residual (natural log units) of a decay fit
};

// ------------------------------------------------------------ critical set

struct RayVerdict {
  Vec x;
  Vec dir;                  // unit theta direction
  double slope = 0.0;       // fitted growth exponent of |grad_theta phi(x, lambda dir)|
  double min_ratio = 0.0;   // tail min of |grad_theta phi| / lambda^(mu-1)
  double ratio_slope = 0.0; // tail slope of that ratio
  bool critical = false;
  bool refined = false;     // produced by local refinement of a weak sampled ray
  bool conic_consistent = true;
};

struct CriticalScanConfig {
  std::vector<Vec> xs;
  std::vector<Vec> dirs;  // empty: direction_set(s, 256)
  Ladder ladder{};
  Thresholds thresholds{};
  int refine = 2;           // weakest sampled rays per x refined on the sphere
  bool conic_check = true;  // re-run each verdict on a ladder offset by 2^(1/2)
  bool keep_regular = true; // false: return only critical rays (large grids)
  int threads = 1;
};

std::vector<RayVerdict> critical_set_scan(const PhaseFn& phi, const CriticalScanConfig& cfg);

// Grid points carrying at least one critical ray, in scan order.
std::vector<Vec> singular_support(const std::vector<RayVerdict>& scan);

// ------------------------------------------------- stationary-phase set

struct CovectorVerdict {
  Vec x;
  Vec khat;
  double min_angle = 0.0;  // rad, over critical rays at x and tail rungs
  Vec witness_dir;         // critical theta direction attaining it
  std::vector<double> angle_trace;  // per rung along the witness ray
  bool in_sp = false;
  bool candidate = false;  // k direction generated from a critical ray
};

struct SPScanConfig {
  std::vector<Vec> kdirs;  // empty: direction_set(n, 256)
  Ladder ladder{};
  Thresholds thresholds{};
  // Adds normalized grad_x phi(x, lambda_top dir) of every critical ray as a
  // probe direction, so asymptotic directions are never missed between
  // sampled k directions.
  bool add_candidates = true;
  int threads = 1;
};

// Only points with critical rays yield verdicts.
std::vector<CovectorVerdict> stationary_phase_scan(const PhaseFn& phi, const std::vector<RayVerdict>& critical,
                                                   const SPScanConfig& cfg);

// ---------------------------------------------------------- wave front set

enum class DirectionVerdict { Smooth, Singular, Inconclusive, Failed };
const char* to_string(DirectionVerdict v);

struct WavefrontEntry {
  Vec x0;
  Vec khat;
  double N = 0.0;           // fitted decay exponent (or lower bound)
  bool lower_bound = false; // N bounded below by the noise floor
  double residual = 0.0;
  DirectionVerdict verdict = DirectionVerdict::Inconclusive;
  Vec rhos, magnitudes, errors, floors;
  std::string error;        // set when verdict == Failed
};

struct WavefrontConfig {
  std::vector<Vec> points;
  std::vector<Vec> kdirs;
  Vec rhos;                      // empty: 4 * 2^i, i = 0..8
  double window_radius = 0.25;
  TestFn::Kind window = TestFn::Kind::Gaussian;
  enum class Policy { Auto, Direct, Spectral, ThetaReduced, FourierReduced } policy = Policy::Auto;
  int reductions = 0;            // for the reduced policies
  QuadOptions quad{};
  Thresholds thresholds{};
  double noise_rel = 1e-11;      // floor relative to the largest integrand mass
  int floor_stop = 2;            // stop a ladder after this many consecutive floor rungs (0: never)
  int threads = 1;
};

struct WavefrontReport {
  std::vector<WavefrontEntry> entries;
  Thresholds thresholds;
  double window_radius = 0.0;
  std::string policy;
};

// Decay fit used by wavefront_scan, exposed for testing. Rungs with
// magnitude above their floor are "good". N is the negated least-squares
// slope of log|value| against log rho over the upper half of the good rungs;
// when a floor rung follows the last good rung, N is raised to the lower
// bound implied by dropping to that floor. With no good rung at all, `scale`
// (an upper bound of every magnitude, e.g. the integrand's L1 mass) stands in
// for the magnitude at rho = 1. `accelerating` holds when the secant decay
// rates across the fitted rungs never drop (by more than 0.5): curvature of
// faster-than-polynomial decay then explains the residual.
struct DecayFit {
  double N = 0.0;
  double residual = 0.0;
  bool lower_bound = false;
  bool accelerating = false;
  int good = 0;
};
DecayFit fit_decay(const Vec& rhos, const Vec& magnitudes, const Vec& floors, double scale = 0.0);

WavefrontReport wavefront_scan(const SymbolFn& a, const PhaseFn& phi, const WavefrontConfig& cfg);

}  // namespace oscint
