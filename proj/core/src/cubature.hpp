#pragma once

// Numerical integration kernels shared by the quadrature and microlocal
// modules.

#include <complex>
#include <cstdint>
#include <functional>
#include <vector>

#include "oscint/tape.hpp"

namespace oscint::detail {

using Complex = std::complex<double>;

// Batch integrand: `pts` holds `count` points of dimension d (point-major).
using BatchFn = std::function<void(const double* pts, std::size_t count, Complex* out)>;

struct CubatureResult {
  Complex value{};
  double error = 0.0;
  std::int64_t evals = 0;
  int panels = 0;
  bool converged = false;
  double mass = 0.0;  // integral of |f| by the fine rule
};

// Adaptive tensor Gauss-Legendre cubature over [lo, hi]. Each panel is
// integrated with orders q and q - 3; the difference is its error
// estimate. The worst panel is bisected along its widest axis (measured in
// units of the initial panel width) until the summed error is below `tol`
// or `max_panels` is reached. `initial` gives the starting panel count per
// axis. With rel_tol > 0 the target is max(tol, rel_tol * mass).
CubatureResult adaptive_cubature(const BatchFn& f, const std::vector<double>& lo, const std::vector<double>& hi,
                                 const std::vector<int>& initial, double tol, int q, int max_panels,
                                 double rel_tol = 0.0);

// Composite tensor rule evaluating e^{i phase} (re + i im) from a tape whose
// first three outputs are (re, im, phase). `axis_slot[a]` is the tape input
// slot driven by axis a; other slots take `base`.
struct TensorAxis {
  std::vector<double> nodes, weights;
};

Complex tensor_oscillatory(const Tape& tape, const std::vector<TensorAxis>& axes, const std::vector<int>& axis_slot,
                           const std::vector<double>& base, int threads);

TensorAxis composite_axis(double lo, double hi, int panels, int order);

// Randomly shifted Kronecker lattice over [lo, hi] (axis a drives tape slot
// a): `shifts` independent rotations of an `points`-point rule. Returns the
// mean and the standard error of the shift means.
struct LatticeResult {
  Complex value{};
  double std_error = 0.0;
  std::int64_t evals = 0;
};

LatticeResult lattice_oscillatory(const Tape& tape, const std::vector<double>& lo, const std::vector<double>& hi,
                                  const std::vector<double>& base, std::int64_t points, int shifts,
                                  std::uint64_t seed, int threads);

}  // namespace oscint::detail
