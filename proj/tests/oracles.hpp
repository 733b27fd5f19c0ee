#pragma once

// Reference values computed without the library's own quadrature or
// differentiation: plain finite differences and composite Simpson sums.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

// Smooth step used by every bump: h(t) = g(t) / (g(t) + g(1-t)), g(t) = exp(-1/t).
inline double smooth_step(double t) {
  if (t <= 0) return 0.0;
  if (t >= 1) return 1.0;
  const double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
  return a / (a + b);
}

// Radial bump of radius r: 1 on |x - c| <= r/2, 0 beyond r.
inline double bump(double x, double c = 0.0, double r = 1.0) {
  return 1.0 - smooth_step((std::abs(x - c) - r / 2) / (r / 2));
}

// Composite Simpson on [a, b] with an even number of intervals.
template <class F>
auto simpson(F&& f, double a, double b, int intervals = 20000) {
  const double h = (b - a) / intervals;
  auto sum = f(a) + f(b);
  for (int i = 1; i < intervals; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return sum * (h / 3.0);
}

// Closed form of int exp(i x t - t^2) dt.
inline double gaussian_transform(double x) { return std::sqrt(std::numbers::pi) * std::exp(-x * x / 4.0); }

inline double central_difference(const std::function<double(double)>& f, double at, double h = 1e-5) {
  return (f(at + h) - f(at - h)) / (2.0 * h);
}

inline std::vector<double> uniform_point(std::mt19937_64& rng, int dim, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(dim);
  for (auto& c : v) c = u(rng);
  return v;
}

inline double angle(const std::vector<double>& u, const std::vector<double>& v) {
  double uu = 0, vv = 0, uv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    uv += u[i] * v[i];
  }
  return std::acos(std::clamp(uv / std::sqrt(uu * vv), -1.0, 1.0));
}

}  // namespace oracle
