#pragma once

// Derivative-free local minimization over the unit sphere (compass search in
// the tangent plane, step halved on failure).

#include <cmath>
#include <functional>
#include <vector>

namespace oscint::detail {

inline void normalize(std::vector<double>& v) {
  double n2 = 0.0;
  for (double c : v) n2 += c * c;
  const double n = std::sqrt(n2);
  for (auto& c : v) c /= n;
}

// Orthonormal basis of the tangent plane at unit vector d.
inline std::vector<std::vector<double>> tangent_basis(const std::vector<double>& d) {
  std::vector<std::vector<double>> basis;
  const std::size_t s = d.size();
  for (std::size_t i = 0; i < s && basis.size() + 1 < s; ++i) {
    std::vector<double> e(s, 0.0);
    e[i] = 1.0;
    auto project_out = [&](const std::vector<double>& u) {
      double dot = 0.0;
      for (std::size_t j = 0; j < s; ++j) dot += e[j] * u[j];
      for (std::size_t j = 0; j < s; ++j) e[j] -= dot * u[j];
    };
    project_out(d);
    for (const auto& b : basis) project_out(b);
    double n2 = 0.0;
    for (double c : e) n2 += c * c;
    if (n2 < 1e-6) continue;
    for (auto& c : e) c /= std::sqrt(n2);
    basis.push_back(std::move(e));
  }
  return basis;
}

// Returns the refined direction; `value` receives f at it. `admissible`
// rejects candidate directions (e.g. outside a cone).
inline std::vector<double> refine_on_sphere(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> d, double step, double& value,
                                            const std::function<bool(const std::vector<double>&)>& admissible = {},
                                            double step_min = 1e-8, int max_evals = 3000) {
  value = f(d);
  if (d.size() < 2) return d;
  int evals = 1;
  while (step > step_min && evals < max_evals) {
    bool improved = false;
    for (const auto& t : tangent_basis(d)) {
      for (double sgn : {1.0, -1.0}) {
        std::vector<double> c(d);
        for (std::size_t j = 0; j < c.size(); ++j) c[j] += sgn * step * t[j];
        normalize(c);
        if (admissible && !admissible(c)) continue;
        const double v = f(c);
        ++evals;
        if (v < value) {
          value = v;
          d = std::move(c);
          improved = true;
          break;
        }
      }
      if (improved) break;
    }
    if (!improved) step *= 0.5;
  }
  return d;
}

}  // namespace oscint::detail
