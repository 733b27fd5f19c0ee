#pragma once

// Evaluation of tapes along rays (x, lambda * dir).

#include <span>
#include <vector>

#include "oscint/calculus.hpp"
#include "oscint/tape.hpp"

namespace oscint::detail {

// out[(d * lambdas.size() + r) * outputs + o] for direction d, rung r.
inline void eval_rays(const Tape& tape, std::span<const double> x, const std::vector<Vec>& dirs,
                      std::span<const double> lambdas, std::vector<double>& out,
                      std::span<const double> k = {}) {
  const Dims& d = tape.dims();
  const std::size_t ni = tape.inputs();
  const std::size_t np = dirs.size() * lambdas.size();
  std::vector<double> in(np * ni, 0.0);
  std::size_t p = 0;
  for (const auto& dir : dirs) {
    for (double lam : lambdas) {
      double* row = in.data() + p * ni;
      for (int i = 0; i < d.n; ++i) row[i] = x[static_cast<std::size_t>(i)];
      for (int j = 0; j < d.s; ++j) row[d.n + j] = lam * dir[static_cast<std::size_t>(j)];
      for (std::size_t i = 0; i < k.size(); ++i) row[static_cast<std::size_t>(d.n + d.s) + i] = k[i];
      ++p;
    }
  }
  out.resize(np * tape.outputs());
  tape.eval_batch(in, np, out);
}

}  // namespace oscint::detail
