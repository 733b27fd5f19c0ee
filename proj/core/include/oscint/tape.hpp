#pragma once

// Flat instruction tape for fast repeated evaluation of one or more
// expressions. Shared sub-expressions are evaluated once per point; points
// are processed in batches so the interpreter overhead is amortized.

#include <cstdint>
#include <span>
#include <vector>

#include "oscint/expr.hpp"

namespace oscint {

class Tape {
 public:
  Tape() = default;
  Tape(std::span<const Expr> outputs, const Dims& dims, bool with_covector = false);
  explicit Tape(const Expr& output, const Dims& dims, bool with_covector = false)
      : Tape(std::span<const Expr>(&output, 1), dims, with_covector) {}

  std::size_t inputs() const { return static_cast<std::size_t>(n_inputs_); }
  std::size_t outputs() const { return out_slots_.size(); }
  std::size_t size() const { return instr_.size(); }
  const Dims& dims() const { return dims_; }

  // Input layout per point: x[0..n), theta[0..s), k[0..n) (when enabled).
  // `in` holds `count` points, point-major; `out` receives outputs()*count
  // values, point-major. Domain violations produce NaN (never throw).
  void eval_batch(std::span<const double> in, std::size_t count, std::span<double> out) const;

  // Single point; throws DomainError naming the offending node.
  void eval(std::span<const double> in, std::span<double> out) const;
  double eval1(std::span<const double> in) const;

 private:
  struct Instr {
    Op op;
    int ival;
    std::uint32_t first;  // index into args_
    std::uint32_t count;
    double value;         // constants
    const Node* node;     // for diagnostics
    bool flat = false;    // can evaluate to a flat-function hard zero
  };

  std::vector<Instr> instr_;
  std::vector<std::uint32_t> args_;
  std::vector<std::uint32_t> out_slots_;
  int n_inputs_ = 0;
  Dims dims_{};

  bool flat_derived(const Instr& ins) const;
  void run(std::span<const double> in, std::size_t count, std::vector<double>& regs) const;
};

}  // namespace oscint
