#include "oscint/tape.hpp"

#include <cmath>
#include <limits>
#include <unordered_map>

namespace oscint {

namespace {
constexpr std::size_t kBatch = 64;
constexpr std::uint32_t kDivide = 0x80000000u;
constexpr std::uint32_t kSlotMask = 0x7fffffffu;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double ipow(double x, int n) {
  if (n < 0) {
    if (x == 0.0) return kNaN;
    return 1.0 / ipow(x, -n);
  }
  double r = 1.0;
  double b = x;
  while (n > 0) {
    if (n & 1) r *= b;
    n >>= 1;
    if (n) b *= b;
  }
  return r;
}
}  // namespace

Tape::Tape(std::span<const Expr> outputs, const Dims& dims, bool with_covector) : dims_(dims) {
  n_inputs_ = dims.n + dims.s + (with_covector ? dims.n : 0);
  std::unordered_map<const Node*, std::uint32_t> slot;
  // Iterative post-order over the DAG.
  std::vector<std::pair<const Node*, bool>> stack;
  for (const auto& root : outputs) stack.emplace_back(root.get(), false);
  while (!stack.empty()) {
    auto [n, expanded] = stack.back();
    stack.pop_back();
    if (slot.count(n)) continue;
    if (!expanded) {
      stack.emplace_back(n, true);
      for (const auto& k : n->kids) {
        if (!slot.count(k.get())) stack.emplace_back(k.get(), false);
      if (n->op == Op::Mul && k.op() == Op::Pow && k.node().ival == -1) {
        const Node* base = k.node().kids[0].get();
        if (!slot.count(base)) stack.emplace_back(base, false);
      }
      }
      continue;
    }
    Instr ins{n->op, n->ival, static_cast<std::uint32_t>(args_.size()),
              static_cast<std::uint32_t>(n->kids.size()), n->value, n};
    if (n->op == Op::Var) {
      const Var& v = n->var;
      int off = v.axis == Axis::X ? 0 : (v.axis == Axis::Theta ? dims.n : dims.n + dims.s);
      const int lim = v.axis == Axis::Theta ? dims.s : dims.n;
      if (v.index >= lim || (v.axis == Axis::K && !with_covector)) {
        throw UnknownVariable("Tape", "variable out of range for declared dims");
      }
      ins.ival = off + v.index;
    }
    for (const auto& k : n->kids) {
      // Inside products, b^-1 is applied as a division by b.
      if (n->op == Op::Mul && k.op() == Op::Pow && k.node().ival == -1) {
        args_.push_back(slot.at(k.node().kids[0].get()) | kDivide);
      } else {
        args_.push_back(slot.at(k.get()));
      }
    }
    ins.flat = flat_derived(ins);
    slot.emplace(n, static_cast<std::uint32_t>(instr_.size()));
    instr_.push_back(ins);
  }
  for (const auto& root : outputs) out_slots_.push_back(slot.at(root.get()));
}

bool Tape::flat_derived(const Instr& ins) const {
  switch (ins.op) {
    case Op::Flat:
      return true;
    case Op::Mul:
      for (std::uint32_t a = 0; a < ins.count; ++a) {
        const std::uint32_t s = args_[ins.first + a];
        if (!(s & kDivide) && instr_[s].flat) return true;
      }
      return false;
    case Op::Add:
      for (std::uint32_t a = 0; a < ins.count; ++a) {
        if (!instr_[args_[ins.first + a]].flat) return false;
      }
      return true;
    case Op::Pow:
      return ins.ival > 0 && instr_[args_[ins.first]].flat;
    default:
      return false;
  }
}

void Tape::run(std::span<const double> in, std::size_t count, std::vector<double>& regs) const {
  regs.resize(instr_.size() * count);
  // hz[i*count+p]: register is an exact zero produced by a flat function on
  // its vanishing set. Such zeros annihilate products even when a sibling
  // factor is singular there (e.g. |theta|^-1 at theta = 0 inside a cutoff
  // plateau), matching the smooth limit.
  std::vector<std::uint8_t> hz(instr_.size() * count, 0);
  const std::size_t ni = static_cast<std::size_t>(n_inputs_);
  for (std::size_t i = 0; i < instr_.size(); ++i) {
    const Instr& ins = instr_[i];
    double* r = regs.data() + i * count;
    auto arg = [&](std::uint32_t a) {
      return regs.data() + static_cast<std::size_t>(args_[ins.first + a] & kSlotMask) * count;
    };
    switch (ins.op) {
      case Op::Const:
        for (std::size_t p = 0; p < count; ++p) r[p] = ins.value;
        break;
      case Op::Var:
        for (std::size_t p = 0; p < count; ++p) r[p] = in[p * ni + static_cast<std::size_t>(ins.ival)];
        break;
      case Op::Add: {
        const double* a0 = arg(0);
        for (std::size_t p = 0; p < count; ++p) r[p] = a0[p];
        for (std::uint32_t a = 1; a < ins.count; ++a) {
          const double* ak = arg(a);
          for (std::size_t p = 0; p < count; ++p) r[p] += ak[p];
        }
        break;
      }
      case Op::Mul: {
        for (std::size_t p = 0; p < count; ++p) r[p] = 1.0;
        for (std::uint32_t a = 0; a < ins.count; ++a) {
          const double* ak = arg(a);
          if (args_[ins.first + a] & kDivide) {
            for (std::size_t p = 0; p < count; ++p) r[p] = ak[p] == 0.0 ? kNaN : r[p] / ak[p];
          } else {
            for (std::size_t p = 0; p < count; ++p) r[p] *= ak[p];
          }
        }
        break;
      }
      case Op::Pow: {
        const double* a0 = arg(0);
        const int n = ins.ival;
        if (n == 2) {
          for (std::size_t p = 0; p < count; ++p) r[p] = a0[p] * a0[p];
        } else if (n == -1) {
          for (std::size_t p = 0; p < count; ++p) r[p] = a0[p] == 0.0 ? kNaN : 1.0 / a0[p];
        } else {
          for (std::size_t p = 0; p < count; ++p) r[p] = ipow(a0[p], n);
        }
        break;
      }
      case Op::Sqrt: {
        const double* a0 = arg(0);
        for (std::size_t p = 0; p < count; ++p) r[p] = a0[p] < 0.0 ? kNaN : std::sqrt(a0[p]);
        break;
      }
      case Op::Exp: {
        const double* a0 = arg(0);
        for (std::size_t p = 0; p < count; ++p) r[p] = std::exp(a0[p]);
        break;
      }
      case Op::Sin: {
        const double* a0 = arg(0);
        for (std::size_t p = 0; p < count; ++p) r[p] = std::sin(a0[p]);
        break;
      }
      case Op::Cos: {
        const double* a0 = arg(0);
        for (std::size_t p = 0; p < count; ++p) r[p] = std::cos(a0[p]);
        break;
      }
      case Op::Flat: {
        const double* a0 = arg(0);
        const int k = ins.ival;
        std::uint8_t* z = hz.data() + i * count;
        for (std::size_t p = 0; p < count; ++p) {
          const double u = a0[p];
          if (std::isnan(u)) {
            r[p] = u;
          } else if (u > 1.0 / 700.0) {
            r[p] = std::exp(-1.0 / u) * (k == 0 ? 1.0 : ipow(u, -k));
          } else {
            r[p] = 0.0;
            z[p] = 1;
          }
        }
        break;
      }
    }
    if (ins.flat && ins.op != Op::Flat) {
      std::uint8_t* z = hz.data() + i * count;
      auto kz = [&](std::uint32_t a) {
        return hz.data() + static_cast<std::size_t>(args_[ins.first + a] & kSlotMask) * count;
      };
      for (std::size_t p = 0; p < count; ++p) {
        bool zero;
        if (ins.op == Op::Mul) {
          zero = false;
          for (std::uint32_t a = 0; a < ins.count && !zero; ++a) {
            zero = !(args_[ins.first + a] & kDivide) && kz(a)[p] != 0;
          }
        } else {
          zero = true;
          for (std::uint32_t a = 0; a < ins.count && zero; ++a) zero = kz(a)[p] != 0;
        }
        if (zero) {
          z[p] = 1;
          r[p] = 0.0;
        }
      }
    }
  }
}

void Tape::eval_batch(std::span<const double> in, std::size_t count, std::span<double> out) const {
  const std::size_t ni = static_cast<std::size_t>(n_inputs_);
  const std::size_t no = out_slots_.size();
  std::vector<double> regs;
  for (std::size_t start = 0; start < count; start += kBatch) {
    const std::size_t c = std::min(kBatch, count - start);
    run(in.subspan(start * ni, c * ni), c, regs);
    for (std::size_t p = 0; p < c; ++p) {
      for (std::size_t o = 0; o < no; ++o) {
        out[(start + p) * no + o] = regs[static_cast<std::size_t>(out_slots_[o]) * c + p];
      }
    }
  }
}

void Tape::eval(std::span<const double> in, std::span<double> out) const {
  std::vector<double> regs;
  run(in, 1, regs);
  for (std::size_t o = 0; o < out_slots_.size(); ++o) {
    const double v = regs[out_slots_[o]];
    if (std::isnan(v)) {
      // Locate the first instruction that turned finite arguments into NaN.
      for (std::size_t i = 0; i < instr_.size(); ++i) {
        if (!std::isnan(regs[i])) continue;
        const Instr& ins = instr_[i];
        bool args_ok = true;
        double bad = 0.0;
        for (std::uint32_t a = 0; a < ins.count; ++a) {
          const double av = regs[args_[ins.first + a] & kSlotMask];
          if (std::isnan(av)) args_ok = false;
          bad = av;
        }
        if (!args_ok) continue;
        std::string node = format(Expr(std::shared_ptr<const Node>(std::shared_ptr<const Node>{}, ins.node)));
        if (node.size() > 200) node = node.substr(0, 200) + "...";
        throw DomainError(node, bad, "domain error in '" + node + "' at argument value " + std::to_string(bad));
      }
      throw DomainError("?", v, "domain error (NaN input)");
    }
    out[o] = v;
  }
}

double Tape::eval1(std::span<const double> in) const {
  double v = 0.0;
  eval(in, std::span<double>(&v, 1));
  return v;
}

}  // namespace oscint
