#pragma once

// Immutable, hash-consed expression DAG over position variables x1..xn,
// fiber variables t1..ts and (optionally) covector parameters k1..kn.
//
// Every Expr handed out is in normal form: constructors flatten sums and
// products, fold exact rational constants, merge equal powers/terms and sort
// commutative operands by a deterministic structural key. Two normalized
// expressions are structurally equal iff their node pointers are equal.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oscint/errors.hpp"

namespace oscint {

struct Dims {
  int n = 1;  // position dimension
  int s = 1;  // fiber dimension

  Dims() = default;
  Dims(int n_, int s_);
  bool operator==(const Dims&) const = default;
};

enum class Axis : std::uint8_t { X = 0, Theta = 1, K = 2 };

// Variable reference, 0-based index. Printed 1-based: x1, t1, k1.
struct Var {
  Axis axis = Axis::X;
  int index = 0;
  bool operator==(const Var&) const = default;
};

inline Var X(int i) { return {Axis::X, i}; }
inline Var Theta(int j) { return {Axis::Theta, j}; }
inline Var K(int j) { return {Axis::K, j}; }

struct MultiIndex {
  std::vector<int> alpha;  // over x axes
  std::vector<int> beta;   // over theta axes

  int order_x() const;
  int order_theta() const;
  int order() const { return order_x() + order_theta(); }

  // All (alpha, beta) with |alpha| + |beta| <= depth, in graded order.
  static std::vector<MultiIndex> up_to(const Dims& d, int depth);
};

// Node kinds. Sums/products are n-ary; subtraction, negation and division
// are represented through Add/Mul/Pow with rational coefficients. Flat is the
// smooth flat function u -> exp(-1/u) * u^(-k) for u > 0, 0 otherwise; it is
// the primitive from which every cutoff and bump is built.
enum class Op : std::uint8_t { Const, Var, Add, Mul, Pow, Sqrt, Exp, Sin, Cos, Flat };

struct Node;

class Expr {
 public:
  Expr();  // constant 0
  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

  const Node& node() const { return *node_; }
  const Node* get() const { return node_.get(); }
  Op op() const;

  bool is_const() const { return op() == Op::Const; }
  bool is_zero() const;
  bool is_one() const;
  double const_value() const;  // only for constants

  bool operator==(const Expr& o) const { return node_ == o.node_; }
  bool operator!=(const Expr& o) const { return node_ != o.node_; }

 private:
  std::shared_ptr<const Node> node_;
};

struct Node {
  Op op = Op::Const;
  // Const payload: exact rational (num/den) when exact, else value.
  bool exact = true;
  std::int64_t num = 0;
  std::int64_t den = 1;
  double value = 0.0;
  // Var payload.
  Var var{};
  // Pow exponent, or Flat order k.
  int ival = 0;
  std::vector<Expr> kids;
  // Deterministic structural hash (independent of addresses).
  std::uint64_t hash = 0;
};

// ---- construction ---------------------------------------------------------

Expr constant(std::int64_t num, std::int64_t den = 1);
Expr literal(double v);  // inexact constant
Expr variable(Var v);

Expr add(std::vector<Expr> terms);
Expr mul(std::vector<Expr> factors);
Expr pow(const Expr& base, int exponent);
Expr sqrt(const Expr& e);
Expr exp(const Expr& e);
Expr sin(const Expr& e);
Expr cos(const Expr& e);
Expr flat(const Expr& e, int k = 0);

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr operator+(const Expr& a, double b);
Expr operator*(double a, const Expr& b);

// |theta|^2 and |x|^2 as expressions.
Expr theta_norm2(int s);
Expr x_norm2(int n);

// ---- inspection -----------------------------------------------------------

// Number of distinct DAG nodes.
std::size_t node_count(const Expr& e);
// Number of distinct DAG nodes reachable from any of the roots.
std::size_t node_count(std::span<const Expr> roots);
bool depends_on(const Expr& e, Axis axis);
bool depends_on(const Expr& e, Var v);
// Total order used to sort commutative operands.
int compare(const Expr& a, const Expr& b);

// ---- parse / format -------------------------------------------------------

struct ParseOptions {
  bool allow_covector = false;  // accept k1..kn
};

Expr parse(std::string_view text, const Dims& dims, ParseOptions opts = {});
std::string format(const Expr& e);

// ---- calculus -------------------------------------------------------------

Expr diff(const Expr& e, Var v);
Expr diff(const Expr& e, const MultiIndex& idx);
// Normalizing rebuild; never increases node count.
Expr simplify(const Expr& e);
// Replace variables by expressions (map from Var to Expr).
Expr substitute(const Expr& e, Var v, const Expr& with);

// Point evaluation; throws DomainError. k may be empty when unused.
double eval(const Expr& e, std::span<const double> x, std::span<const double> theta,
            std::span<const double> k = {});

// Complex-valued expression carried as a (real, imaginary) pair.
struct CExpr {
  Expr re;
  Expr im;

  CExpr() = default;
  CExpr(Expr r) : re(std::move(r)), im() {}  // NOLINT(implicit)
  CExpr(Expr r, Expr i) : re(std::move(r)), im(std::move(i)) {}
  bool is_zero() const { return re.is_zero() && im.is_zero(); }
};

CExpr operator+(const CExpr& a, const CExpr& b);
CExpr operator*(const CExpr& a, const CExpr& b);
CExpr cdiff(const CExpr& e, Var v);
CExpr csimplify(const CExpr& e);

}  // namespace oscint
