#include "oscint/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstring>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "oscint/tape.hpp"

namespace oscint {

Dims::Dims(int n_, int s_) : n(n_), s(s_) {
  if (n < 1 || s < 1) {
    throw InvalidArgument("Dims", "dimensions must be positive, got n=" + std::to_string(n) +
                                      " s=" + std::to_string(s));
  }
}

int MultiIndex::order_x() const { return std::accumulate(alpha.begin(), alpha.end(), 0); }
int MultiIndex::order_theta() const { return std::accumulate(beta.begin(), beta.end(), 0); }

std::vector<MultiIndex> MultiIndex::up_to(const Dims& d, int depth) {
  const int total = d.n + d.s;
  std::vector<MultiIndex> out;
  std::vector<int> cur(static_cast<std::size_t>(total), 0);
  // Enumerate compositions with sum == order for order = 0..depth.
  for (int order = 0; order <= depth; ++order) {
    std::vector<int> c(static_cast<std::size_t>(total), 0);
    auto rec = [&](auto&& self, int pos, int left) -> void {
      if (pos == total - 1) {
        c[static_cast<std::size_t>(pos)] = left;
        MultiIndex m;
        m.alpha.assign(c.begin(), c.begin() + d.n);
        m.beta.assign(c.begin() + d.n, c.end());
        out.push_back(std::move(m));
        return;
      }
      for (int v = left; v >= 0; --v) {
        c[static_cast<std::size_t>(pos)] = v;
        self(self, pos + 1, left - v);
      }
    };
    rec(rec, 0, order);
  }
  return out;
}

namespace {

// ---- exact-or-inexact numbers -------------------------------------------

struct Num {
  bool exact = true;
  std::int64_t p = 0;
  std::int64_t q = 1;
  double v = 0.0;

  static Num rat(__int128 a, __int128 b) {
    if (b < 0) {
      a = -a;
      b = -b;
    }
    __int128 g = a < 0 ? -a : a;
    __int128 h = b;
    while (h != 0) {
      const __int128 t = g % h;
      g = h;
      h = t;
    }
    if (g > 1) {
      a /= g;
      b /= g;
    }
    constexpr __int128 lim = std::numeric_limits<std::int64_t>::max();
    if (a > lim || a < -lim || b > lim) return real(static_cast<double>(a) / static_cast<double>(b));
    Num n;
    n.p = static_cast<std::int64_t>(a);
    n.q = static_cast<std::int64_t>(b);
    n.v = static_cast<double>(n.p) / static_cast<double>(n.q);
    return n;
  }
  static Num real(double x) {
    Num n;
    n.exact = false;
    n.v = x;
    return n;
  }
  static Num of(const Node& c) { return c.exact ? rat(c.num, c.den) : real(c.value); }

  bool is_zero() const { return exact ? p == 0 : v == 0.0; }
  bool is_one() const { return exact ? (p == 1 && q == 1) : false; }
  bool negative() const { return exact ? p < 0 : v < 0.0; }

  friend Num operator+(const Num& a, const Num& b) {
    if (a.exact && b.exact) {
      return rat(static_cast<__int128>(a.p) * b.q + static_cast<__int128>(b.p) * a.q,
                 static_cast<__int128>(a.q) * b.q);
    }
    return real(a.v + b.v);
  }
  friend Num operator*(const Num& a, const Num& b) {
    if (a.exact && b.exact) {
      return rat(static_cast<__int128>(a.p) * b.p, static_cast<__int128>(a.q) * b.q);
    }
    return real(a.v * b.v);
  }
  Num neg() const { return exact ? rat(-static_cast<__int128>(p), q) : real(-v); }
  Num abs() const { return negative() ? neg() : *this; }
};

Num num_pow(Num b, int n) {
  if (!b.exact) return Num::real(std::pow(b.v, n));
  Num r = Num::rat(1, 1);
  bool inv = n < 0;
  int e = inv ? -n : n;
  Num base = b;
  while (e > 0 && r.exact) {
    if (e & 1) r = r * base;
    e >>= 1;
    if (e) base = base * base;
  }
  if (!r.exact) return Num::real(std::pow(b.v, n));
  if (inv) return Num::rat(r.q, r.p);
  return r;
}

// ---- hashing ---------------------------------------------------------------

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  v += 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  v ^= v >> 30;
  v *= 0xbf58476d1ce4e5b9ULL;
  v ^= v >> 27;
  v *= 0x94d049bb133111ebULL;
  v ^= v >> 31;
  return h ^ v;
}

std::uint64_t double_bits(double d) {
  std::uint64_t u;
  static_assert(sizeof(u) == sizeof(d));
  std::memcpy(&u, &d, sizeof(u));
  return u;
}

std::uint64_t structural_hash(const Node& n) {
  std::uint64_t h = mix(0x1234567ULL, static_cast<std::uint64_t>(n.op));
  switch (n.op) {
    case Op::Const:
      h = mix(h, n.exact ? 1 : 2);
      if (n.exact) {
        h = mix(h, static_cast<std::uint64_t>(n.num));
        h = mix(h, static_cast<std::uint64_t>(n.den));
      } else {
        h = mix(h, double_bits(n.value));
      }
      break;
    case Op::Var:
      h = mix(h, static_cast<std::uint64_t>(n.var.axis));
      h = mix(h, static_cast<std::uint64_t>(n.var.index));
      break;
    default:
      h = mix(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(n.ival)));
      for (const auto& k : n.kids) h = mix(h, k.get()->hash);
  }
  return h;
}

bool shallow_equal(const Node& a, const Node& b) {
  if (a.op != b.op || a.ival != b.ival || a.kids.size() != b.kids.size()) return false;
  switch (a.op) {
    case Op::Const:
      if (a.exact != b.exact) return false;
      return a.exact ? (a.num == b.num && a.den == b.den) : double_bits(a.value) == double_bits(b.value);
    case Op::Var:
      return a.var == b.var;
    default:
      for (std::size_t i = 0; i < a.kids.size(); ++i) {
        if (a.kids[i] != b.kids[i]) return false;
      }
      return true;
  }
}

// Global intern table. Weak references so unused expressions are freed.
class Interner {
 public:
  Expr intern(Node&& n) {
    n.hash = structural_hash(n);
    std::lock_guard<std::mutex> lock(mu_);
    auto [lo, hi] = table_.equal_range(n.hash);
    for (auto it = lo; it != hi; ++it) {
      if (auto sp = it->second.lock()) {
        if (shallow_equal(*sp, n)) return Expr(std::move(sp));
      }
    }
    auto sp = std::make_shared<const Node>(std::move(n));
    table_.emplace(sp->hash, sp);
    if (table_.size() > sweep_at_) sweep();
    return Expr(std::move(sp));
  }

 private:
  void sweep() {
    for (auto it = table_.begin(); it != table_.end();) {
      if (it->second.expired()) {
        it = table_.erase(it);
      } else {
        ++it;
      }
    }
    sweep_at_ = std::max<std::size_t>(1 << 16, 2 * table_.size());
  }

  std::mutex mu_;
  std::unordered_multimap<std::uint64_t, std::weak_ptr<const Node>> table_;
  std::size_t sweep_at_ = 1 << 16;
};

Interner& interner() {
  static Interner* in = new Interner();  // intentionally leaked; outlives static Exprs
  return *in;
}

Expr make_const(const Num& v) {
  Node n;
  n.op = Op::Const;
  n.exact = v.exact;
  if (v.exact) {
    n.num = v.p;
    n.den = v.q;
    n.value = v.v;
  } else {
    n.value = v.v;
  }
  return interner().intern(std::move(n));
}

Expr make_node(Op op, std::vector<Expr> kids, int ival = 0) {
  Node n;
  n.op = op;
  n.ival = ival;
  n.kids = std::move(kids);
  return interner().intern(std::move(n));
}

Num const_num(const Expr& e) { return Num::of(e.node()); }

int op_rank(Op op) {
  switch (op) {
    case Op::Const: return 0;
    case Op::Var: return 1;
    case Op::Sqrt: return 2;
    case Op::Exp: return 3;
    case Op::Sin: return 4;
    case Op::Cos: return 5;
    case Op::Flat: return 6;
    case Op::Pow: return 7;
    case Op::Mul: return 8;
    case Op::Add: return 9;
  }
  return 10;
}

// Split a product into (base, exponent) for power merging.
std::pair<Expr, int> base_exp(const Expr& f) {
  if (f.op() == Op::Pow) return {f.node().kids[0], f.node().ival};
  return {f, 1};
}

// Split a sum term into (coefficient, rest).
std::pair<Num, Expr> coef_rest(const Expr& t) {
  if (t.op() == Op::Mul) {
    const auto& k = t.node().kids;
    if (!k.empty() && k[0].is_const()) {
      if (k.size() == 2) return {const_num(k[0]), k[1]};
      std::vector<Expr> rest(k.begin() + 1, k.end());
      return {const_num(k[0]), make_node(Op::Mul, std::move(rest))};
    }
  }
  return {Num::rat(1, 1), t};
}

}  // namespace

// ---- Expr -----------------------------------------------------------------

Expr::Expr() : Expr(make_const(Num::rat(0, 1))) {}
Op Expr::op() const { return node_->op; }
bool Expr::is_zero() const { return node_->op == Op::Const && Num::of(*node_).is_zero(); }
bool Expr::is_one() const {
  return node_->op == Op::Const && node_->exact && node_->num == 1 && node_->den == 1;
}
double Expr::const_value() const { return node_->value; }

int compare(const Expr& a, const Expr& b) {
  if (a == b) return 0;
  const Node& x = a.node();
  const Node& y = b.node();
  const int ra = op_rank(x.op), rb = op_rank(y.op);
  if (ra != rb) return ra < rb ? -1 : 1;
  switch (x.op) {
    case Op::Const:
      if (x.value != y.value) return x.value < y.value ? -1 : 1;
      if (x.exact != y.exact) return x.exact ? -1 : 1;
      break;
    case Op::Var:
      if (x.var.axis != y.var.axis) return x.var.axis < y.var.axis ? -1 : 1;
      if (x.var.index != y.var.index) return x.var.index < y.var.index ? -1 : 1;
      break;
    case Op::Pow: {
      const int c = compare(x.kids[0], y.kids[0]);
      if (c != 0) return c;
      if (x.ival != y.ival) return x.ival < y.ival ? -1 : 1;
      break;
    }
    case Op::Sqrt:
    case Op::Exp:
    case Op::Sin:
    case Op::Cos:
    case Op::Flat: {
      if (x.ival != y.ival) return x.ival < y.ival ? -1 : 1;
      const int c = compare(x.kids[0], y.kids[0]);
      if (c != 0) return c;
      break;
    }
    case Op::Add:
    case Op::Mul: {
      // Lexicographic on non-constant operands, then arity.
      std::size_t i = !x.kids.empty() && x.kids[0].is_const() ? 1 : 0;
      std::size_t j = !y.kids.empty() && y.kids[0].is_const() ? 1 : 0;
      for (; i < x.kids.size() && j < y.kids.size(); ++i, ++j) {
        const int c = compare(x.kids[i], y.kids[j]);
        if (c != 0) return c;
      }
      if (x.kids.size() != y.kids.size()) return x.kids.size() < y.kids.size() ? -1 : 1;
      break;
    }
  }
  if (x.hash != y.hash) return x.hash < y.hash ? -1 : 1;
  // Hash collision between distinct nodes: fall back to a deep comparison.
  for (std::size_t i = 0; i < std::min(x.kids.size(), y.kids.size()); ++i) {
    const int c = compare(x.kids[i], y.kids[i]);
    if (c != 0) return c;
  }
  return a.get() < b.get() ? -1 : 1;
}

Expr constant(std::int64_t num, std::int64_t den) {
  if (den == 0) throw InvalidArgument("constant", "zero denominator");
  return make_const(Num::rat(num, den));
}
Expr literal(double v) { return make_const(Num::real(v)); }

Expr variable(Var v) {
  Node n;
  n.op = Op::Var;
  n.var = v;
  return interner().intern(std::move(n));
}

Expr add(std::vector<Expr> terms) {
  Num cst = Num::rat(0, 1);
  std::vector<std::pair<Expr, Num>> groups;
  std::unordered_map<const Node*, std::size_t> where;
  auto push = [&](const Expr& t) {
    if (t.is_const()) {
      cst = cst + const_num(t);
      return;
    }
    auto [c, rest] = coef_rest(t);
    auto it = where.find(rest.get());
    if (it == where.end()) {
      where.emplace(rest.get(), groups.size());
      groups.emplace_back(rest, c);
    } else {
      groups[it->second].second = groups[it->second].second + c;
    }
  };
  for (const auto& t : terms) {
    if (t.op() == Op::Add) {
      for (const auto& k : t.node().kids) push(k);
    } else {
      push(t);
    }
  }
  std::vector<std::pair<Expr, Num>> kept;
  for (auto& g : groups) {
    if (!g.second.is_zero()) kept.push_back(std::move(g));
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    const int c = compare(a.first, b.first);
    if (c != 0) return c < 0;
    return a.second.v < b.second.v;
  });
  std::vector<Expr> out;
  out.reserve(kept.size() + 1);
  for (auto& [rest, c] : kept) {
    if (c.is_one()) {
      out.push_back(rest);
    } else if (rest.op() == Op::Mul) {
      std::vector<Expr> f;
      f.reserve(rest.node().kids.size() + 1);
      f.push_back(make_const(c));
      f.insert(f.end(), rest.node().kids.begin(), rest.node().kids.end());
      out.push_back(make_node(Op::Mul, std::move(f)));
    } else {
      out.push_back(make_node(Op::Mul, {make_const(c), rest}));
    }
  }
  if (!cst.is_zero()) out.push_back(make_const(cst));
  if (out.empty()) return make_const(Num::rat(0, 1));
  if (out.size() == 1) return out[0];
  return make_node(Op::Add, std::move(out));
}

Expr mul(std::vector<Expr> factors) {
  Num coef = Num::rat(1, 1);
  std::vector<std::pair<Expr, int>> groups;
  std::unordered_map<const Node*, std::size_t> where;
  auto push = [&](const Expr& f) {
    if (f.is_const()) {
      coef = coef * const_num(f);
      return;
    }
    auto [b, e] = base_exp(f);
    auto it = where.find(b.get());
    if (it == where.end()) {
      where.emplace(b.get(), groups.size());
      groups.emplace_back(b, e);
    } else {
      groups[it->second].second += e;
    }
  };
  for (const auto& f : factors) {
    if (f.op() == Op::Mul) {
      for (const auto& k : f.node().kids) push(k);
    } else {
      push(f);
    }
  }
  if (coef.is_zero()) return make_const(Num::rat(0, 1));
  // sqrt(u)^(2q + r) -> u^q * sqrt(u)^r; re-run when anything was rewritten.
  bool rewrote = false;
  std::vector<Expr> again;
  for (auto& [b, e] : groups) {
    if (b.op() == Op::Sqrt && (e >= 2 || e <= -2)) {
      const int q = e / 2;
      const int r = e - 2 * q;
      again.push_back(pow(b.node().kids[0], q));
      if (r != 0) again.push_back(pow(b, r));
      rewrote = true;
    } else if (e != 0) {
      again.push_back(e == 1 ? b : make_node(Op::Pow, {b}, e));
    }
  }
  if (rewrote) {
    again.push_back(make_const(coef));
    return mul(std::move(again));
  }
  std::vector<std::pair<Expr, int>> kept;
  for (auto& g : groups) {
    if (g.second != 0) kept.push_back(std::move(g));
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    const int c = compare(a.first, b.first);
    if (c != 0) return c < 0;
    return a.second < b.second;
  });
  // c * (u + v) -> c*u + c*v for a numeric coefficient c.
  if (!coef.is_one() && kept.size() == 1 && kept[0].second == 1 && kept[0].first.op() == Op::Add) {
    std::vector<Expr> terms;
    for (const auto& t : kept[0].first.node().kids) terms.push_back(mul({make_const(coef), t}));
    return add(std::move(terms));
  }
  std::vector<Expr> out;
  out.reserve(kept.size() + 1);
  if (!coef.is_one()) out.push_back(make_const(coef));
  for (auto& [b, e] : kept) out.push_back(e == 1 ? b : make_node(Op::Pow, {b}, e));
  if (out.empty()) return make_const(Num::rat(1, 1));
  if (out.size() == 1) return out[0];
  return make_node(Op::Mul, std::move(out));
}

Expr pow(const Expr& base, int exponent) {
  if (exponent == 0) return make_const(Num::rat(1, 1));
  if (exponent == 1) return base;
  switch (base.op()) {
    case Op::Const: {
      const Num b = const_num(base);
      if (b.is_zero() && exponent < 0) return make_node(Op::Pow, {base}, exponent);
      return make_const(num_pow(b, exponent));
    }
    case Op::Pow: {
      const long long e = static_cast<long long>(base.node().ival) * exponent;
      if (e > std::numeric_limits<int>::max() || e < std::numeric_limits<int>::min()) {
        throw InvalidArgument("pow", "exponent overflow");
      }
      return pow(base.node().kids[0], static_cast<int>(e));
    }
    case Op::Mul: {
      std::vector<Expr> f;
      f.reserve(base.node().kids.size());
      for (const auto& k : base.node().kids) f.push_back(pow(k, exponent));
      return mul(std::move(f));
    }
    case Op::Sqrt:
      if (exponent >= 2 || exponent <= -2) return mul({make_node(Op::Pow, {base}, exponent)});
      break;
    default:
      break;
  }
  return make_node(Op::Pow, {base}, exponent);
}

Expr sqrt(const Expr& e) {
  if (e.is_const()) {
    const Num v = const_num(e);
    if (v.exact && v.p >= 0) {
      const auto rp = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(v.p))));
      const auto rq = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(v.q))));
      if (rp * rp == v.p && rq * rq == v.q) return make_const(Num::rat(rp, rq));
    } else if (!v.exact && v.v >= 0.0) {
      return make_const(Num::real(std::sqrt(v.v)));
    }
  }
  return make_node(Op::Sqrt, {e});
}

Expr exp(const Expr& e) {
  if (e.is_zero()) return make_const(Num::rat(1, 1));
  if (e.is_const() && !e.node().exact) return make_const(Num::real(std::exp(e.const_value())));
  return make_node(Op::Exp, {e});
}

Expr sin(const Expr& e) {
  if (e.is_zero()) return e;
  if (e.is_const() && !e.node().exact) return make_const(Num::real(std::sin(e.const_value())));
  return make_node(Op::Sin, {e});
}

Expr cos(const Expr& e) {
  if (e.is_zero()) return make_const(Num::rat(1, 1));
  if (e.is_const() && !e.node().exact) return make_const(Num::real(std::cos(e.const_value())));
  return make_node(Op::Cos, {e});
}

namespace {
double flat_value(double u, int k) {
  if (!(u > 1.0 / 700.0)) return u > 0.0 ? 0.0 : (std::isnan(u) ? u : 0.0);
  return std::exp(-1.0 / u) * std::pow(u, -k);
}
}  // namespace

Expr flat(const Expr& e, int k) {
  if (k < 0) throw InvalidArgument("flat", "order must be non-negative");
  if (e.is_const()) {
    const double u = e.const_value();
    if (u <= 0.0) return make_const(Num::rat(0, 1));
    return make_const(Num::real(flat_value(u, k)));
  }
  return make_node(Op::Flat, {e}, k);
}

Expr operator+(const Expr& a, const Expr& b) { return add({a, b}); }
Expr operator-(const Expr& a, const Expr& b) { return add({a, mul({constant(-1), b})}); }
Expr operator*(const Expr& a, const Expr& b) { return mul({a, b}); }
Expr operator/(const Expr& a, const Expr& b) { return mul({a, pow(b, -1)}); }
Expr operator-(const Expr& a) { return mul({constant(-1), a}); }
Expr operator+(const Expr& a, double b) { return add({a, literal(b)}); }
Expr operator*(double a, const Expr& b) { return mul({literal(a), b}); }

Expr theta_norm2(int s) {
  std::vector<Expr> t;
  for (int j = 0; j < s; ++j) t.push_back(pow(variable(Theta(j)), 2));
  return add(std::move(t));
}

Expr x_norm2(int n) {
  std::vector<Expr> t;
  for (int i = 0; i < n; ++i) t.push_back(pow(variable(X(i)), 2));
  return add(std::move(t));
}

// ---- inspection -------------------------------------------------------------

std::size_t node_count(std::span<const Expr> roots) {
  std::unordered_set<const Node*> seen;
  std::vector<const Node*> stack;
  for (const auto& r : roots) stack.push_back(r.get());
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    for (const auto& k : n->kids) stack.push_back(k.get());
  }
  return seen.size();
}

std::size_t node_count(const Expr& e) { return node_count(std::span<const Expr>(&e, 1)); }

namespace {
template <class Pred>
bool any_var(const Expr& e, Pred pred) {
  std::unordered_set<const Node*> seen;
  std::vector<const Node*> stack{e.get()};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    if (n->op == Op::Var && pred(n->var)) return true;
    for (const auto& k : n->kids) stack.push_back(k.get());
  }
  return false;
}
}  // namespace

bool depends_on(const Expr& e, Axis axis) {
  return any_var(e, [axis](const Var& v) { return v.axis == axis; });
}
bool depends_on(const Expr& e, Var v) {
  return any_var(e, [v](const Var& w) { return w == v; });
}

// ---- formatting ---------------------------------------------------------------

namespace {

std::string fmt_num(const Num& v) {
  if (v.exact) {
    std::string s = std::to_string(v.p);
    if (v.q != 1) s += "/" + std::to_string(v.q);
    return s;
  }
  // Inexact literals always carry an exponent so they re-parse as inexact.
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v.v, std::chars_format::scientific);
  return std::string(buf, res.ptr);
}

std::string var_name(const Var& v) {
  const char c = v.axis == Axis::X ? 'x' : (v.axis == Axis::Theta ? 't' : 'k');
  return c + std::to_string(v.index + 1);
}

std::string fmt(const Expr& e);

// Is a term printed with a leading minus? Returns its magnitude form.
bool negative_term(const Expr& t, Expr& magnitude) {
  if (t.is_const()) {
    const Num v = const_num(t);
    if (v.negative()) {
      magnitude = make_const(v.neg());
      return true;
    }
    return false;
  }
  if (t.op() == Op::Mul) {
    const auto& k = t.node().kids;
    if (k[0].is_const() && const_num(k[0]).negative()) {
      std::vector<Expr> f(k.begin(), k.end());
      f[0] = make_const(const_num(k[0]).neg());
      magnitude = mul(std::move(f));
      return true;
    }
  }
  return false;
}

std::string fmt_atom(const Expr& e) {
  switch (e.op()) {
    case Op::Var:
    case Op::Sqrt:
    case Op::Exp:
    case Op::Sin:
    case Op::Cos:
    case Op::Flat:
      return fmt(e);
    case Op::Const: {
      const Num v = const_num(e);
      if (v.exact && v.q == 1 && v.p >= 0) return fmt(e);
      return "(" + fmt(e) + ")";
    }
    default:
      return "(" + fmt(e) + ")";
  }
}

std::string fmt_power(const Expr& base, int n) {
  std::string s = fmt_atom(base);
  if (n != 1) s += "^" + std::to_string(n);
  return s;
}

std::string fmt_factor(const Expr& f) {
  if (f.op() == Op::Pow) return fmt_power(f.node().kids[0], f.node().ival);
  if (f.op() == Op::Add) return "(" + fmt(f) + ")";
  return fmt_atom(f);
}

std::string fmt_mul(const Expr& e) {
  const auto& k = e.node().kids;
  std::string sign;
  Num coef = Num::rat(1, 1);
  std::size_t i = 0;
  if (k[0].is_const()) {
    coef = const_num(k[0]);
    i = 1;
  }
  if (coef.negative()) {
    sign = "-";
    coef = coef.neg();
  }
  std::vector<std::string> numer, denom;
  for (; i < k.size(); ++i) {
    const Expr& f = k[i];
    if (f.op() == Op::Pow && f.node().ival < 0) {
      denom.push_back(fmt_power(f.node().kids[0], -f.node().ival));
    } else {
      numer.push_back(fmt_factor(f));
    }
  }
  std::string s = sign;
  bool first = true;
  if (!coef.is_one() || numer.empty()) {
    s += fmt_num(coef);
    first = false;
  }
  for (const auto& n : numer) {
    if (!first) s += "*";
    s += n;
    first = false;
  }
  for (const auto& d : denom) s += "/" + d;
  return s;
}

std::string fmt(const Expr& e) {
  const Node& n = e.node();
  switch (n.op) {
    case Op::Const:
      return fmt_num(Num::of(n));
    case Op::Var:
      return var_name(n.var);
    case Op::Sqrt:
      return "sqrt(" + fmt(n.kids[0]) + ")";
    case Op::Exp:
      return "exp(" + fmt(n.kids[0]) + ")";
    case Op::Sin:
      return "sin(" + fmt(n.kids[0]) + ")";
    case Op::Cos:
      return "cos(" + fmt(n.kids[0]) + ")";
    case Op::Flat:
      return "flat" + (n.ival ? std::to_string(n.ival) : std::string()) + "(" + fmt(n.kids[0]) + ")";
    case Op::Pow:
      if (n.ival < 0) return "1/" + fmt_power(n.kids[0], -n.ival);
      return fmt_power(n.kids[0], n.ival);
    case Op::Mul:
      return fmt_mul(e);
    case Op::Add: {
      std::string s;
      for (std::size_t i = 0; i < n.kids.size(); ++i) {
        Expr mag;
        const bool neg = negative_term(n.kids[i], mag);
        if (i == 0) {
          s += fmt(n.kids[i]);
        } else if (neg) {
          s += " - " + fmt(mag);
        } else {
          s += " + " + fmt(n.kids[i]);
        }
      }
      return s;
    }
  }
  return "?";
}

}  // namespace

std::string format(const Expr& e) { return fmt(e); }

// ---- parsing --------------------------------------------------------------------

namespace {

class Parser {
 public:
  Parser(std::string_view text, const Dims& dims, ParseOptions opts)
      : text_(text), dims_(dims), opts_(opts) {}

  Expr run() {
    Expr e = expr();
    skip_ws();
    if (pos_ != text_.size()) fail({"+", "-", "*", "/", "end of input"});
    return e;
  }

 private:
  std::string_view text_;
  Dims dims_;
  ParseOptions opts_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(std::vector<std::string> expected) const {
    std::string msg = "syntax error at position " + std::to_string(pos_) + ": expected ";
    for (std::size_t i = 0; i < expected.size(); ++i) msg += (i ? " | " : "") + expected[i];
    if (pos_ < text_.size()) {
      msg += ", found '";
      msg += text_[pos_];
      msg += "'";
    } else {
      msg += ", found end of input";
    }
    throw SyntaxError(pos_, std::move(expected), msg);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expr expr() {
    std::vector<Expr> terms{term()};
    for (;;) {
      if (accept('+')) {
        terms.push_back(term());
      } else if (accept('-')) {
        terms.push_back(-term());
      } else {
        break;
      }
    }
    return add(std::move(terms));
  }

  Expr term() {
    Expr acc = factor();
    for (;;) {
      if (accept('*')) {
        acc = acc * factor();
      } else if (accept('/')) {
        acc = acc / factor();
      } else {
        break;
      }
    }
    return acc;
  }

  Expr factor() {
    if (accept('-')) return -factor();
    Expr a = atom();
    if (accept('^')) {
      skip_ws();
      bool neg = false;
      if (pos_ < text_.size() && text_[pos_] == '-') {
        neg = true;
        ++pos_;
      }
      const std::size_t start = pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      if (start == pos_) fail({"integer exponent"});
      int n = 0;
      auto res = std::from_chars(text_.data() + start, text_.data() + pos_, n);
      if (res.ec != std::errc()) {
        pos_ = start;
        fail({"integer exponent"});
      }
      a = pow(a, neg ? -n : n);
    }
    return a;
  }

  Expr number() {
    const std::size_t start = pos_;
    std::int64_t mant = 0;
    int digits = 0, frac = 0;
    bool overflow = false;
    auto take_digits = [&](bool fractional) {
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        if (digits < 18) {
          mant = mant * 10 + (text_[pos_] - '0');
          if (mant != 0 || digits > 0) ++digits;
          if (fractional) ++frac;
        } else {
          overflow = true;
        }
        ++pos_;
      }
    };
    take_digits(false);
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      take_digits(true);
    }
    bool has_exp = false;
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      has_exp = true;
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      const std::size_t es = pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      if (es == pos_) fail({"exponent digits"});
    }
    if (has_exp || overflow) {
      double v = 0.0;
      auto res = std::from_chars(text_.data() + start, text_.data() + pos_, v);
      if (res.ec != std::errc()) {
        pos_ = start;
        fail({"number"});
      }
      return literal(v);
    }
    std::int64_t den = 1;
    for (int i = 0; i < frac; ++i) den *= 10;
    return constant(mant, den);
  }

  Expr atom() {
    skip_ws();
    if (pos_ >= text_.size()) fail({"number", "variable", "function", "("});
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (c == '(') {
      ++pos_;
      Expr e = expr();
      if (!accept(')')) fail({")"});
      return e;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
        ++pos_;
      }
      const std::string name(text_.substr(start, pos_ - start));
      if (name == "sqrt" || name == "exp" || name == "sin" || name == "cos" ||
          name.rfind("flat", 0) == 0) {
        int k = 0;
        if (name.size() > 4 && name.rfind("flat", 0) == 0) {
          const auto suffix = name.substr(4);
          if (!std::all_of(suffix.begin(), suffix.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
            unknown(name, start);
          }
          k = std::stoi(suffix);
        }
        if (!accept('(')) fail({"("});
        Expr arg = expr();
        if (!accept(')')) fail({")"});
        if (name == "sqrt") return sqrt(arg);
        if (name == "exp") return exp(arg);
        if (name == "sin") return sin(arg);
        if (name == "cos") return cos(arg);
        return flat(arg, k);
      }
      return variable_ref(name, start);
    }
    fail({"number", "variable", "function", "("});
  }

  [[noreturn]] void unknown(const std::string& name, std::size_t) const {
    throw UnknownVariable("parse", "unknown variable '" + name + "' (declared n=" +
                                       std::to_string(dims_.n) + ", s=" + std::to_string(dims_.s) +
                                       ")");
  }

  Expr variable_ref(const std::string& name, std::size_t start) {
    if (name.size() < 2) unknown(name, start);
    const char c = name[0];
    const std::string digits = name.substr(1);
    if (!std::all_of(digits.begin(), digits.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); }) ||
        digits[0] == '0') {
      unknown(name, start);
    }
    const int idx = std::stoi(digits) - 1;
    if (c == 'x' && idx < dims_.n) return variable(X(idx));
    if (c == 't' && idx < dims_.s) return variable(Theta(idx));
    if (c == 'k' && opts_.allow_covector && idx < dims_.n) return variable(K(idx));
    unknown(name, start);
  }
};

}  // namespace

Expr parse(std::string_view text, const Dims& dims, ParseOptions opts) {
  return Parser(text, dims, opts).run();
}

// ---- differentiation and rewriting --------------------------------------------

namespace {

class Differ {
 public:
  explicit Differ(Var v) : v_(v) {}

  Expr d(const Expr& e) {
    auto it = memo_.find(e.get());
    if (it != memo_.end()) return it->second;
    Expr r = compute(e);
    memo_.emplace(e.get(), r);
    return r;
  }

 private:
  Var v_;
  std::unordered_map<const Node*, Expr> memo_;

  Expr compute(const Expr& e) {
    const Node& n = e.node();
    switch (n.op) {
      case Op::Const:
        return constant(0);
      case Op::Var:
        return constant(n.var == v_ ? 1 : 0);
      case Op::Add: {
        std::vector<Expr> t;
        for (const auto& k : n.kids) {
          Expr dk = d(k);
          if (!dk.is_zero()) t.push_back(std::move(dk));
        }
        return add(std::move(t));
      }
      case Op::Mul: {
        std::vector<Expr> t;
        for (std::size_t i = 0; i < n.kids.size(); ++i) {
          Expr dk = d(n.kids[i]);
          if (dk.is_zero()) continue;
          std::vector<Expr> f;
          f.reserve(n.kids.size());
          for (std::size_t j = 0; j < n.kids.size(); ++j) {
            f.push_back(i == j ? dk : n.kids[j]);
          }
          t.push_back(mul(std::move(f)));
        }
        return add(std::move(t));
      }
      case Op::Pow: {
        Expr db = d(n.kids[0]);
        if (db.is_zero()) return constant(0);
        return mul({constant(n.ival), pow(n.kids[0], n.ival - 1), db});
      }
      case Op::Sqrt: {
        Expr du = d(n.kids[0]);
        if (du.is_zero()) return constant(0);
        return mul({constant(1, 2), du, pow(e, -1)});
      }
      case Op::Exp: {
        Expr du = d(n.kids[0]);
        if (du.is_zero()) return constant(0);
        return mul({e, du});
      }
      case Op::Sin: {
        Expr du = d(n.kids[0]);
        if (du.is_zero()) return constant(0);
        return mul({cos(n.kids[0]), du});
      }
      case Op::Cos: {
        Expr du = d(n.kids[0]);
        if (du.is_zero()) return constant(0);
        return mul({constant(-1), sin(n.kids[0]), du});
      }
      case Op::Flat: {
        Expr du = d(n.kids[0]);
        if (du.is_zero()) return constant(0);
        const int k = n.ival;
        Expr g = k == 0 ? flat(n.kids[0], 2)
                        : add({flat(n.kids[0], k + 2), mul({constant(-k), flat(n.kids[0], k + 1)})});
        return mul({g, du});
      }
    }
    return constant(0);
  }
};

template <class Leaf>
class Rebuilder {
 public:
  explicit Rebuilder(Leaf leaf) : leaf_(std::move(leaf)) {}

  Expr r(const Expr& e) {
    auto it = memo_.find(e.get());
    if (it != memo_.end()) return it->second;
    Expr out = compute(e);
    memo_.emplace(e.get(), out);
    return out;
  }

 private:
  Leaf leaf_;
  std::unordered_map<const Node*, Expr> memo_;

  Expr compute(const Expr& e) {
    const Node& n = e.node();
    switch (n.op) {
      case Op::Const:
        return e;
      case Op::Var:
        return leaf_(e);
      case Op::Add:
      case Op::Mul: {
        std::vector<Expr> k;
        k.reserve(n.kids.size());
        for (const auto& c : n.kids) k.push_back(r(c));
        return n.op == Op::Add ? add(std::move(k)) : mul(std::move(k));
      }
      case Op::Pow:
        return pow(r(n.kids[0]), n.ival);
      case Op::Sqrt:
        return sqrt(r(n.kids[0]));
      case Op::Exp:
        return exp(r(n.kids[0]));
      case Op::Sin:
        return sin(r(n.kids[0]));
      case Op::Cos:
        return cos(r(n.kids[0]));
      case Op::Flat:
        return flat(r(n.kids[0]), n.ival);
    }
    return e;
  }
};

}  // namespace

Expr diff(const Expr& e, Var v) { return Differ(v).d(e); }

Expr diff(const Expr& e, const MultiIndex& idx) {
  Expr out = e;
  for (std::size_t i = 0; i < idx.alpha.size(); ++i) {
    for (int r = 0; r < idx.alpha[i]; ++r) out = diff(out, X(static_cast<int>(i)));
  }
  for (std::size_t j = 0; j < idx.beta.size(); ++j) {
    for (int r = 0; r < idx.beta[j]; ++r) out = diff(out, Theta(static_cast<int>(j)));
  }
  return out;
}

Expr simplify(const Expr& e) {
  auto id = [](const Expr& v) { return v; };
  return Rebuilder<decltype(id)>(id).r(e);
}

Expr substitute(const Expr& e, Var v, const Expr& with) {
  auto leaf = [v, with](const Expr& x) { return x.node().var == v ? with : x; };
  return Rebuilder<decltype(leaf)>(leaf).r(e);
}

double eval(const Expr& e, std::span<const double> x, std::span<const double> theta,
            std::span<const double> k) {
  int n = 1, s = 1;
  n = std::max<int>(n, static_cast<int>(x.size()));
  s = std::max<int>(s, static_cast<int>(theta.size()));
  const bool cov = !k.empty();
  Tape tape(e, Dims(n, s), cov);
  std::vector<double> in(tape.inputs(), 0.0);
  std::copy(x.begin(), x.end(), in.begin());
  std::copy(theta.begin(), theta.end(), in.begin() + n);
  if (cov) std::copy(k.begin(), k.end(), in.begin() + n + s);
  return tape.eval1(in);
}

// ---- complex pairs -----------------------------------------------------------------

CExpr operator+(const CExpr& a, const CExpr& b) { return {a.re + b.re, a.im + b.im}; }
CExpr operator*(const CExpr& a, const CExpr& b) {
  return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
}
CExpr cdiff(const CExpr& e, Var v) { return {diff(e.re, v), diff(e.im, v)}; }
CExpr csimplify(const CExpr& e) { return {simplify(e.re), simplify(e.im)}; }

}  // namespace oscint
