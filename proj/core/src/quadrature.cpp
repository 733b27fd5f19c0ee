#include "oscint/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>

#include "cubature.hpp"
#include "oscint/errors.hpp"
#include "oscint/tape.hpp"

namespace oscint {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMaxLambda = 16384.0;

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

double sphere_area(int s) { return 2.0 * std::pow(std::numbers::pi, 0.5 * s) / std::tgamma(0.5 * s); }

// Flat-function step used by bumps: 0 for t <= 0, 1 for t >= 1.
double step_h(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double g0 = std::exp(-1.0 / t);
  const double g1 = std::exp(-1.0 / (1.0 - t));
  return g0 / (g0 + g1);
}

// Radial part of the bump transform, B(rho) with f(r) = A (1 - h((r - r0)/(r1 - r0))).
double bump_radial_transform(int n, double r1, double amplitude, double rho) {
  const double r0 = 0.5 * r1;
  std::vector<double> gx, gw;
  gauss_legendre(16, gx, gw);
  const double nu = 0.5 * n - 1.0;
  auto kernel = [&](double r) {
    if (rho < 1e-12) return std::pow(r, n - 1);
    if (n == 1) return std::cos(rho * r);
    return std::cyl_bessel_j(nu, rho * r) * std::pow(r, 0.5 * n);
  };
  auto integrate = [&](double a, double b, int panels, bool transition) {
    double sum = 0.0;
    const double h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const double r = a + h * (p + 0.5 * (gx[i] + 1.0));
        const double prof = transition ? 1.0 - step_h((r - r0) / (r1 - r0)) : 1.0;
        sum += 0.5 * h * gw[i] * prof * kernel(r);
      }
    }
    return sum;
  };
  const int p0 = 2 + static_cast<int>(std::ceil(rho * r0 / 4.0));
  const int p1 = 8 + static_cast<int>(std::ceil(rho * (r1 - r0) / 4.0));
  const double integral = integrate(0.0, r0, p0, false) + integrate(r0, r1, p1, true);
  if (rho < 1e-12) return amplitude * sphere_area(n) * integral;
  if (n == 1) return amplitude * 2.0 * integral;
  return amplitude * std::pow(2.0 * std::numbers::pi, 0.5 * n) * std::pow(rho, -nu) * integral;
}

// Tabulated unit-amplitude radial transform for one (n, radius); cubic
// Lagrange interpolation on a grid of spacing 0.004 / radius. Relative
// interpolation error stays near 1e-10 since B varies on the scale 1 / radius.
class RadialTable {
 public:
  RadialTable(int n, double r1) : n_(n), r1_(r1), step_(0.004 / r1) {}

  double operator()(double rho) {
    const double u = rho / step_;
    const auto i = static_cast<std::size_t>(u);
    std::lock_guard<std::mutex> lock(mu_);
    while (values_.size() < i + 4) values_.push_back(bump_radial_transform(n_, r1_, 1.0, step_ * static_cast<double>(values_.size())));
    const std::size_t b = i == 0 ? 0 : i - 1;
    const double t = u - static_cast<double>(b);
    double sum = 0.0;
    for (std::size_t a = 0; a < 4; ++a) {
      double l = 1.0;
      for (std::size_t c = 0; c < 4; ++c) {
        if (c != a) l *= (t - static_cast<double>(c)) / (static_cast<double>(a) - static_cast<double>(c));
      }
      sum += l * values_[b + a];
    }
    return sum;
  }

 private:
  int n_;
  double r1_, step_;
  std::mutex mu_;
  std::vector<double> values_;
};

double radial_lookup(int n, double r1, double rho) {
  static std::mutex mu;
  static std::map<std::pair<int, double>, std::unique_ptr<RadialTable>> tables;
  RadialTable* t = nullptr;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = tables[{n, r1}];
    if (!slot) slot = std::make_unique<RadialTable>(n, r1);
    t = slot.get();
  }
  return (*t)(rho);
}

bool affine_in_x(const Expr& phi, const Dims& d) {
  for (int i = 0; i < d.n; ++i) {
    const Expr gi = diff(phi, X(i));
    for (int j = i; j < d.n; ++j) {
      if (!simplify(diff(gi, X(j))).is_zero()) return false;
    }
  }
  return true;
}

bool spectral_ok(const SymbolFn& a, const PhaseFn& phi) {
  return !depends_on(a.expr.re, Axis::X) && !depends_on(a.expr.im, Axis::X) && affine_in_x(phi.expr, phi.dims);
}

CExpr times(const CExpr& a, const Expr& f) { return CExpr(a.re * f, a.im * f); }

// Sample points (x, theta) for seminorm estimates: x on a 4-grid of `box` (off-center, so
// bumps are not only sampled at their peak and rim),
// theta on seeded rays at dyadic radii up to 2^14.
struct RaySamples {
  std::vector<Vec> xs;
  std::vector<Vec> dirs;
  Vec lambdas;
};

RaySamples ray_samples(const Box& box, int s) {
  RaySamples r;
  r.xs = box.grid(4);
  r.dirs = direction_set(s);
  for (double l = 1.0; l <= kMaxLambda; l *= 2.0) r.lambdas.push_back(l);
  return r;
}

// Evaluates |re + i im| (first two tape outputs) along the sample rays and
// returns sup |u| (1+lambda)^(-M) over rungs >= lambda_min.
double sampled_seminorm(const Tape& tape, const RaySamples& smp, double M, double lambda_min, const Vec& k) {
  const Dims& d = tape.dims();
  const std::size_t ni = tape.inputs(), no = tape.outputs();
  std::vector<double> in, out;
  std::size_t count = 0;
  Vec weight;
  for (const auto& x : smp.xs) {
    for (const auto& dir : smp.dirs) {
      for (double l : smp.lambdas) {
        if (l < lambda_min) continue;
        for (int i = 0; i < d.n; ++i) in.push_back(x[static_cast<std::size_t>(i)]);
        for (int j = 0; j < d.s; ++j) in.push_back(l * dir[static_cast<std::size_t>(j)]);
        for (std::size_t i = 0; i < ni - static_cast<std::size_t>(d.n + d.s); ++i) in.push_back(k[i]);
        weight.push_back(std::pow(1.0 + l, -M));
        ++count;
      }
    }
  }
  if (count == 0) return 0.0;
  out.resize(count * no);
  tape.eval_batch(in, count, out);
  double S = 0.0;
  for (std::size_t p = 0; p < count; ++p) {
    const double v = std::hypot(out[p * no], out[p * no + 1]) * weight[p];
    if (std::isnan(v)) throw EvaluationFailed("seminorm", "integrand is NaN on a sample ray");
    S = std::max(S, v);
  }
  return S;
}

// Tail bound outside [-R, R]^s. Finite order M uses the global seminorm;
// order -inf uses the envelope of rungs beyond R against (1+|theta|)^(-s-1).
double tail_bound_for(const Tape& tape, const RaySamples& smp, double M, int s, double R, const Vec& k) {
  if (std::isinf(M) && M < 0) {
    const double Me = -s - 1.0;
    return sampled_seminorm(tape, smp, Me, R, k) * tail_integral(Me, s, R);
  }
  return sampled_seminorm(tape, smp, M, 0.0, k) * tail_integral(M, s, R);
}

double box_volume(const Box& b) {
  double v = 1.0;
  for (int i = 0; i < b.dim(); ++i) v *= b.hi[static_cast<std::size_t>(i)] - b.lo[static_cast<std::size_t>(i)];
  return v;
}

// Smallest R = R0 * 2^j (capped at R_max) whose tail bound is below 0.1 tol.
double pick_radius(const std::function<double(double)>& tail, const QuadOptions& o, double& bound) {
  double R = o.R0;
  bound = tail(R);
  while (bound >= 0.1 * o.tol && 2.0 * R <= o.R_max) {
    R *= 2.0;
    bound = tail(R);
  }
  return R;
}

// ---------------------------------------------------------------- nested rule

struct NestedOut {
  Complex value{};
  double err = kInf;
  std::int64_t nodes = 0;
  bool converged = false;
  bool lattice = false;
};

// Fallback when even the first tensor level exceeds the budget: randomly
// shifted lattice with 16 shifts, error = 3 standard errors, points
// quadrupled until the error meets tol or the budget runs out.
NestedOut lattice_rule(const Tape& tape, const Vec& lo, const Vec& hi, const Vec& base, double tol,
                       const QuadOptions& o, double& budget) {
  constexpr int kShifts = 16;
  NestedOut res;
  res.lattice = true;
  res.value = Complex(std::nan(""), std::nan(""));
  std::int64_t n = 1 << 12;
  auto cost = [&](std::int64_t pts) { return static_cast<double>(pts) * kShifts * static_cast<double>(tape.size()); };
  while (cost(n) <= budget) {
    const auto r = detail::lattice_oscillatory(tape, lo, hi, base, n, kShifts, o.seed, o.threads);
    budget -= cost(n);
    res.nodes += r.evals;
    res.value = r.value;
    res.err = 3.0 * r.std_error;
    if (res.err <= tol) break;
    n *= 4;
  }
  res.converged = res.err <= tol;
  return res;
}

// Tensor Gauss-Legendre over xbox x [-R, R]^s. Panel widths obey
// width <= pi / max|d phase| per axis (sampled); the order is then raised by
// two per level and the change between consecutive levels is the error
// estimate. `budget` (tape instructions) is decremented as levels run.
NestedOut nested_rule(const Tape& tape, const Tape& grad, const Box& xbox, double R, const Vec& k, double tol,
                      const QuadOptions& o, double& budget) {
  const Dims& d = tape.dims();
  const int D = d.n + d.s;
  Vec lo(static_cast<std::size_t>(D)), hi(static_cast<std::size_t>(D));
  for (int i = 0; i < d.n; ++i) {
    lo[static_cast<std::size_t>(i)] = xbox.lo[static_cast<std::size_t>(i)];
    hi[static_cast<std::size_t>(i)] = xbox.hi[static_cast<std::size_t>(i)];
  }
  for (int j = 0; j < d.s; ++j) {
    lo[static_cast<std::size_t>(d.n + j)] = -R;
    hi[static_cast<std::size_t>(d.n + j)] = R;
  }
  // Max |partial phase| per axis over a 3-per-axis grid of the domain.
  const Box dom(lo, hi);
  const auto pts = dom.grid(3);
  const std::size_t no = grad.outputs();
  std::vector<double> in, out(pts.size() * no);
  for (const auto& p : pts) {
    in.insert(in.end(), p.begin(), p.end());
    in.insert(in.end(), k.begin(), k.end());
  }
  grad.eval_batch(in, pts.size(), out);
  std::vector<int> panels(static_cast<std::size_t>(D), 1);
  for (int v = 0; v < D; ++v) {
    double K = 0.0;
    for (std::size_t p = 0; p < pts.size(); ++p) K = std::max(K, std::abs(out[p * no + static_cast<std::size_t>(v)]));
    const double w = hi[static_cast<std::size_t>(v)] - lo[static_cast<std::size_t>(v)];
    panels[static_cast<std::size_t>(v)] = std::max(v < d.n ? 2 : 1, static_cast<int>(std::ceil(w * K / std::numbers::pi)));
  }

  std::vector<int> slot(static_cast<std::size_t>(D));
  for (int v = 0; v < D; ++v) slot[static_cast<std::size_t>(v)] = v;
  Vec base(tape.inputs(), 0.0);
  for (std::size_t i = 0; i < k.size(); ++i) base[static_cast<std::size_t>(D) + i] = k[i];

  auto cost = [&](int q) {
    double c = static_cast<double>(tape.size());
    for (int v = 0; v < D; ++v) c *= static_cast<double>(panels[static_cast<std::size_t>(v)]) * q;
    return c;
  };
  NestedOut res;
  auto level = [&](int q) {
    std::vector<detail::TensorAxis> axes;
    std::int64_t count = 1;
    for (int v = 0; v < D; ++v) {
      axes.push_back(detail::composite_axis(lo[static_cast<std::size_t>(v)], hi[static_cast<std::size_t>(v)],
                                            panels[static_cast<std::size_t>(v)], q));
      count *= static_cast<std::int64_t>(axes.back().nodes.size());
    }
    budget -= cost(q);
    res.nodes += count;
    return detail::tensor_oscillatory(tape, axes, slot, base, o.threads);
  };

  constexpr int kMaxOrder = 32;
  int q = std::max(2, o.order);
  if (cost(q - 1) + cost(q) > budget) return lattice_rule(tape, lo, hi, base, tol, o, budget);
  Complex prev = level(q - 1 > 0 ? q - 1 : 1);
  Complex cur = level(q);
  double est = std::abs(cur - prev);
  while (est > tol) {
    int nq = q + 2;
    if (nq > kMaxOrder) {
      for (auto& m : panels) m *= 2;
      nq = std::max(2, o.order);
    }
    if (cost(nq) > budget) break;
    prev = cur;
    cur = level(nq);
    q = nq;
    est = std::abs(cur - prev);
  }
  res.value = cur;
  res.err = est;
  res.converged = est <= tol;
  return res;
}

// Integrates e^{i phase} amp over xbox x theta-space with R selection,
// reporting |Q(R) - Q(R/2)| in the error.
PairingResult integrate_nested(const CExpr& amp, double order, const Expr& phase, const Dims& d, const Box& xbox,
                               const Vec& k, const QuadOptions& o) {
  const bool cov = !k.empty();
  const std::vector<Expr> outs{amp.re, amp.im, phase};
  const Tape tape(outs, d, cov);
  std::vector<Expr> g;
  for (int i = 0; i < d.n; ++i) g.push_back(diff(phase, X(i)));
  for (int j = 0; j < d.s; ++j) g.push_back(diff(phase, Theta(j)));
  const Tape grad(g, d, cov);

  const RaySamples smp = ray_samples(xbox, d.s);
  const double vol = box_volume(xbox);
  PairingResult r;
  r.method = "nested";
  r.post_order = order;
  r.R = pick_radius([&](double R) { return vol * tail_bound_for(tape, smp, order, d.s, R, k); }, o, r.tail_bound);
  double budget = o.budget;
  const NestedOut half = nested_rule(tape, grad, xbox, 0.5 * r.R, k, 0.25 * o.tol, o, budget);
  const NestedOut full = nested_rule(tape, grad, xbox, r.R, k, 0.25 * o.tol, o, budget);
  r.value = full.value;
  r.quad_err = full.err;
  r.abs_err = full.err + std::abs(full.value - half.value);
  if (std::isnan(r.abs_err)) r.abs_err = kInf;
  r.nodes = half.nodes + full.nodes;
  r.converged = full.converged && r.abs_err + r.tail_bound <= o.tol;
  if (half.lattice || full.lattice) r.method = "lattice";
  return r;
}

// -------------------------------------------------------------- spectral rule

// x-first evaluation: for phi = phi0(theta) + x . g(theta) and a = a(theta),
//   int e^{i phi} a f dx = a e^{i phi0} fhat(g - k).
struct SpectralIntegrand {
  Tape tape;  // a.re, a.im, phi0, g_1..g_n
  const TestFn* f = nullptr;
  Vec k;
  Dims d;

  SpectralIntegrand(const SymbolFn& a, const PhaseFn& phi, const TestFn& fn, Vec kk) : f(&fn), k(std::move(kk)), d(phi.dims) {
    Expr phi0 = phi.expr;
    for (int i = 0; i < d.n; ++i) phi0 = substitute(phi0, X(i), constant(0));
    std::vector<Expr> outs{a.expr.re, a.expr.im, simplify(phi0)};
    for (int i = 0; i < d.n; ++i) outs.push_back(simplify(diff(phi.expr, X(i))));
    tape = Tape(outs, d);
  }

  void operator()(const double* th, std::size_t count, Complex* res) const {
    const std::size_t ni = tape.inputs(), no = tape.outputs();
    std::vector<double> in(count * ni, 0.0), out(count * no);
    for (std::size_t p = 0; p < count; ++p) {
      for (int j = 0; j < d.s; ++j) in[p * ni + static_cast<std::size_t>(d.n + j)] = th[p * static_cast<std::size_t>(d.s) + static_cast<std::size_t>(j)];
    }
    tape.eval_batch(in, count, out);
    Vec q(static_cast<std::size_t>(d.n));
    const bool gauss = f->kind == TestFn::Kind::Gaussian;
    const double half_s2 = 0.5 * f->sigma() * f->sigma();
    const double pref = gauss ? f->amplitude * std::pow(2.0 * std::numbers::pi * f->sigma() * f->sigma(), 0.5 * d.n) : 0.0;
    for (std::size_t p = 0; p < count; ++p) {
      const double* o = out.data() + p * no;
      const Complex amp(o[0], o[1]);
      if (amp == Complex{}) {
        res[p] = 0.0;
        continue;
      }
      for (int i = 0; i < d.n; ++i) q[static_cast<std::size_t>(i)] = o[3 + i] - (k.empty() ? 0.0 : k[static_cast<std::size_t>(i)]);
      if (gauss) {
        // Gaussian transform inlined: one exp and one sincos per node.
        double q2 = 0.0, cq = o[2];
        for (int i = 0; i < d.n; ++i) {
          q2 += q[static_cast<std::size_t>(i)] * q[static_cast<std::size_t>(i)];
          cq += f->center[static_cast<std::size_t>(i)] * q[static_cast<std::size_t>(i)];
        }
        const double e = half_s2 * q2;
        res[p] = e > 745.0 ? Complex{} : amp * std::polar(pref * std::exp(-e), cq);
      } else {
        res[p] = amp * std::polar(1.0, o[2]) * f->transform(q);
      }
    }
  }

  // sup |F| (1+lambda)^(s+1) over sampled rays with lambda >= R.
  double envelope(const std::vector<Vec>& dirs, double R) const {
    std::vector<double> pts;
    Vec w;
    for (const auto& dir : dirs) {
      for (double l = 1.0; l <= kMaxLambda; l *= 2.0) {
        if (l < R) continue;
        for (double c : dir) pts.push_back(l * c);
        w.push_back(std::pow(1.0 + l, d.s + 1.0));
      }
    }
    std::vector<Complex> v(w.size());
    (*this)(pts.data(), w.size(), v.data());
    double S = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) S = std::max(S, std::abs(v[i]) * w[i]);
    return S;
  }

  // Initial panels per theta axis: width <= pi / max|d/dtheta (phi0 + c.(g - k))|.
  std::vector<int> initial_panels(double R, int max_panels) const {
    const Box cube = Box::cube(d.s, -R, R);
    const auto pts = cube.grid(5);
    const double h = 1e-5 * std::max(1.0, R);
    std::vector<int> m(static_cast<std::size_t>(d.s), 1);
    for (int j = 0; j < d.s; ++j) {
      std::vector<double> in;
      for (const auto& p : pts) {
        for (double sign : {-1.0, 1.0}) {
          Vec t = p;
          t[static_cast<std::size_t>(j)] += sign * h;
          in.insert(in.end(), t.begin(), t.end());
        }
      }
      const std::size_t ni = tape.inputs(), no = tape.outputs();
      std::vector<double> rows(2 * pts.size() * ni, 0.0), out(2 * pts.size() * no);
      for (std::size_t p = 0; p < 2 * pts.size(); ++p) {
        for (int jj = 0; jj < d.s; ++jj) rows[p * ni + static_cast<std::size_t>(d.n + jj)] = in[p * static_cast<std::size_t>(d.s) + static_cast<std::size_t>(jj)];
      }
      tape.eval_batch(rows, 2 * pts.size(), out);
      double K = 0.0;
      for (std::size_t p = 0; p < pts.size(); ++p) {
        auto phase = [&](std::size_t row) {
          const double* o = out.data() + row * no;
          double v = o[2];
          for (int i = 0; i < d.n; ++i) {
            v += f->center[static_cast<std::size_t>(i)] * (o[3 + i] - (k.empty() ? 0.0 : k[static_cast<std::size_t>(i)]));
          }
          return v;
        };
        const double g = (phase(2 * p + 1) - phase(2 * p)) / (2.0 * h);
        if (std::isfinite(g)) K = std::max(K, std::abs(g));
      }
      m[static_cast<std::size_t>(j)] = std::max(2, static_cast<int>(std::ceil(2.0 * R * K / std::numbers::pi)));
    }
    // Keep the initial partition well inside the panel cap.
    for (;;) {
      double total_panels = 1.0;
      for (int v : m) total_panels *= v;
      if (total_panels <= max_panels / 4.0) break;
      for (int& v : m) v = std::max(1, v / 2);
    }
    return m;
  }
};

PairingResult integrate_spectral(const SymbolFn& a, const PhaseFn& phi, const TestFn& f, const Vec& k,
                                 const QuadOptions& o) {
  const Dims& d = phi.dims;
  const SpectralIntegrand F(a, phi, f, k);
  const auto dirs = direction_set(d.s);
  PairingResult r;
  r.method = "spectral";
  r.post_order = a.order;
  const bool finite = std::isfinite(a.order) && a.order < -d.s;
  double S_a = 0.0;
  if (finite) {
    const std::vector<Expr> outs{a.expr.re, a.expr.im};
    const Tape at(outs, d);
    RaySamples smp = ray_samples(Box::cube(d.n, 0.0, 0.0), d.s);
    smp.xs = {Vec(static_cast<std::size_t>(d.n), 0.0)};
    S_a = sampled_seminorm(at, smp, a.order, 0.0, {});
  }
  // |int f e^{i x.q}| <= int |f| = |fhat(0)| for single-signed f.
  const double l1 = std::abs(f.transform(Vec(static_cast<std::size_t>(d.n), 0.0)));
  auto tail = [&](double R) {
    if (finite) return l1 * S_a * tail_integral(a.order, d.s, R);
    return F.envelope(dirs, R) * tail_integral(-d.s - 1.0, d.s, R);
  };
  r.R = pick_radius(tail, o, r.tail_bound);
  const detail::BatchFn fn = [&](const double* p, std::size_t c, Complex* out) { F(p, c, out); };
  auto run = [&](double R) {
    return detail::adaptive_cubature(fn, Vec(static_cast<std::size_t>(d.s), -R), Vec(static_cast<std::size_t>(d.s), R),
                                     F.initial_panels(R, o.max_panels), 0.25 * o.tol, 7, o.max_panels);
  };
  const auto half = run(0.5 * r.R);
  const auto full = run(r.R);
  r.value = full.value;
  r.quad_err = full.error;
  r.abs_err = full.error + std::abs(full.value - half.value);
  r.nodes = half.evals + full.evals;
  r.converged = full.converged && r.abs_err + r.tail_bound <= o.tol;
  return r;
}

// Spectral windowed Fourier value. The window transform confines the
// integrand to where grad_x phi is near k, which for large |k| is a small
// far-away region; a fixed cube around the origin would either miss it or
// waste almost every node. The region is located on dense rays (|F| above
// 1e-15 of its sampled max), boxed with a margin of one ray spacing, and
// integrated adaptively to a tolerance relative to the integrand's L1 mass.
FourierResult fourier_spectral(const SymbolFn& a, const PhaseFn& phi, const TestFn& psi, const Vec& k,
                               const QuadOptions& o) {
  const Dims& d = phi.dims;
  const SpectralIntegrand F(a, phi, psi, k);
  const std::size_t s = static_cast<std::size_t>(d.s);
  const auto dirs = direction_set(d.s, d.s == 1 ? 0 : std::max(256, default_direction_count(d.s)));
  const double step = std::pow(2.0, 0.25);
  Vec lambdas{0.0};
  for (double l = 0.25; l <= kMaxLambda; l *= step) lambdas.push_back(l);
  std::vector<double> pts;
  std::vector<double> lam;
  for (const auto& dir : dirs) {
    for (double l : lambdas) {
      for (double c : dir) pts.push_back(l * c);
      lam.push_back(l);
    }
  }
  std::vector<Complex> val(lam.size());
  F(pts.data(), lam.size(), val.data());
  double vmax = 0.0;
  for (const auto& v : val) {
    if (std::isnan(v.real()) || std::isnan(v.imag())) throw EvaluationFailed("windowed_fourier", "integrand is NaN on a sample ray");
    vmax = std::max(vmax, std::abs(v));
  }
  FourierResult out;
  out.method = "spectral";
  if (vmax == 0.0) {
    out.converged = true;
    return out;
  }
  const double spacing = 1.5 * std::pow(sphere_area(d.s) / static_cast<double>(dirs.size()), 1.0 / std::max(1, d.s - 1));
  Vec lo(s, kInf), hi(s, -kInf);
  double margin = 0.0;
  for (std::size_t p = 0; p < lam.size(); ++p) {
    if (std::abs(val[p]) < 1e-15 * vmax) continue;
    for (std::size_t j = 0; j < s; ++j) {
      lo[j] = std::min(lo[j], pts[p * s + j]);
      hi[j] = std::max(hi[j], pts[p * s + j]);
    }
    margin = std::max(margin, lam[p] * (d.s == 1 ? 0.0 : spacing) + lam[p] * (step - 1.0) + 0.25);
  }
  Vec ray_lo(lo), ray_hi(hi);
  for (std::size_t j = 0; j < s; ++j) {
    lo[j] = std::max(lo[j] - margin, -kMaxLambda);
    hi[j] = std::min(hi[j] + margin, kMaxLambda);
  }
  // The ray margin is generous in angle; a dense grid over the padded box
  // shrinks it back to the significant grid cells (never below the
  // significant ray samples).
  std::vector<double> gpts;
  std::vector<Complex> gval;
  {
    const int per_axis = std::max(5, static_cast<int>(std::floor(std::pow(2e5, 1.0 / static_cast<double>(s)))));
    const auto grid = Box(lo, hi).grid(per_axis);
    for (const auto& g : grid) gpts.insert(gpts.end(), g.begin(), g.end());
    gval.resize(grid.size());
    F(gpts.data(), grid.size(), gval.data());
    for (const auto& v : gval) vmax = std::max(vmax, std::abs(v));
    Vec glo(ray_lo), ghi(ray_hi);
    for (std::size_t p = 0; p < grid.size(); ++p) {
      if (!(std::abs(gval[p]) >= 1e-15 * vmax)) continue;
      for (std::size_t j = 0; j < s; ++j) {
        glo[j] = std::min(glo[j], gpts[p * s + j]);
        ghi[j] = std::max(ghi[j], gpts[p * s + j]);
      }
    }
    for (std::size_t j = 0; j < s; ++j) {
      const double cell = (hi[j] - lo[j]) / (per_axis - 1);
      lo[j] = std::max(lo[j], glo[j] - cell);
      hi[j] = std::min(hi[j], ghi[j] + cell);
    }
  }
  // Envelope outside the box against (1+|theta|)^(-s-1).
  double S = 0.0;
  auto outside = [&](const std::vector<double>& p, std::size_t row) {
    for (std::size_t j = 0; j < s; ++j) {
      if (p[row * s + j] < lo[j] || p[row * s + j] > hi[j]) return true;
    }
    return false;
  };
  auto radius = [&](const std::vector<double>& p, std::size_t row) {
    double r2 = 0.0;
    for (std::size_t j = 0; j < s; ++j) r2 += p[row * s + j] * p[row * s + j];
    return std::sqrt(r2);
  };
  for (std::size_t p = 0; p < lam.size(); ++p) {
    if (outside(pts, p)) S = std::max(S, std::abs(val[p]) * std::pow(1.0 + lam[p], d.s + 1.0));
  }
  for (std::size_t p = 0; p < gval.size(); ++p) {
    if (outside(gpts, p)) S = std::max(S, std::abs(gval[p]) * std::pow(1.0 + radius(gpts, p), d.s + 1.0));
  }
  const double tail = S * tail_integral(-d.s - 1.0, d.s, 0.0);

  // Initial partition: four wavelengths of the fastest oscillation over the
  // significant part of the box per panel (order 11 resolves that; adaptivity
  // refines the rest), capped at an eighth of the panel budget.
  const Box box(lo, hi);
  std::vector<int> m(s, 2);
  {
    const auto grid = box.grid(5);
    const double h = 1e-6 * std::max(1.0, margin);
    std::vector<double> q;
    for (const auto& g : grid) {
      for (std::size_t j = 0; j < s; ++j) {
        for (double sg : {-1.0, 1.0}) {
          Vec t = g;
          t[j] += sg * h;
          q.insert(q.end(), t.begin(), t.end());
        }
      }
    }
    std::vector<Complex> v(q.size() / s);
    F(q.data(), v.size(), v.data());
    for (std::size_t j = 0; j < s; ++j) {
      double K = 0.0;
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const Complex a0 = v[(g * s + j) * 2], a1 = v[(g * s + j) * 2 + 1];
        if (!(std::abs(a0) >= 1e-15 * vmax) || std::abs(a1) == 0.0) continue;
        K = std::max(K, std::abs(std::arg(a1 / a0)) / (2.0 * h));
      }
      m[j] = std::max(2, static_cast<int>(std::ceil((hi[j] - lo[j]) * K / (8.0 * std::numbers::pi))));
    }
    for (;;) {
      double tot = 1.0;
      for (int v2 : m) tot *= v2;
      if (tot <= o.max_panels / 8.0) break;
      for (int& v2 : m) v2 = std::max(2, v2 / 2);
      bool floor = true;
      for (int v2 : m) floor = floor && v2 == 2;
      if (floor) break;
    }
  }
  const detail::BatchFn fn = [&](const double* p, std::size_t c, Complex* r) { F(p, c, r); };
  const auto cub = detail::adaptive_cubature(fn, lo, hi, m, o.tol, 11, o.max_panels, o.fourier_rel_tol);
  out.value = cub.value;
  out.abs_err = cub.error + tail;
  out.mass = cub.mass;
  out.nodes = cub.evals;
  out.converged = out.abs_err <= std::max(o.tol, o.fourier_rel_tol * cub.mass) + tail;
  return out;
}

void finish(PairingResult& r, const QuadOptions& o, const char* op) {
  if (!r.converged && o.strict) {
    throw ToleranceNotReached(op, "error estimate " + fmt(r.abs_err) + " + tail " + fmt(r.tail_bound) +
                                      " exceeds tolerance " + fmt(o.tol) + " (R=" + fmt(r.R) + ")");
  }
}

void require_integrable(double order, int s, const char* op) {
  if (!(order < -s)) {
    throw NotConvergent(op, "amplitude order " + fmt(order) + " is not below -s = " + std::to_string(-s));
  }
}

}  // namespace

// ------------------------------------------------------------------ TestFn

TestFn TestFn::bump(Vec center, double radius, double amplitude) {
  if (!(radius > 0.0)) throw InvalidArgument("TestFn", "radius must be positive");
  return TestFn{Kind::Bump, std::move(center), radius, amplitude};
}

TestFn TestFn::gaussian(Vec center, double radius, double amplitude) {
  if (!(radius > 0.0)) throw InvalidArgument("TestFn", "radius must be positive");
  return TestFn{Kind::Gaussian, std::move(center), radius, amplitude};
}

double TestFn::support_radius() const { return kind == Kind::Bump ? radius : radius * 4.0 / 3.0; }

Box TestFn::support_box() const {
  Vec lo = center, hi = center;
  for (std::size_t i = 0; i < center.size(); ++i) {
    lo[i] -= support_radius();
    hi[i] += support_radius();
  }
  return {lo, hi};
}

Expr TestFn::expr() const {
  if (kind == Kind::Bump) return literal(amplitude) * build_bump(Axis::X, center, 0.5 * radius, radius).expr;
  std::vector<Expr> sq;
  for (std::size_t i = 0; i < center.size(); ++i) {
    sq.push_back(pow(variable(X(static_cast<int>(i))) - literal(center[i]), 2));
  }
  return literal(amplitude) * exp(literal(-0.5 / (sigma() * sigma())) * add(sq));
}

Complex TestFn::transform(std::span<const double> q) const {
  double cq = 0.0, q2 = 0.0;
  for (std::size_t i = 0; i < center.size(); ++i) {
    cq += center[i] * q[i];
    q2 += q[i] * q[i];
  }
  const Complex shift = std::polar(1.0, cq);
  const int n = dim();
  if (kind == Kind::Gaussian) {
    const double s2 = sigma() * sigma();
    return amplitude * std::pow(2.0 * std::numbers::pi * s2, 0.5 * n) * std::exp(-0.5 * s2 * q2) * shift;
  }
  return amplitude * radial_lookup(n, radius, std::sqrt(q2)) * shift;
}

// --------------------------------------------------------------- utilities

int choose_p(double m, double mu, int s, SmoothnessTarget target) {
  if (!(mu > 0.0)) throw InvalidArgument("choose_p", "mu must be positive");
  if (target == SmoothnessTarget::Pairing) {
    if (m <= -s - 1.0) return 0;
    return static_cast<int>(std::ceil((m + s + 1.0) / mu - 1e-12));
  }
  // Largest k >= 0 with m + k mu < -s.
  if (!(m < -s)) return -1;
  if (std::isinf(m)) return std::numeric_limits<int>::max();
  int k = static_cast<int>(std::floor((-s - m) / mu));
  while (k >= 0 && !(m + k * mu < -s)) --k;
  return k;
}

double tail_integral(double M, int s, double R) {
  if (std::isinf(M) && M < 0) return 0.0;
  if (!(M < -s)) return kInf;
  return sphere_area(s) * std::pow(1.0 + R, M + s) / (-M - s);
}

bool spectral_applicable(const SymbolFn& a, const PhaseFn& phi) { return spectral_ok(a, phi); }

const char* to_string(FourierPolicy p) {
  switch (p) {
    case FourierPolicy::Direct: return "direct";
    case FourierPolicy::Spectral: return "spectral";
    case FourierPolicy::ThetaReduced: return "theta-reduced";
    case FourierPolicy::FourierReduced: return "fourier-reduced";
  }
  return "?";
}

// ---------------------------------------------------------------- pairings

PairingResult pair_direct(const SymbolFn& a, const PhaseFn& phi, const TestFn& f, const QuadOptions& o) {
  const Dims& d = phi.dims;
  if (f.dim() != d.n) throw InvalidArgument("pair_direct", "test function dimension does not match the phase");
  require_integrable(a.order, d.s, "pair_direct");
  PairingResult r;
  if (a.expr.is_zero()) {
    r.converged = true;
    r.method = "zero";
    r.post_order = a.order;
    return r;
  }
  if (o.allow_spectral && spectral_ok(a, phi)) {
    r = integrate_spectral(a, phi, f, {}, o);
  } else {
    r = integrate_nested(times(a.expr, f.expr()), a.order, phi.expr, d, f.support_box(), {}, o);
  }
  finish(r, o, "pair_direct");
  return r;
}

PairingResult pair_regularized(const SymbolFn& a, const PhaseFn& phi, const TestFn& f, std::optional<int> p,
                               const QuadOptions& o) {
  const Dims& d = phi.dims;
  if (f.dim() != d.n) throw InvalidArgument("pair_regularized", "test function dimension does not match the phase");
  const int reps = p ? *p : choose_p(a.order, phi.mu, d.s, SmoothnessTarget::Pairing);
  if (reps < 0) throw InvalidArgument("pair_regularized", "p must be non-negative");
  SymbolFn u{times(a.expr, f.expr()), d, a.order, a.provenance};
  if (reps > 0) {
    Reducer V = build_reducer(phi);
    V.swell_cap = o.swell_cap;
    for (int i = 0; i < reps; ++i) u = apply_reducer(V, u);
  }
  require_integrable(u.order, d.s, "pair_regularized");
  PairingResult r;
  if (u.expr.is_zero()) {
    r.converged = true;
    r.method = "zero";
  } else {
    r = integrate_nested(u.expr, u.order, phi.expr, d, f.support_box(), {}, o);
  }
  r.p = reps;
  r.post_order = u.order;
  finish(r, o, "pair_regularized");
  return r;
}

PointwiseResult eval_pointwise(const SymbolFn& a, const PhaseFn& phi, const std::vector<Vec>& xs,
                               const QuadOptions& o) {
  const Dims& d = phi.dims;
  const int k = choose_p(a.order, phi.mu, d.s, SmoothnessTarget::Pointwise);
  if (k < 0) {
    throw NotConvergent("eval_pointwise", "no smoothness order k >= 0 with m + k mu < -s (m = " + fmt(a.order) +
                                              ", mu = " + fmt(phi.mu) + ", s = " + std::to_string(d.s) + ")");
  }
  PointwiseResult res;
  res.smoothness = k;
  const std::vector<Expr> outs{a.expr.re, a.expr.im, phi.expr};
  const Tape tape(outs, d);
  std::vector<Expr> g;
  for (int j = 0; j < d.s; ++j) g.push_back(diff(phi.expr, Theta(j)));
  const Tape grad(g, d);
  const std::size_t ni = tape.inputs(), no = tape.outputs();
  for (const auto& x : xs) {
    if (static_cast<int>(x.size()) != d.n) throw InvalidArgument("eval_pointwise", "point dimension mismatch");
    const detail::BatchFn fn = [&](const double* th, std::size_t count, Complex* out) {
      std::vector<double> in(count * ni), val(count * no);
      for (std::size_t p = 0; p < count; ++p) {
        std::copy(x.begin(), x.end(), in.begin() + static_cast<std::ptrdiff_t>(p * ni));
        std::copy(th + p * static_cast<std::size_t>(d.s), th + (p + 1) * static_cast<std::size_t>(d.s),
                  in.begin() + static_cast<std::ptrdiff_t>(p * ni + static_cast<std::size_t>(d.n)));
      }
      tape.eval_batch(in, count, val);
      for (std::size_t p = 0; p < count; ++p) {
        const double* v = val.data() + p * no;
        out[p] = (v[0] == 0.0 && v[1] == 0.0) ? Complex{} : Complex(v[0], v[1]) * std::polar(1.0, v[2]);
      }
    };
    RaySamples smp = ray_samples(Box(x, x), d.s);
    smp.xs = {x};
    double tail = 0.0;
    const double R = pick_radius([&](double RR) { return tail_bound_for(tape, smp, a.order, d.s, RR, {}); }, o, tail);
    auto panels = [&](double RR) {
      const auto pts = Box::cube(d.s, -RR, RR).grid(5);
      std::vector<double> in, out(pts.size() * static_cast<std::size_t>(d.s));
      for (const auto& t : pts) {
        in.insert(in.end(), x.begin(), x.end());
        in.insert(in.end(), t.begin(), t.end());
      }
      grad.eval_batch(in, pts.size(), out);
      std::vector<int> m(static_cast<std::size_t>(d.s), 2);
      for (int j = 0; j < d.s; ++j) {
        double K = 0.0;
        for (std::size_t p = 0; p < pts.size(); ++p) K = std::max(K, std::abs(out[p * static_cast<std::size_t>(d.s) + static_cast<std::size_t>(j)]));
        m[static_cast<std::size_t>(j)] = std::max(2, static_cast<int>(std::ceil(2.0 * RR * K / std::numbers::pi)));
      }
      for (;;) {
        double tot = 1.0;
        for (int v : m) tot *= v;
        if (tot <= o.max_panels / 4.0) break;
        for (int& v : m) v = std::max(1, v / 2);
      }
      return m;
    };
    auto run = [&](double RR) {
      return detail::adaptive_cubature(fn, Vec(static_cast<std::size_t>(d.s), -RR), Vec(static_cast<std::size_t>(d.s), RR),
                                       panels(RR), 0.25 * o.tol, 7, o.max_panels);
    };
    const auto half = run(0.5 * R);
    const auto full = run(R);
    const double err = full.error + std::abs(full.value - half.value) + tail;
    if (o.strict && !(err <= o.tol)) {
      throw ToleranceNotReached("eval_pointwise", "error estimate " + fmt(err) + " exceeds tolerance " + fmt(o.tol));
    }
    res.values.push_back(full.value);
    res.errors.push_back(err);
  }
  return res;
}

// ------------------------------------------------------- windowed Fourier

FourierResult windowed_fourier(const SymbolFn& a, const PhaseFn& phi, const TestFn& psi, const Vec& k,
                               FourierPolicy policy, const QuadOptions& o, int reductions) {
  const Dims& d = phi.dims;
  if (psi.dim() != d.n || static_cast<int>(k.size()) != d.n) {
    throw InvalidArgument("windowed_fourier", "window and covector must have dimension n");
  }
  QuadOptions lax = o;
  lax.strict = false;
  FourierResult out;
  out.method = to_string(policy);
  auto take = [&](const PairingResult& r) {
    out.value += r.value;
    out.abs_err += r.abs_err + r.tail_bound;
    out.nodes += r.nodes;
    out.converged = r.converged;
  };
  auto take_f = [&](const FourierResult& r) {
    const std::string m = out.method;
    out = r;
    out.method = m;
  };
  // e^{-i k.x} as a complex expression.
  std::vector<Expr> kx;
  for (int i = 0; i < d.n; ++i) kx.push_back(literal(k[static_cast<std::size_t>(i)]) * variable(X(i)));
  const Expr arg = add(kx);
  const CExpr modulation(cos(arg), -sin(arg));
  const Expr shifted = phi.expr - arg;

  switch (policy) {
    case FourierPolicy::Direct: {
      require_integrable(a.order, d.s, "windowed_fourier");
      if (o.allow_spectral && spectral_ok(a, phi)) {
        take_f(fourier_spectral(a, phi, psi, k, lax));
        out.method = "direct/spectral";
      } else {
        take(integrate_nested(times(a.expr, psi.expr()), a.order, shifted, d, psi.support_box(), {}, lax));
      }
      break;
    }
    case FourierPolicy::Spectral: {
      if (!spectral_ok(a, phi)) {
        throw InvalidArgument("windowed_fourier", "spectral policy needs phi affine in x and a independent of x");
      }
      take_f(fourier_spectral(a, phi, psi, k, lax));
      break;
    }
    case FourierPolicy::ThetaReduced: {
      // The global operator is adapted to phi, so the modulation joins the amplitude.
      SymbolFn u{times(a.expr, psi.expr()) * modulation, d, a.order, a.provenance};
      Reducer V = build_reducer(phi);
      V.swell_cap = o.swell_cap;
      for (int i = 0; i < reductions; ++i) u = apply_reducer(V, u);
      require_integrable(u.order, d.s, "windowed_fourier");
      take(integrate_nested(u.expr, u.order, phi.expr, d, psi.support_box(), {}, lax));
      break;
    }
    case FourierPolicy::FourierReduced: {
      // a = (1 - xi) a + xi a with xi = 1 on supp chi: the low part is compact
      // in theta; on the high part zeta (1 - chi) = zeta = 1 on supp psi, so
      // V_k reduces it exactly.
      const CutoffFn xi = build_cutoff(phi.chi.r1, 2.0 * phi.chi.r1, d.s);
      const double rz = 1.2 * psi.support_radius();
      const CutoffFn zeta = build_bump(Axis::X, psi.center, rz, 2.0 * rz);
      const Reducer Vk = build_fourier_reducer(phi, zeta, phi.chi, k);
      Reducer V = Vk;
      V.swell_cap = o.swell_cap;
      const CExpr apsi = times(a.expr, psi.expr());
      SymbolFn hi{times(apsi, xi.complement), d, a.order, a.provenance};
      for (int i = 0; i < reductions; ++i) hi = apply_reducer(V, hi);
      require_integrable(hi.order, d.s, "windowed_fourier");
      take(integrate_nested(hi.expr, hi.order, shifted, d, psi.support_box(), k, lax));
      // Low part: supported in |theta| <= 2 r1, so order -inf for the tail.
      QuadOptions lo = lax;
      lo.R0 = std::max(o.R0, 2.0 * xi.r1);
      take(integrate_nested(times(apsi, xi.expr), -kInf, shifted, d, psi.support_box(), {}, lo));
      break;
    }
  }
  if (policy == FourierPolicy::ThetaReduced || policy == FourierPolicy::FourierReduced ||
      out.method == "direct") {
    out.converged = out.abs_err <= o.tol;
  }
  if (o.strict && !out.converged) {
    throw ToleranceNotReached("windowed_fourier", "error estimate " + fmt(out.abs_err) + " exceeds tolerance " + fmt(o.tol));
  }
  return out;
}

}  // namespace oscint
