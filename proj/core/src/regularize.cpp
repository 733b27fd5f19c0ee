#include "oscint/regularize.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "oscint/tape.hpp"
#include "rays.hpp"
#include "refine.hpp"

namespace oscint {

namespace {

CExpr imag(const Expr& e) { return CExpr(constant(0), e); }

std::string vec_str(std::span<const double> v) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ')';
  return os.str();
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double c : v) s += c * c;
  return std::sqrt(s);
}

// e^{-i P} V^t e^{i P} = (c - div a - div b) - i (a . grad_theta P + b . grad_x P).
CExpr transpose_action(const Reducer& R) {
  std::vector<Expr> re{R.c.re}, im{R.c.im};
  for (std::size_t i = 0; i < R.a.size(); ++i) {
    const Var v = Theta(static_cast<int>(i));
    const Expr dp = diff(R.phase, v);
    re.push_back(-diff(R.a[i].re, v));
    im.push_back(-diff(R.a[i].im, v));
    re.push_back(R.a[i].im * dp);
    im.push_back(-(R.a[i].re * dp));
  }
  for (std::size_t j = 0; j < R.b.size(); ++j) {
    const Var v = X(static_cast<int>(j));
    const Expr dp = diff(R.phase, v);
    re.push_back(-diff(R.b[j].re, v));
    im.push_back(-diff(R.b[j].im, v));
    re.push_back(R.b[j].im * dp);
    im.push_back(-(R.b[j].re * dp));
  }
  return {add(re), add(im)};
}

std::vector<Vec> cone_dirs(const Dims& dims, const Vec& axis, double half_angle, std::uint64_t seed) {
  auto all = direction_set(dims.s, 0, seed);
  if (axis.empty()) return all;
  const double an = norm(axis);
  std::vector<Vec> out;
  for (auto& d : all) {
    double dot = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) dot += d[j] * axis[j] / an;
    if (std::acos(std::clamp(dot, -1.0, 1.0)) <= half_angle) out.push_back(std::move(d));
  }
  if (out.empty()) {
    Vec u = axis;
    for (auto& c : u) c /= an;
    out.push_back(std::move(u));
  }
  return out;
}

struct CriticalProbe {
  double tail_min = std::numeric_limits<double>::infinity();
  double worst_slope = std::numeric_limits<double>::infinity();
  Vec x, dir;
  double witness_ratio = 0.0;
};

// |grad_theta phi(x, lambda dir)| / lambda^(mu-1) along every region ray;
// the two weakest rays per x are refined locally since isolated critical
// directions fall between samples.
CriticalProbe probe_region(const PhaseFn& phi, const ConicRegion& region) {
  const Dims& d = phi.dims;
  std::vector<Expr> g;
  for (int j = 0; j < d.s; ++j) g.push_back(diff(phi.expr, Theta(j)));
  const Tape tape(g, d);
  const auto xs = region.x_box.grid(region.grid_per_axis);
  const auto dirs = cone_dirs(d, region.axis, region.half_angle, phi.cert.ladder.rungs);
  const Vec lam = phi.cert.ladder.values();
  const std::size_t half = lam.size() / 2;
  CriticalProbe pr;
  std::vector<double> out;
  auto ratios = [&](std::size_t di, Vec& ratio) {
    for (std::size_t r = 0; r < lam.size(); ++r) {
      ratio[r] = norm(std::span<const double>(out.data() + (di * lam.size() + r) * g.size(), g.size())) /
                 std::pow(lam[r], phi.mu - 1.0);
    }
  };
  auto consider = [&](const Vec& x, const Vec& dir, const Vec& ratio) {
    const double tmin = *std::min_element(ratio.begin() + static_cast<std::ptrdiff_t>(half), ratio.end());
    const double slope = fit_tail(lam, ratio).slope;
    if (tmin < pr.tail_min) {
      pr.x = x;
      pr.dir = dir;
      pr.witness_ratio = tmin;
    }
    pr.tail_min = std::min(pr.tail_min, tmin);
    pr.worst_slope = std::min(pr.worst_slope, slope);
  };
  Vec ratio(lam.size());
  for (const auto& x : xs) {
    detail::eval_rays(tape, x, dirs, lam, out);
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t di = 0; di < dirs.size(); ++di) {
      ratios(di, ratio);
      consider(x, dirs[di], ratio);
      order.emplace_back(*std::min_element(ratio.begin() + static_cast<std::ptrdiff_t>(half), ratio.end()), di);
    }
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(2, order.size())),
                      order.end());
    for (std::size_t q = 0; q < std::min<std::size_t>(2, order.size()); ++q) {
      auto f = [&](const Vec& dir) {
        detail::eval_rays(tape, x, {dir}, lam, out);
        ratios(0, ratio);
        return *std::min_element(ratio.begin() + static_cast<std::ptrdiff_t>(half), ratio.end());
      };
      auto inside = [&](const Vec& dir) {
        if (region.axis.empty()) return true;
        double dot = 0.0, an = norm(region.axis);
        for (std::size_t j = 0; j < dir.size(); ++j) dot += dir[j] * region.axis[j] / an;
        return std::acos(std::clamp(dot, -1.0, 1.0)) <= region.half_angle;
      };
      double v = 0.0;
      const Vec best = detail::refine_on_sphere(f, dirs[order[q].second], 0.1, v, inside);
      detail::eval_rays(tape, x, {best}, lam, out);
      ratios(0, ratio);
      consider(x, best, ratio);
    }
  }
  return pr;
}

}  // namespace

const char* to_string(Reducer::Kind k) {
  switch (k) {
    case Reducer::Kind::GlobalV:
      return "global_V";
    case Reducer::Kind::ThetaOnly:
      return "theta_only";
    case Reducer::Kind::FourierVk:
      return "fourier_Vk";
  }
  return "?";
}

Reducer build_reducer(const PhaseFn& phi) {
  const Dims& d = phi.dims;
  Reducer R;
  R.kind = Reducer::Kind::GlobalV;
  R.dims = d;
  R.order_drop = phi.mu;
  R.phase = phi.expr;
  R.target = CExpr(constant(1));
  const Expr w = phi.chi.complement * pow(eta_expr(phi.expr, d), -1);
  const Expr t2 = theta_norm2(d.s);
  std::vector<Expr> div;
  for (int i = 0; i < d.s; ++i) {
    R.a.push_back(imag(w * t2 * diff(phi.expr, Theta(i))));
    div.push_back(diff(R.a.back().im, Theta(i)));
  }
  for (int j = 0; j < d.n; ++j) {
    R.b.push_back(imag(w * diff(phi.expr, X(j))));
    div.push_back(diff(R.b.back().im, X(j)));
  }
  R.c = CExpr(phi.chi.expr, add(div));
  return R;
}

double verify_transpose_identity(const Reducer& R, const PhaseFn& phi, int samples, std::uint64_t seed) {
  const CExpr act = transpose_action(R);
  const std::vector<Expr> outs{act.re, act.im, R.target.re, R.target.im};
  const Dims& d = R.dims;
  const Tape tape(outs, d, R.covector);
  const Box& box = R.region ? *R.region : phi.cert.box;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss;
  const double lo = std::log(phi.cert.D), hi = std::log(1024.0);
  const std::size_t ni = tape.inputs();
  std::vector<double> in(static_cast<std::size_t>(samples) * ni);
  auto unit = [&](int dim) {
    Vec v(static_cast<std::size_t>(dim));
    double n2 = 0.0;
    while (n2 < 1e-12) {
      n2 = 0.0;
      for (auto& c : v) {
        c = gauss(rng);
        n2 += c * c;
      }
    }
    for (auto& c : v) c /= std::sqrt(n2);
    return v;
  };
  for (int p = 0; p < samples; ++p) {
    double* row = in.data() + static_cast<std::size_t>(p) * ni;
    for (int i = 0; i < d.n; ++i) {
      row[i] = box.lo[static_cast<std::size_t>(i)] +
               (box.hi[static_cast<std::size_t>(i)] - box.lo[static_cast<std::size_t>(i)]) * uni(rng);
    }
    const double rad = std::exp(lo + (hi - lo) * uni(rng));
    const Vec u = unit(d.s);
    for (int j = 0; j < d.s; ++j) row[d.n + j] = rad * u[static_cast<std::size_t>(j)];
    if (R.covector) {
      const Vec kk = unit(d.n);
      for (int j = 0; j < d.n; ++j) row[d.n + d.s + j] = 1024.0 * kk[static_cast<std::size_t>(j)];
    }
  }
  std::vector<double> out(static_cast<std::size_t>(samples) * outs.size());
  tape.eval_batch(in, static_cast<std::size_t>(samples), out);
  double worst = 0.0;
  for (int p = 0; p < samples; ++p) {
    const double* o = out.data() + static_cast<std::size_t>(p) * outs.size();
    const double res = std::hypot(o[0] - o[2], o[1] - o[3]);
    if (std::isnan(res)) {
      throw EvaluationFailed("verify_transpose_identity",
                             "NaN at sample " + std::to_string(p) + ", point " +
                                 vec_str(std::span<const double>(in.data() + static_cast<std::size_t>(p) * ni, ni)));
    }
    worst = std::max(worst, res);
  }
  return worst;
}

SymbolFn apply_reducer(const Reducer& R, const SymbolFn& u, const ScanConfig* estimate) {
  if (!(u.dims == R.dims)) throw InvalidArgument("apply_reducer", "amplitude dims do not match the reducer");
  std::vector<Expr> re, im;
  auto term = [&](const CExpr& coef, const Expr& ure, const Expr& uim) {
    if (coef.is_zero()) return;
    re.push_back(coef.re * ure);
    re.push_back(-(coef.im * uim));
    im.push_back(coef.re * uim);
    im.push_back(coef.im * ure);
  };
  for (std::size_t i = 0; i < R.a.size(); ++i) {
    const Var v = Theta(static_cast<int>(i));
    term(R.a[i], diff(u.expr.re, v), diff(u.expr.im, v));
  }
  for (std::size_t j = 0; j < R.b.size(); ++j) {
    const Var v = X(static_cast<int>(j));
    term(R.b[j], diff(u.expr.re, v), diff(u.expr.im, v));
  }
  term(R.c, u.expr.re, u.expr.im);
  // Constructors keep every expression normalized, so no separate simplify
  // pass is needed here.
  SymbolFn out;
  out.expr = CExpr(add(re), add(im));
  out.dims = u.dims;
  for (const Expr* part : {&out.expr.re, &out.expr.im}) {
    const std::size_t nodes = node_count(*part);
    if (nodes > R.swell_cap) {
      throw ExpressionSwell("apply_reducer", "result has " + std::to_string(nodes) + " nodes, cap is " +
                                                 std::to_string(R.swell_cap) +
                                                 "; lower the reduction count or raise the cap");
    }
  }
  out.order = u.order - R.order_drop;
  out.provenance = SymbolFn::Provenance::Declared;
  if (estimate && !R.covector) {
    const std::vector<Expr> parts{out.expr.re, out.expr.im};
    try {
      out.order = estimate_growth(parts, out.dims, *estimate).slope;
      out.provenance = SymbolFn::Provenance::Estimated;
    } catch (const DegenerateFit&) {
      out.order = -std::numeric_limits<double>::infinity();
      out.provenance = SymbolFn::Provenance::Estimated;
    }
  }
  return out;
}

CutoffFn choose_theta_bump(const PhaseFn& phi, const ConicRegion& region) {
  const CriticalProbe pr = probe_region(phi, region);
  const double tau = 0.5 * pr.tail_min;
  const Dims& d = phi.dims;
  std::vector<Expr> g;
  for (int j = 0; j < d.s; ++j) g.push_back(diff(phi.expr, Theta(j)));
  const Tape tape(g, d);
  Vec lam;
  for (double l = 1.0 / 16.0; l <= 16384.0; l *= std::pow(2.0, 0.25)) lam.push_back(l);
  const auto dirs = cone_dirs(d, region.axis, region.half_angle, phi.cert.ladder.rungs);
  double extent = 0.0;
  std::vector<double> out;
  for (const auto& x : region.x_box.grid(region.grid_per_axis)) {
    detail::eval_rays(tape, x, dirs, lam, out);
    for (std::size_t di = 0; di < dirs.size(); ++di) {
      for (std::size_t r = 0; r < lam.size(); ++r) {
        const double gn = norm(std::span<const double>(out.data() + (di * lam.size() + r) * g.size(), g.size()));
        if (gn < tau * std::pow(std::max(1.0, lam[r]), phi.mu - 1.0)) extent = std::max(extent, lam[r]);
      }
    }
  }
  const double r0 = std::max(2.0 * extent, phi.cert.D);
  return build_cutoff(r0, 2.0 * r0, d.s);
}

Reducer build_theta_reducer(const PhaseFn& phi, const ConicRegion& avoid, const CutoffFn& psi) {
  const CriticalProbe pr = probe_region(phi, avoid);
  constexpr double kEps = 1e-3, kSlopeTol = 0.1;
  if (pr.tail_min < kEps || pr.worst_slope < -kSlopeTol) {
    throw RegionTouchesCriticalSet(
        "build_theta_reducer", "|grad_theta phi|/lambda^(mu-1) drops to " + std::to_string(pr.witness_ratio) +
                                   " at x=" + vec_str(pr.x) + ", direction " + vec_str(pr.dir));
  }
  const Dims& d = phi.dims;
  Reducer R;
  R.kind = Reducer::Kind::ThetaOnly;
  R.dims = d;
  R.order_drop = phi.mu;
  R.phase = phi.expr;
  R.target = CExpr(constant(1));
  R.region = avoid.x_box;
  std::vector<Expr> gt, sq;
  for (int j = 0; j < d.s; ++j) {
    gt.push_back(diff(phi.expr, Theta(j)));
    sq.push_back(pow(gt.back(), 2));
  }
  const Expr w = psi.complement * pow(add(sq), -1);
  std::vector<Expr> div;
  for (int j = 0; j < d.s; ++j) {
    R.a.push_back(imag(w * gt[static_cast<std::size_t>(j)]));
    div.push_back(diff(R.a.back().im, Theta(j)));
  }
  R.c = CExpr(psi.expr, add(div));
  return R;
}

FourierCheck fourier_condition(const PhaseFn& phi, const CutoffFn& zeta, const Vec& khat, const FourierOptions& opts) {
  const Dims& d = phi.dims;
  std::vector<Expr> g;
  for (int j = 0; j < d.n; ++j) g.push_back(diff(phi.expr, X(j)));
  const Tape tape(g, d);
  const auto dirs = opts.theta_dirs.empty() ? direction_set(d.s) : opts.theta_dirs;
  Vec rhos = opts.rhos;
  if (rhos.empty()) {
    for (int i = 0; i <= 8; ++i) rhos.push_back(4.0 * std::ldexp(1.0, i));
  }
  Vec lam;
  for (double l = phi.cert.D; l <= 16384.0 * (1 + 1e-12); l *= std::pow(2.0, 0.125)) lam.push_back(l);
  Vec center = zeta.center.empty() ? Vec(static_cast<std::size_t>(d.n), 0.0) : zeta.center;
  Vec lo(center), hi(center);
  for (std::size_t i = 0; i < lo.size(); ++i) {
    lo[i] -= zeta.r1;
    hi[i] += zeta.r1;
  }
  const double kn = norm(khat);
  FourierCheck fc;
  fc.min_ratio = std::numeric_limits<double>::infinity();
  std::vector<double> out;
  for (const auto& x : Box(lo, hi).grid(opts.grid_per_axis)) {
    double dx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) dx += (x[i] - center[i]) * (x[i] - center[i]);
    if (std::sqrt(dx) > zeta.r1 * (1 + 1e-12)) continue;
    detail::eval_rays(tape, x, dirs, lam, out);
    for (std::size_t di = 0; di < dirs.size(); ++di) {
      for (std::size_t r = 0; r < lam.size(); ++r) {
        const double* gx = out.data() + (di * lam.size() + r) * g.size();
        for (double rho : rhos) {
          double n2 = 0.0;
          for (std::size_t j = 0; j < g.size(); ++j) {
            const double v = gx[j] - rho * khat[j] / kn;
            n2 += v * v;
          }
          const double ratio = std::sqrt(n2) / (std::pow(lam[r], phi.mu) + rho);
          if (ratio < fc.min_ratio) {
            fc.min_ratio = ratio;
            fc.x = x;
            fc.theta = dirs[di];
            for (auto& t : fc.theta) t *= lam[r];
            fc.k = khat;
            for (auto& k : fc.k) k *= rho / kn;
          }
        }
      }
    }
  }
  return fc;
}

Reducer build_fourier_reducer(const PhaseFn& phi, const CutoffFn& zeta, const CutoffFn& chi, const Vec& k,
                              const FourierOptions& opts) {
  const Dims& d = phi.dims;
  if (static_cast<int>(k.size()) != d.n || norm(k) == 0.0) {
    throw InvalidArgument("build_fourier_reducer", "k must be a nonzero vector of length n");
  }
  if (opts.check) {
    const FourierCheck fc = fourier_condition(phi, zeta, k, opts);
    if (fc.min_ratio < opts.threshold) {
      std::ostringstream msg;
      msg << "|grad_x phi - k|/(|theta|^mu + |k|) = " << fc.min_ratio << " at x=" << vec_str(fc.x)
          << ", theta=" << vec_str(fc.theta) << ", k=" << vec_str(fc.k) << " is below " << opts.threshold;
      throw ConeIntersectsSP("build_fourier_reducer", msg.str());
    }
  }
  Reducer R;
  R.kind = Reducer::Kind::FourierVk;
  R.dims = d;
  R.order_drop = phi.mu;
  R.covector = true;
  {
    Vec center = zeta.center.empty() ? Vec(static_cast<std::size_t>(d.n), 0.0) : zeta.center;
    Vec lo(center), hi(center);
    for (std::size_t i = 0; i < lo.size(); ++i) {
      lo[i] -= zeta.r1;
      hi[i] += zeta.r1;
    }
    R.region = Box(lo, hi);
  }
  std::vector<Expr> kx;
  for (int j = 0; j < d.n; ++j) kx.push_back(variable(K(j)) * variable(X(j)));
  R.phase = phi.expr - add(kx);
  const Expr window = zeta.expr * chi.complement;
  R.target = CExpr(window);
  std::vector<Expr> gx, sq;
  for (int j = 0; j < d.n; ++j) {
    gx.push_back(diff(R.phase, X(j)));
    sq.push_back(pow(gx.back(), 2));
  }
  const Expr w = window * pow(add(sq), -1);
  std::vector<Expr> div;
  for (int j = 0; j < d.n; ++j) {
    R.b.push_back(imag(w * gx[static_cast<std::size_t>(j)]));
    div.push_back(diff(R.b.back().im, X(j)));
  }
  R.c = CExpr(constant(0), add(div));
  return R;
}

}  // namespace oscint
