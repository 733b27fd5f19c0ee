#include "oscint/calculus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <tuple>

#include "oscint/tape.hpp"
#include "parallel.hpp"
#include "rays.hpp"

namespace oscint {

namespace {

std::string vec_str(std::span<const double> v) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ')';
  return os.str();
}

// Exact rational when v has at most six decimals, literal otherwise.
Expr number(double v) {
  const double scaled = v * 1e6;
  if (std::abs(scaled) < 1e15 && scaled == std::round(scaled)) {
    return constant(static_cast<std::int64_t>(std::llround(scaled)), 1000000);
  }
  return literal(v);
}

std::size_t tail_start(std::size_t rungs) { return rungs / 2; }

// Sample grid / directions / ladder derived from a scan configuration.
struct Sampling {
  std::vector<Vec> xs;
  std::vector<Vec> dirs;
  Vec lambdas;
};

Sampling sampling(const Dims& dims, const ScanConfig& cfg) {
  if (cfg.box.dim() != dims.n) throw InvalidArgument("scan", "box dimension does not match n");
  if (cfg.ladder.rungs < 6) throw InvalidArgument("scan", "ladder needs at least 6 rungs");
  return {cfg.box.grid(cfg.grid_per_axis), direction_set(dims.s, cfg.directions, cfg.seed), cfg.ladder.values()};
}

}  // namespace

Box::Box(Vec lo_, Vec hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
  if (lo.size() != hi.size() || lo.empty()) throw InvalidArgument("Box", "bounds must have equal positive length");
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!std::isfinite(lo[i]) || !std::isfinite(hi[i]) || lo[i] > hi[i]) {
      throw InvalidArgument("Box", "axis " + std::to_string(i + 1) + " has invalid bounds");
    }
  }
}

Box Box::cube(int dim, double lo, double hi) {
  return Box(Vec(static_cast<std::size_t>(dim), lo), Vec(static_cast<std::size_t>(dim), hi));
}

bool Box::contains(std::span<const double> x, double slack) const {
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (x[i] < lo[i] - slack || x[i] > hi[i] + slack) return false;
  }
  return true;
}

std::vector<Vec> Box::grid(int per_axis) const {
  if (per_axis < 1) throw InvalidArgument("Box::grid", "per_axis must be >= 1");
  const std::size_t d = lo.size();
  std::vector<Vec> pts;
  std::vector<int> idx(d, 0);
  for (;;) {
    Vec p(d);
    for (std::size_t i = 0; i < d; ++i) {
      p[i] = per_axis == 1 ? 0.5 * (lo[i] + hi[i]) : lo[i] + (hi[i] - lo[i]) * idx[i] / (per_axis - 1);
    }
    pts.push_back(std::move(p));
    std::size_t i = 0;
    while (i < d && ++idx[i] == per_axis) idx[i++] = 0;
    if (i == d) break;
  }
  return pts;
}

Vec Ladder::values() const {
  Vec v(static_cast<std::size_t>(std::max(rungs, 0)));
  double l = start;
  for (auto& e : v) {
    e = l;
    l *= base;
  }
  return v;
}

int default_direction_count(int s) {
  if (s == 1) return 2;
  if (s == 2) return 64;
  if (s == 3) return 256;
  return 512;
}

std::vector<Vec> direction_set(int s, int count, std::uint64_t seed) {
  if (s < 1) throw InvalidArgument("direction_set", "s must be >= 1");
  if (count <= 0) count = default_direction_count(s);
  std::vector<Vec> dirs;
  if (s == 1) return {{1.0}, {-1.0}};
  if (s == 2) {
    for (int k = 0; k < count; ++k) {
      const double a = 2.0 * std::numbers::pi * k / count;
      dirs.push_back({std::cos(a), std::sin(a)});
    }
    return dirs;
  }
  if (s == 3) {
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < count; ++k) {
      const double z = 1.0 - (2.0 * k + 1.0) / count;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double a = golden * k;
      dirs.push_back({z, r * std::cos(a), r * std::sin(a)});
    }
    return dirs;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  while (static_cast<int>(dirs.size()) < count) {
    Vec v(static_cast<std::size_t>(s));
    double n2 = 0.0;
    for (auto& c : v) {
      c = gauss(rng);
      n2 += c * c;
    }
    if (n2 < 1e-12) continue;
    for (auto& c : v) c /= std::sqrt(n2);
    dirs.push_back(std::move(v));
  }
  return dirs;
}

RayFit fit_tail(std::span<const double> lambdas, std::span<const double> values) {
  RayFit f;
  std::vector<double> lx, ly;
  bool zero = false;
  for (std::size_t r = tail_start(lambdas.size()); r < lambdas.size(); ++r) {
    if (!(values[r] > 0.0)) {
      zero = true;
      continue;
    }
    lx.push_back(std::log(lambdas[r]));
    ly.push_back(std::log(values[r]));
  }
  if (lx.size() < 2) {
    f.slope = zero ? -std::numeric_limits<double>::infinity() : 0.0;
    f.intercept = ly.empty() ? -std::numeric_limits<double>::infinity() : ly[0];
    return f;
  }
  const double k = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  f.slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  f.intercept = (sy - f.slope * sx) / k;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    f.residual = std::max(f.residual, std::abs(ly[i] - f.intercept - f.slope * lx[i]));
  }
  // A zero rung after positive ones means decay beyond representable range.
  if (zero && values.back() == 0.0) f.slope = -std::numeric_limits<double>::infinity();
  return f;
}

OrderEstimate estimate_growth(std::span<const Expr> e, const Dims& dims, const ScanConfig& cfg) {
  const Sampling smp = sampling(dims, cfg);
  const Tape tape(e, dims);
  const std::size_t no = tape.outputs();
  const std::size_t nr = smp.lambdas.size();
  std::vector<Vec> per_x(smp.xs.size(), Vec(nr, 0.0));
  detail::parallel_for(smp.xs.size(), cfg.threads, [&](std::size_t i) {
    std::vector<double> out;
    detail::eval_rays(tape, smp.xs[i], smp.dirs, smp.lambdas, out);
    for (std::size_t d = 0; d < smp.dirs.size(); ++d) {
      for (std::size_t r = 0; r < nr; ++r) {
        double n2 = 0.0;
        for (std::size_t o = 0; o < no; ++o) {
          const double v = out[(d * nr + r) * no + o];
          n2 += v * v;
        }
        if (std::isnan(n2)) {
          throw EvaluationFailed("estimate_growth", "NaN at x=" + vec_str(smp.xs[i]) + ", direction " +
                                                        vec_str(smp.dirs[d]) + ", lambda=" +
                                                        std::to_string(smp.lambdas[r]));
        }
        per_x[i][r] = std::max(per_x[i][r], std::sqrt(n2));
      }
    }
  });
  Vec S(nr, 0.0);
  for (const auto& px : per_x) {
    for (std::size_t r = 0; r < nr; ++r) S[r] = std::max(S[r], px[r]);
  }
  if (std::all_of(S.begin(), S.end(), [](double v) { return v == 0.0; })) {
    throw DegenerateFit("estimate_growth", "all samples are zero; slope undefined (-inf)");
  }
  const RayFit f = fit_tail(smp.lambdas, S);
  OrderEstimate est;
  est.slope = f.slope;
  est.intercept = f.intercept;
  est.residual = f.residual;
  est.lambda_min = smp.lambdas[tail_start(nr)];
  est.lambda_max = smp.lambdas.back();
  est.directions = static_cast<int>(smp.dirs.size());
  return est;
}

OrderEstimate estimate_growth(const Expr& e, const Dims& dims, const ScanConfig& cfg) {
  return estimate_growth(std::span<const Expr>(&e, 1), dims, cfg);
}

SymbolReport verify_symbol_order(std::span<const Expr> a, double m, int depth, const Dims& dims,
                                 const ScanConfig& cfg) {
  if (depth < 0 || depth > 4) throw InvalidArgument("verify_symbol_order", "depth must be in [0, 4]");
  const Sampling smp = sampling(dims, cfg);
  const auto indices = MultiIndex::up_to(dims, depth);
  const std::size_t nc = a.size();
  std::vector<Expr> outs;
  for (const auto& idx : indices) {
    for (const auto& c : a) outs.push_back(diff(c, idx));
  }
  const Tape tape(outs, dims);
  const std::size_t ni = indices.size();
  const std::size_t nr = smp.lambdas.size();
  const std::size_t no = outs.size();

  struct Peak {
    double v = 0.0;
    std::size_t x = 0, d = 0;
  };
  // per x: [index][rung]
  std::vector<std::vector<Peak>> per_x(smp.xs.size(), std::vector<Peak>(ni * nr));
  detail::parallel_for(smp.xs.size(), cfg.threads, [&](std::size_t i) {
    std::vector<double> out;
    detail::eval_rays(tape, smp.xs[i], smp.dirs, smp.lambdas, out);
    for (std::size_t d = 0; d < smp.dirs.size(); ++d) {
      for (std::size_t r = 0; r < nr; ++r) {
        const double* row = out.data() + (d * nr + r) * no;
        for (std::size_t q = 0; q < ni; ++q) {
          double n2 = 0.0;
          for (std::size_t c = 0; c < nc; ++c) n2 += row[q * nc + c] * row[q * nc + c];
          if (std::isnan(n2)) {
            throw EvaluationFailed("verify_symbol_order",
                                   "NaN at x=" + vec_str(smp.xs[i]) + ", direction " + vec_str(smp.dirs[d]));
          }
          const double w = std::sqrt(n2) * std::pow(1.0 + smp.lambdas[r], indices[q].order_theta() - m);
          Peak& pk = per_x[i][q * nr + r];
          if (w > pk.v) pk = {w, i, d};
        }
      }
    }
  });

  SymbolReport rep;
  double worst_drift = -std::numeric_limits<double>::infinity();
  const double allowed = std::log2(1.0 + cfg.plateau_drift);
  for (std::size_t q = 0; q < ni; ++q) {
    std::vector<Peak> S(nr);
    for (const auto& px : per_x) {
      for (std::size_t r = 0; r < nr; ++r) {
        if (px[q * nr + r].v > S[r].v) S[r] = px[q * nr + r];
      }
    }
    Vec vals(nr);
    for (std::size_t r = 0; r < nr; ++r) vals[r] = S[r].v;
    // Growth factor per octave is 2^drift.
    const double drift = fit_tail(smp.lambdas, vals).slope;
    const std::size_t rbest = static_cast<std::size_t>(std::max_element(vals.begin(), vals.end()) - vals.begin());
    rep.worst_ratio = std::max(rep.worst_ratio, vals[rbest]);
    const bool fail = drift > allowed;
    const bool better_witness = rep.ok ? (fail || drift > worst_drift) : (fail && drift > worst_drift);
    if (better_witness) {
      worst_drift = drift;
      const Peak& pk = S.back();
      rep.witness.index = indices[q];
      rep.witness.x = smp.xs[pk.x];
      rep.witness.theta = smp.dirs[pk.d];
      for (auto& t : rep.witness.theta) t *= smp.lambdas.back();
      rep.witness.value = pk.v;
      rep.witness.drift = drift;
    }
    if (fail) rep.ok = false;
  }
  return rep;
}

SymbolReport verify_symbol_order(const Expr& a, double m, int depth, const Dims& dims, const ScanConfig& cfg) {
  return verify_symbol_order(std::span<const Expr>(&a, 1), m, depth, dims, cfg);
}

double CutoffFn::operator()(std::span<const double> x, std::span<const double> theta) const {
  return eval(expr, x, theta);
}

namespace {

// {1 - h, h} at t = (r - r0)/(r1 - r0). Every derivative term of h carries a
// factor g0 or g0', so derivatives vanish exactly on the inner plateau even
// where r itself is singular. The tape divides by (g0 + g1), making h exactly
// 1 on the outer plateau.
std::pair<Expr, Expr> smooth_step(const Expr& r, double r0, double r1) {
  const Expr t = (r - number(r0)) / number(r1 - r0);
  const Expr g0 = flat(t);
  const Expr g1 = flat(constant(1) - t);
  const Expr h = g0 / (g0 + g1);
  return {constant(1) - h, h};
}

void check_radii(double r0, double r1) {
  if (!(std::isfinite(r0) && std::isfinite(r1) && r0 > 0.0 && r0 < r1)) {
    throw BadRadii("build_cutoff", "need 0 < r0 < r1, got r0=" + std::to_string(r0) + ", r1=" + std::to_string(r1));
  }
}

}  // namespace

CutoffFn build_cutoff(double r0, double r1, int s) {
  check_radii(r0, r1);
  CutoffFn c;
  c.axis = Axis::Theta;
  c.r0 = r0;
  c.r1 = r1;
  std::tie(c.expr, c.complement) = smooth_step(sqrt(theta_norm2(s)), r0, r1);
  return c;
}

CutoffFn build_bump(Axis axis, Vec center, double r0, double r1) {
  check_radii(r0, r1);
  if (axis == Axis::K) throw InvalidArgument("build_bump", "bumps live over x or theta");
  std::vector<Expr> sq;
  for (std::size_t i = 0; i < center.size(); ++i) {
    const Var v{axis, static_cast<int>(i)};
    sq.push_back(pow(variable(v) - number(center[i]), 2));
  }
  CutoffFn c;
  c.axis = axis;
  c.center = std::move(center);
  c.r0 = r0;
  c.r1 = r1;
  std::tie(c.expr, c.complement) = smooth_step(sqrt(add(sq)), r0, r1);
  return c;
}

Expr eta_expr(const Expr& phi, const Dims& dims) {
  std::vector<Expr> gx, gt;
  for (int i = 0; i < dims.n; ++i) gx.push_back(pow(diff(phi, X(i)), 2));
  for (int j = 0; j < dims.s; ++j) gt.push_back(pow(diff(phi, Theta(j)), 2));
  return add(gx) + theta_norm2(dims.s) * add(gt);
}

PhaseFn validate_phase(const Expr& phi, const Dims& dims, double mu, const ScanConfig& cfg) {
  if (!(mu > 0.0)) throw InvalidArgument("validate_phase", "order mu must be positive");
  const OrderEstimate growth = estimate_growth(phi, dims, cfg);
  if (growth.slope > mu + cfg.order_tol) {
    throw NotASymbol("validate_phase", "phase grows like lambda^" + std::to_string(growth.slope) +
                                           ", exceeding order " + std::to_string(mu));
  }
  const Sampling smp = sampling(dims, cfg);
  const Tape tape(eta_expr(phi, dims), dims);
  const std::size_t nr = smp.lambdas.size();
  const std::size_t nd = smp.dirs.size();

  struct XResult {
    Vec min_ratio;
    double worst_slope = std::numeric_limits<double>::infinity();
    std::size_t worst_dir = 0;
    Vec worst_ratios;
  };
  std::vector<XResult> res(smp.xs.size());
  detail::parallel_for(smp.xs.size(), cfg.threads, [&](std::size_t i) {
    std::vector<double> out;
    detail::eval_rays(tape, smp.xs[i], smp.dirs, smp.lambdas, out);
    XResult& xr = res[i];
    xr.min_ratio.assign(nr, std::numeric_limits<double>::infinity());
    Vec ratios(nr);
    for (std::size_t d = 0; d < nd; ++d) {
      for (std::size_t r = 0; r < nr; ++r) {
        const double eta = out[d * nr + r];
        if (std::isnan(eta)) {
          throw EvaluationFailed("validate_phase", "eta is NaN at x=" + vec_str(smp.xs[i]) + ", direction " +
                                                       vec_str(smp.dirs[d]));
        }
        ratios[r] = eta / std::pow(smp.lambdas[r], 2.0 * mu);
        xr.min_ratio[r] = std::min(xr.min_ratio[r], ratios[r]);
      }
      const double slope = fit_tail(smp.lambdas, ratios).slope;
      if (slope < xr.worst_slope) {
        xr.worst_slope = slope;
        xr.worst_dir = d;
        xr.worst_ratios = ratios;
      }
    }
  });

  const double slope_tol = 0.1;
  std::size_t wi = 0;
  for (std::size_t i = 1; i < res.size(); ++i) {
    if (res[i].worst_slope < res[wi].worst_slope) wi = i;
  }
  if (res[wi].worst_slope < -slope_tol) {
    const Vec& dir = smp.dirs[res[wi].worst_dir];
    std::ostringstream msg;
    msg << "eta/|theta|^" << 2.0 * mu << " decays like lambda^" << res[wi].worst_slope << " along x="
        << vec_str(smp.xs[wi]) << ", direction " << vec_str(dir) << "; nondegeneracy bound fails";
    throw DegeneratePhase(smp.xs[wi], dir, smp.lambdas, res[wi].worst_ratios, msg.str());
  }

  Vec minr(nr, std::numeric_limits<double>::infinity());
  for (const auto& xr : res) {
    for (std::size_t r = 0; r < nr; ++r) minr[r] = std::min(minr[r], xr.min_ratio[r]);
  }
  double tail_min = std::numeric_limits<double>::infinity();
  for (std::size_t r = tail_start(nr); r < nr; ++r) tail_min = std::min(tail_min, minr[r]);
  if (!(tail_min > 0.0)) {
    throw DegeneratePhase(smp.xs[wi], smp.dirs[res[wi].worst_dir], smp.lambdas, res[wi].worst_ratios,
                          "eta vanishes on the upper ladder; nondegeneracy bound fails");
  }
  const double C = 0.5 * tail_min;
  std::size_t rD = nr - 1;
  while (rD > 0 && minr[rD - 1] >= C) --rD;
  PhaseFn pf;
  pf.expr = phi;
  pf.dims = dims;
  pf.mu = mu;
  pf.cert.C = C;
  pf.cert.D = smp.lambdas[rD];
  pf.cert.min_ratio = *std::min_element(minr.begin() + static_cast<std::ptrdiff_t>(rD), minr.end());
  pf.cert.box = cfg.box;
  pf.cert.directions = static_cast<int>(nd);
  pf.cert.grid_per_axis = cfg.grid_per_axis;
  pf.cert.ladder = cfg.ladder;
  pf.chi = build_cutoff(pf.cert.D, 2.0 * pf.cert.D, dims.s);
  return pf;
}

}  // namespace oscint
