#include "oscint/microlocal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "oscint/errors.hpp"
#include "oscint/tape.hpp"
#include "parallel.hpp"
#include "rays.hpp"
#include "refine.hpp"

namespace oscint {

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double c : v) s += c * c;
  return std::sqrt(s);
}

// Angle between unit vectors; 2 asin(|u - v| / 2) stays accurate near 0.
double angle(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += (u[i] - v[i]) * (u[i] - v[i]);
  return 2.0 * std::asin(std::min(1.0, 0.5 * std::sqrt(s)));
}

Tape gradient_tape(const PhaseFn& phi, bool theta) {
  const Dims& d = phi.dims;
  std::vector<Expr> g;
  const int count = theta ? d.s : d.n;
  for (int j = 0; j < count; ++j) g.push_back(diff(phi.expr, theta ? Theta(j) : X(j)));
  return Tape(g, d);
}

struct RayStats {
  double growth = 0.0, min_ratio = 0.0, ratio_slope = 0.0;
  bool critical = false;
};

// `out` holds |dirs| x |lam| rows of grad_theta phi; ray `di` is summarized.
RayStats ray_stats(const std::vector<double>& out, std::size_t di, const Vec& lam, int s, double mu,
                   const Thresholds& th) {
  Vec mag(lam.size()), ratio(lam.size());
  for (std::size_t r = 0; r < lam.size(); ++r) {
    mag[r] = norm(std::span<const double>(out.data() + (di * lam.size() + r) * static_cast<std::size_t>(s),
                                          static_cast<std::size_t>(s)));
    ratio[r] = mag[r] / std::pow(lam[r], mu - 1.0);
  }
  if (std::any_of(mag.begin(), mag.end(), [](double v) { return std::isnan(v); })) {
    throw EvaluationFailed("critical_set_scan", "grad_theta phi is NaN");
  }
  RayStats st;
  st.growth = fit_tail(lam, mag).slope;
  st.min_ratio = *std::min_element(ratio.begin() + static_cast<std::ptrdiff_t>(lam.size() / 2), ratio.end());
  st.ratio_slope = fit_tail(lam, ratio).slope;
  st.critical = st.min_ratio < th.eps_crit || st.ratio_slope < -th.slope_tol;
  return st;
}

}  // namespace

// ------------------------------------------------------------ critical set

std::vector<RayVerdict> critical_set_scan(const PhaseFn& phi, const CriticalScanConfig& cfg) {
  const Dims& d = phi.dims;
  const Tape tape = gradient_tape(phi, true);
  const std::vector<Vec> dirs = cfg.dirs.empty() ? direction_set(d.s, 256) : cfg.dirs;
  const Vec lam = cfg.ladder.values();
  Ladder offset = cfg.ladder;
  offset.start *= std::sqrt(2.0);
  const Vec lam2 = offset.values();
  const Thresholds& th = cfg.thresholds;

  std::vector<std::vector<RayVerdict>> per_x(cfg.xs.size());
  detail::parallel_for(cfg.xs.size(), cfg.threads, [&](std::size_t i) {
    const Vec& x = cfg.xs[i];
    std::vector<double> out, out2;
    auto verdict = [&](const Vec& dir, const RayStats& st, bool refined) {
      RayVerdict v;
      v.x = x;
      v.dir = dir;
      v.slope = st.growth;
      v.min_ratio = st.min_ratio;
      v.ratio_slope = st.ratio_slope;
      v.critical = st.critical;
      v.refined = refined;
      if (cfg.conic_check) {
        detail::eval_rays(tape, x, {dir}, lam2, out2);
        v.conic_consistent = ray_stats(out2, 0, lam2, d.s, phi.mu, th).critical == st.critical;
      }
      return v;
    };
    auto& res = per_x[i];
    detail::eval_rays(tape, x, dirs, lam, out);
    std::vector<std::pair<double, std::size_t>> weakest;
    for (std::size_t di = 0; di < dirs.size(); ++di) {
      const RayStats st = ray_stats(out, di, lam, d.s, phi.mu, th);
      weakest.emplace_back(st.min_ratio, di);
      if (st.critical || cfg.keep_regular) res.push_back(verdict(dirs[di], st, false));
    }
    // Critical rays form a closed cone that sampled directions can straddle;
    // descending the tail ratio from the weakest samples lands on it.
    const std::size_t nref = std::min<std::size_t>(static_cast<std::size_t>(std::max(0, cfg.refine)), weakest.size());
    std::partial_sort(weakest.begin(), weakest.begin() + static_cast<std::ptrdiff_t>(nref), weakest.end());
    for (std::size_t q = 0; q < nref; ++q) {
      if (weakest[q].first == 0.0) continue;  // already exact
      auto tail_min = [&](const Vec& dir) {
        detail::eval_rays(tape, x, {dir}, lam, out2);
        return ray_stats(out2, 0, lam, d.s, phi.mu, th).min_ratio;
      };
      double v = 0.0;
      const Vec best = detail::refine_on_sphere(tail_min, dirs[weakest[q].second], 0.1, v, {}, 1e-7, 1000);
      detail::eval_rays(tape, x, {best}, lam, out2);
      const RayStats st = ray_stats(out2, 0, lam, d.s, phi.mu, th);
      if (st.critical || cfg.keep_regular) res.push_back(verdict(best, st, true));
    }
  });
  std::vector<RayVerdict> all;
  for (auto& v : per_x) std::move(v.begin(), v.end(), std::back_inserter(all));
  return all;
}

std::vector<Vec> singular_support(const std::vector<RayVerdict>& scan) {
  std::vector<Vec> pts;
  for (const auto& v : scan) {
    if (v.critical && (pts.empty() || pts.back() != v.x) && std::find(pts.begin(), pts.end(), v.x) == pts.end()) {
      pts.push_back(v.x);
    }
  }
  return pts;
}

// ------------------------------------------------- stationary-phase set

std::vector<CovectorVerdict> stationary_phase_scan(const PhaseFn& phi, const std::vector<RayVerdict>& critical,
                                                   const SPScanConfig& cfg) {
  const Dims& d = phi.dims;
  const std::size_t n = static_cast<std::size_t>(d.n);
  const Tape tape = gradient_tape(phi, false);
  const Vec lam = cfg.ladder.values();
  const std::size_t nr = lam.size(), half = nr / 2;
  const std::vector<Vec> base = cfg.kdirs.empty() ? direction_set(d.n, 256) : cfg.kdirs;

  std::vector<Vec> xs;
  std::vector<std::vector<Vec>> crit;
  {
    std::map<Vec, std::size_t> index;
    for (const auto& v : critical) {
      if (!v.critical) continue;
      auto [it, fresh] = index.emplace(v.x, xs.size());
      if (fresh) {
        xs.push_back(v.x);
        crit.emplace_back();
      }
      crit[it->second].push_back(v.dir);
    }
  }

  std::vector<std::vector<CovectorVerdict>> per_x(xs.size());
  detail::parallel_for(xs.size(), cfg.threads, [&](std::size_t i) {
    const auto& dirs = crit[i];
    std::vector<double> out;
    detail::eval_rays(tape, xs[i], dirs, lam, out);
    // Unit grad_x phi per (critical direction, rung); NaN marks a zero gradient.
    for (std::size_t row = 0; row < dirs.size() * nr; ++row) {
      std::span<double> u(out.data() + row * n, n);
      const double un = norm(u);
      for (auto& c : u) c = un > 0.0 ? c / un : std::numeric_limits<double>::quiet_NaN();
    }
    auto unit = [&](std::size_t c, std::size_t r) { return std::span<const double>(out.data() + (c * nr + r) * n, n); };

    std::vector<std::pair<Vec, bool>> probes;
    for (const auto& k : base) probes.emplace_back(k, false);
    if (cfg.add_candidates) {
      std::vector<Vec> cands;
      for (std::size_t c = 0; c < dirs.size(); ++c) {
        const auto u = unit(c, nr - 1);
        if (std::isnan(u[0])) continue;
        const bool dup = std::any_of(cands.begin(), cands.end(), [&](const Vec& w) { return angle(u, w) < 1e-3; });
        if (!dup) cands.emplace_back(u.begin(), u.end());
      }
      for (auto& k : cands) probes.emplace_back(std::move(k), true);
    }

    auto& res = per_x[i];
    res.reserve(probes.size());
    for (const auto& [k, cand] : probes) {
      CovectorVerdict v;
      v.x = xs[i];
      v.khat = k;
      v.candidate = cand;
      v.min_angle = std::numeric_limits<double>::infinity();
      std::size_t wit = 0;
      for (std::size_t c = 0; c < dirs.size(); ++c) {
        for (std::size_t r = half; r < nr; ++r) {
          const auto u = unit(c, r);
          if (std::isnan(u[0])) continue;
          const double a = angle(u, k);
          if (a < v.min_angle) {
            v.min_angle = a;
            wit = c;
          }
        }
      }
      if (std::isfinite(v.min_angle)) {
        v.witness_dir = dirs[wit];
        for (std::size_t r = 0; r < nr; ++r) {
          const auto u = unit(wit, r);
          v.angle_trace.push_back(std::isnan(u[0]) ? std::numeric_limits<double>::quiet_NaN() : angle(u, k));
        }
      }
      v.in_sp = v.min_angle < cfg.thresholds.alpha_tol;
      res.push_back(std::move(v));
    }
  });
  std::vector<CovectorVerdict> all;
  for (auto& v : per_x) std::move(v.begin(), v.end(), std::back_inserter(all));
  return all;
}

// ---------------------------------------------------------- wave front set

const char* to_string(DirectionVerdict v) {
  switch (v) {
    case DirectionVerdict::Smooth:
      return "smooth_direction";
    case DirectionVerdict::Singular:
      return "singular_direction";
    case DirectionVerdict::Inconclusive:
      return "inconclusive";
    case DirectionVerdict::Failed:
      return "failed";
  }
  return "?";
}

DecayFit fit_decay(const Vec& rhos, const Vec& magnitudes, const Vec& floors, double scale) {
  DecayFit f;
  std::vector<std::size_t> good;
  for (std::size_t i = 0; i < rhos.size(); ++i) {
    if (std::isfinite(magnitudes[i]) && magnitudes[i] > floors[i]) good.push_back(i);
  }
  f.good = static_cast<int>(good.size());
  double fitted = -std::numeric_limits<double>::infinity();
  if (good.size() >= 2) {
    const std::size_t start = std::min(good.size() / 2, good.size() - 2);
    Vec lx, ly;
    for (std::size_t j = start; j < good.size(); ++j) {
      lx.push_back(std::log(rhos[good[j]]));
      ly.push_back(std::log(magnitudes[good[j]]));
    }
    const double k = static_cast<double>(lx.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t j = 0; j < lx.size(); ++j) {
      sx += lx[j];
      sy += ly[j];
      sxx += lx[j] * lx[j];
      sxy += lx[j] * ly[j];
    }
    const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    const double icpt = (sy - slope * sx) / k;
    double ss = 0.0;
    for (std::size_t j = 0; j < lx.size(); ++j) ss += std::pow(ly[j] - icpt - slope * lx[j], 2);
    fitted = -slope;
    f.residual = std::sqrt(ss / k);
    f.accelerating = true;
    for (std::size_t j = 2; j < lx.size(); ++j) {
      const double prev = -(ly[j - 1] - ly[j - 2]) / (lx[j - 1] - lx[j - 2]);
      const double next = -(ly[j] - ly[j - 1]) / (lx[j] - lx[j - 1]);
      if (next < prev - 0.5) f.accelerating = false;
    }
  }
  // Bound from the last good rung (or (1, scale)) to the first floor rung after it.
  double bound = -std::numeric_limits<double>::infinity();
  const std::size_t from = good.empty() ? 0 : good.back() + 1;
  const double r0 = good.empty() ? 1.0 : rhos[good.back()];
  const double m0 = good.empty() ? scale : magnitudes[good.back()];
  if (from < rhos.size() && m0 > 0.0 && floors[from] > 0.0 && rhos[from] > r0) {
    bound = std::log(m0 / floors[from]) / std::log(rhos[from] / r0);
  }
  f.lower_bound = bound > fitted;
  f.N = std::max(fitted, bound);
  if (!std::isfinite(f.N)) f.N = 0.0;
  return f;
}

WavefrontReport wavefront_scan(const SymbolFn& a, const PhaseFn& phi, const WavefrontConfig& cfg) {
  const int s = phi.dims.s;
  Vec rhos = cfg.rhos;
  if (rhos.empty()) {
    for (int i = 0; i <= 8; ++i) rhos.push_back(4.0 * std::ldexp(1.0, i));
  }
  FourierPolicy policy = FourierPolicy::Direct;
  switch (cfg.policy) {
    case WavefrontConfig::Policy::Auto:
      policy = spectral_applicable(a, phi) ? FourierPolicy::Spectral
               : a.order < -s              ? FourierPolicy::Direct
                                           : FourierPolicy::ThetaReduced;
      break;
    case WavefrontConfig::Policy::Direct:
      policy = FourierPolicy::Direct;
      break;
    case WavefrontConfig::Policy::Spectral:
      policy = FourierPolicy::Spectral;
      break;
    case WavefrontConfig::Policy::ThetaReduced:
      policy = FourierPolicy::ThetaReduced;
      break;
    case WavefrontConfig::Policy::FourierReduced:
      policy = FourierPolicy::FourierReduced;
      break;
  }
  const int reductions =
      cfg.reductions > 0 || policy == FourierPolicy::Direct || policy == FourierPolicy::Spectral ? cfg.reductions : 1;
  QuadOptions q = cfg.quad;
  q.strict = false;
  q.threads = 1;
  const Thresholds& th = cfg.thresholds;

  WavefrontReport rep;
  rep.thresholds = th;
  rep.window_radius = cfg.window_radius;
  rep.policy = to_string(policy);
  const std::size_t nk = cfg.kdirs.size();
  rep.entries.resize(cfg.points.size() * nk);
  detail::parallel_for(rep.entries.size(), cfg.threads, [&](std::size_t idx) {
    WavefrontEntry& e = rep.entries[idx];
    e.x0 = cfg.points[idx / nk];
    e.khat = cfg.kdirs[idx % nk];
    detail::normalize(e.khat);
    const TestFn psi = cfg.window == TestFn::Kind::Gaussian ? TestFn::gaussian(e.x0, cfg.window_radius)
                                                            : TestFn::bump(e.x0, cfg.window_radius);
    try {
      double mass = 0.0;
      int floor_run = 0;
      for (double rho : rhos) {
        Vec k(e.khat);
        for (auto& c : k) c *= rho;
        const FourierResult r = windowed_fourier(a, phi, psi, k, policy, q, reductions);
        mass = std::max(mass, r.mass);
        const double mag = std::abs(r.value);
        const double floor = std::max(3.0 * r.abs_err, cfg.noise_rel * mass);
        e.rhos.push_back(rho);
        e.magnitudes.push_back(mag);
        e.errors.push_back(r.abs_err);
        e.floors.push_back(floor);
        floor_run = mag > floor ? 0 : floor_run + 1;
        if (cfg.floor_stop > 0 && floor_run >= cfg.floor_stop) break;
      }
      const DecayFit f = fit_decay(e.rhos, e.magnitudes, e.floors, mass);
      e.N = f.N;
      e.residual = f.residual;
      e.lower_bound = f.lower_bound;
      // A floor-implied bound is not a fit, so the residual cap does not apply
      // to it; neither does it to accelerating decay.
      if (e.N >= th.N_threshold && (f.lower_bound || f.accelerating || f.residual <= th.residual_cap)) {
        e.verdict = DirectionVerdict::Smooth;
      } else if (e.N <= th.N_singular && !f.lower_bound) {
        e.verdict = DirectionVerdict::Singular;
      } else {
        e.verdict = DirectionVerdict::Inconclusive;
      }
    } catch (const std::exception& ex) {
      e.verdict = DirectionVerdict::Failed;
      e.error = ex.what();
    }
  });
  return rep;
}

}  // namespace oscint
