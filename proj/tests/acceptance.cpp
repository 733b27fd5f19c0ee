// Acceptance checks. `acceptance` runs every criterion; `acceptance N` runs
// one. Each prints a single "criterion N: PASS|FAIL (seconds) detail" line;
// the exit status is nonzero when any selected criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "commands.hpp"
#include "config.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "oscint/microlocal.hpp"

using namespace oscint;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

const fixture::PhaseCase& phase_case(const std::string& name) {
  static const auto cases = fixture::valid_phases();
  for (const auto& c : cases) {
    if (c.name == name) return c;
  }
  throw std::out_of_range(name);
}

double norm(const Vec& v) {
  double s = 0;
  for (double c : v) s += c * c;
  return std::sqrt(s);
}

// -------------------------------------------------------------------- 1

Verdict transpose_identity() {
  double worst = 0;
  std::string where;
  for (const auto& c : fixture::valid_phases()) {
    const PhaseFn p = fixture::validated(c);
    const double r = verify_transpose_identity(build_reducer(p), p, 1000);
    if (r >= worst) worst = r, where = c.name;
  }
  return {worst <= 1e-9, "max residual " + fmt(worst) + " (" + where + ")"};
}

// -------------------------------------------------------------------- 2

Verdict gaussian_oracle() {
  const Dims d(1, 1);
  ScanConfig sc;
  sc.box = Box::cube(1, -2, 2);
  const PhaseFn phi = validate_phase(parse("x1*t1", d), d, 1.0, sc);
  const SymbolFn a = fixture::symbol("exp(-t1^2)", d, fixture::kMinusInf);

  const std::vector<Vec> xs{{-2}, {-1}, {0}, {1}, {2}};
  const auto pw = eval_pointwise(a, phi, xs);
  double rel = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double ref = oracle::gaussian_transform(xs[i][0]);
    rel = std::max(rel, std::abs(pw.values[i] - ref) / ref);
  }
  const double ref = oracle::simpson([](double x) { return oracle::bump(x) * oracle::gaussian_transform(x); }, -1, 1);
  const auto pr = pair_direct(a, phi, TestFn::bump({0.0}, 1.0));
  const double abs_err = std::abs(pr.value - ref);
  return {rel <= 1e-6 && abs_err <= 1e-6,
          "pointwise max rel err " + fmt(rel) + ", pairing abs err " + fmt(abs_err) + " (" + pr.method + ")"};
}

// -------------------------------------------------------------------- 3

Verdict regularization_consistency() {
  const auto& kc = phase_case("kg2pt");
  const PhaseFn kg = fixture::validated(kc);
  const TestFn f = TestFn::bump({0, 0, 0, 0}, 1.0);
  std::string detail;
  bool pass = true;

  // a = 1: p = 4 against p = 5.
  const SymbolFn one = fixture::symbol("1", kc.dims, 0.0);
  try {
    QuadOptions o;
    o.strict = false;
    const auto r5 = pair_regularized(one, kg, f, 5, o);
    const auto r4 = pair_regularized(one, kg, f, 4, o);
    const double gap = std::abs(r4.value - r5.value);
    const double est = r4.abs_err + r4.tail_bound + r5.abs_err + r5.tail_bound;
    pass = pass && gap <= est;
    detail += "a=1: |p4 - p5| " + fmt(gap) + " vs estimates " + fmt(est);
  } catch (const Error& e) {
    pass = false;
    detail += std::string("a=1: ") + e.kind() + ": " + e.what();
  }

  // a = exp(-|theta|^2): p = 1 against the direct integral. The 7-D
  // regularized integrand is only reachable by the lattice rule.
  const SymbolFn g = fixture::symbol("exp(-t1^2-t2^2-t3^2)", kc.dims, fixture::kMinusInf);
  try {
    const auto direct = pair_direct(g, kg, f);
    QuadOptions o;
    o.strict = false;
    o.tol = 1e-3;
    o.budget = 3e10;
    o.R0 = 4;
    const auto reg = pair_regularized(g, kg, f, 1, o);
    const double gap = std::abs(reg.value - direct.value);
    const double est = reg.abs_err + reg.tail_bound + direct.abs_err + direct.tail_bound;
    pass = pass && gap <= est;
    detail += "; a=exp: direct " + fmt(direct.value.real()) + " +- " + fmt(direct.abs_err) + ", p=1 " +
              fmt(reg.value.real()) + " +- " + fmt(reg.abs_err) + " (" + reg.method + "), gap " + fmt(gap);
  } catch (const Error& e) {
    pass = false;
    detail += std::string("; a=exp: ") + e.kind() + ": " + e.what();
  }
  return {pass, detail};
}

// -------------------------------------------------------------------- 4

// Distance of a verdict from {x = 0} or the light cone with its direction.
bool on_kg_critical_set(const RayVerdict& v, double grid_tol, double angle_tol) {
  const double r = std::hypot(v.x[1], v.x[2], v.x[3]);
  if (r == 0 && v.x[0] == 0) return true;
  if (std::abs(std::abs(v.x[0]) - r) > grid_tol) return false;
  if (r == 0) return true;  // the apex neighbourhood carries every direction
  const double sg = v.x[0] > 0 ? 1.0 : -1.0;
  return oracle::angle(v.dir, {sg * v.x[1], sg * v.x[2], sg * v.x[3]}) <= angle_tol;
}

Verdict kg_critical_set() {
  const PhaseFn kg = fixture::validated(phase_case("kg2pt"));
  CriticalScanConfig cc;
  cc.xs = Box::cube(4, -2, 2).grid(9);
  cc.dirs = direction_set(3, 256);
  cc.keep_regular = false;
  const auto scan = critical_set_scan(kg, cc);
  int bad = 0;
  for (const auto& v : scan) bad += !on_kg_critical_set(v, 0.5, 0.05);
  const auto support = singular_support(scan);
  const std::set<Vec> found(support.begin(), support.end());
  int cone = 0, missed = 0;
  for (const auto& x : cc.xs) {
    if (std::abs(std::abs(x[0]) - std::hypot(x[1], x[2], x[3])) > 1e-12) continue;
    ++cone;
    missed += !found.count(x);
  }
  return {bad == 0 && missed == 0 && cone > 0, std::to_string(scan.size()) + " critical rays, " + std::to_string(bad) +
                                                   " off the set; " + std::to_string(cone - missed) + "/" +
                                                   std::to_string(cone) + " set points detected"};
}

// -------------------------------------------------------------------- 5

Verdict kg_stationary_phase() {
  const PhaseFn kg = fixture::validated(phase_case("kg2pt"));
  CriticalScanConfig cc;
  cc.xs = {{0, 0, 0, 0}, {1, 1, 0, 0}};
  cc.keep_regular = false;
  const auto sp = stationary_phase_scan(kg, critical_set_scan(kg, cc), {});
  int at_origin = 0, on_cone = 0;
  double worst = 0;
  for (const auto& v : sp) {
    if (!v.in_sp) continue;
    double a;
    if (v.x[0] == 0) {
      ++at_origin;
      const double kn = std::hypot(v.khat[1], v.khat[2], v.khat[3]);
      a = oracle::angle(v.khat, {-kn, v.khat[1], v.khat[2], v.khat[3]});
    } else {
      ++on_cone;
      a = oracle::angle(v.khat, {-1, 1, 0, 0});
    }
    worst = std::max(worst, a);
  }
  return {at_origin > 0 && on_cone > 0 && worst <= 0.1,
          "in_SP " + std::to_string(at_origin) + " at 0, " + std::to_string(on_cone) +
              " at (1,1,0,0); worst angle " + fmt(worst) + " rad"};
}

// -------------------------------------------------------------------- 6

WavefrontConfig precise_wavefront() {
  WavefrontConfig w;
  w.quad.tol = 1e-7;
  w.quad.strict = false;
  return w;
}

Verdict kg_wavefront() {
  const auto& kc = phase_case("kg2pt");
  const PhaseFn kg = fixture::validated(kc);
  const SymbolFn one = fixture::symbol("1", kc.dims, 0.0);

  WavefrontConfig off = precise_wavefront();
  off.points = {{1, 0.5, 0, 0}};
  off.kdirs = direction_set(4, 16);
  const auto r1 = wavefront_scan(one, kg, off);
  int smooth = 0;
  double weakest = INFINITY;
  for (const auto& e : r1.entries) {
    smooth += e.verdict == DirectionVerdict::Smooth && e.N >= 6;
    weakest = std::min(weakest, e.N);
  }

  WavefrontConfig cone = precise_wavefront();
  const double h = 1 / std::sqrt(2.0);
  cone.points = {{1, 1, 0, 0}};
  cone.kdirs = {{-h, h, 0, 0}, {h, h, 0, 0}};
  const auto r2 = wavefront_scan(one, kg, cone);
  const double n_sing = r2.entries[0].N, n_smooth = r2.entries[1].N;
  const bool pass = smooth == 16 && n_sing <= 1.5 && n_smooth >= 6;
  return {pass, "(1,0.5,0,0): " + std::to_string(smooth) + "/16 smooth, min N " + fmt(weakest) +
                    "; (1,1,0,0): N " + fmt(n_sing) + " along (-1,1,0,0), N " + fmt(n_smooth) + " along (1,1,0,0)"};
}

// -------------------------------------------------------------------- 7

Verdict moyal_euclid() {
  const auto& mc = phase_case("moyal-euclid");
  PhaseFn m;
  try {
    m = fixture::validated(mc);
  } catch (const Error& e) {
    return {false, std::string("validation failed: ") + e.what()};
  }
  CriticalScanConfig cc;
  cc.xs = Box::cube(2, -1, 1).grid(9);
  cc.keep_regular = false;
  const auto crit = critical_set_scan(m, cc);

  const SymbolFn a = fixture::symbol("exp(-(t1^2+t2^2+t3^2+t4^2))", mc.dims, fixture::kMinusInf);
  WavefrontConfig w = precise_wavefront();
  w.points = {{0, 0}, {0.5, -0.3}, {-0.7, 0.6}};
  w.kdirs = direction_set(2, 16);
  const auto rep = wavefront_scan(a, m, w);
  int smooth = 0;
  for (const auto& e : rep.entries) smooth += e.verdict == DirectionVerdict::Smooth;
  const int total = static_cast<int>(rep.entries.size());
  return {m.mu == 2.0 && crit.empty() && smooth == total,
          "valid with mu 2 (C " + fmt(m.cert.C) + "); " + std::to_string(crit.size()) + " critical rays; " +
              std::to_string(smooth) + "/" + std::to_string(total) + " wavefront directions smooth"};
}

// -------------------------------------------------------------------- 8

Verdict moyal_hyper() {
  const cli::RunConfig cfg = cli::parse_config({{"command", "validate"}, {"preset", "moyal-hyper"}, {"threads", 1}});
  const cli::Outcome out = cli::run_command("validate", cfg);
  const auto& err = out.report.value("error", cli::json::object());
  if (out.exit_code != 2 || err.value("kind", "") != "DegeneratePhase") {
    return {false, "exit " + std::to_string(out.exit_code) + ", error " + err.dump()};
  }
  const auto dir = err["witness"]["direction"].get<Vec>();
  const bool same_sign = dir.size() == 2 && dir[0] * dir[1] > 0;
  return {same_sign, "exit 2, witness direction (" + fmt(dir.at(0)) + ", " + fmt(dir.at(1)) + ")"};
}

// -------------------------------------------------------------------- 9

Verdict distorted() {
  const auto& dc = phase_case("distorted3");
  const PhaseFn p = fixture::validated(dc);
  CriticalScanConfig cc;
  cc.xs = Box::cube(4, -2, 2).grid(9);
  cc.keep_regular = false;
  const auto crit = critical_set_scan(p, cc);
  const auto sp = stationary_phase_scan(p, crit, {});
  int in = 0, bad = 0;
  double worst = 0;
  for (const auto& v : sp) {
    if (!v.in_sp) continue;
    ++in;
    const double a = std::acos(std::min(1.0, std::abs(v.khat[0]) / norm(v.khat)));
    worst = std::max(worst, a);
    bad += std::abs(v.x[0]) > 0.25 || a > 0.1;
  }
  return {p.mu == 1.5 && in > 0 && bad == 0, "valid with mu 1.5; " + std::to_string(in) + " in_SP covectors, " +
                                                 std::to_string(bad) + " off x1 = 0 or off +-e1; worst angle " +
                                                 fmt(worst) + " rad"};
}

// -------------------------------------------------------------------- 10

struct Suite {
  std::string name;
  std::function<std::string()> run;  // empty string: passed
};

std::string fd_suite() {
  std::mt19937_64 rng(10);
  for (const auto& c : fixture::valid_phases()) {
    const Expr e = parse(c.text, c.dims);
    for (int v = 0; v < c.dims.n + c.dims.s; ++v) {
      const Var var = v < c.dims.n ? X(v) : Theta(v - c.dims.n);
      const Expr de = diff(e, var);
      for (int k = 0; k < 100; ++k) {
        auto x = oracle::uniform_point(rng, c.dims.n, -c.box, c.box);
        auto t = oracle::uniform_point(rng, c.dims.s, -4, 4);
        double& slot = v < c.dims.n ? x[v] : t[v - c.dims.n];
        const double at = slot;
        const double fd = oracle::central_difference(
            [&](double u) {
              slot = u;
              return eval(e, x, t);
            },
            at);
        slot = at;
        if (std::abs(eval(de, x, t) - fd) > 1e-6 * (1 + std::abs(fd))) return c.name + " variable " + std::to_string(v);
      }
    }
  }
  return "";
}

std::string round_trip_suite() {
  for (const auto& c : fixture::valid_phases()) {
    const Expr e = parse(c.text, c.dims);
    if (parse(format(e), c.dims) != e) return c.name;
    for (int j = 0; j < c.dims.s; ++j) {
      const Expr de = diff(e, Theta(j));
      if (parse(format(de), c.dims) != de) return c.name + " d/dt" + std::to_string(j + 1);
    }
  }
  return "";
}

std::string order_algebra_suite() {
  struct Item {
    std::string name, text;
    Dims dims;
  };
  const std::vector<Item> items{{"omega", "sqrt(t1^2+t2^2+t3^2+1)", Dims(4, 3)},
                                {"kg2pt", fixture::kKleinGordon, Dims(4, 3)},
                                {"moyal", fixture::kMoyalEuclid, Dims(2, 4)}};
  for (const auto& it : items) {
    ScanConfig sc;
    sc.box = Box::cube(it.dims.n, -1, 1);
    const double tol = sc.order_tol;
    const Expr a = parse(it.text, it.dims);
    const double ga = estimate_growth(a, it.dims, sc).slope;
    for (int j = 0; j < it.dims.s; ++j) {
      const double gd = estimate_growth(diff(a, Theta(j)), it.dims, sc).slope;
      if (gd > ga - 1 + tol) return it.name + " d/dt" + std::to_string(j + 1) + ": " + fmt(gd) + " vs " + fmt(ga);
    }
    for (const auto& other : items) {
      if (!(other.dims == it.dims)) continue;
      const Expr b = parse(other.text, other.dims);
      const double gb = estimate_growth(b, it.dims, sc).slope;
      const double gab = estimate_growth(a * b, it.dims, sc).slope;
      if (gab > ga + gb + tol) return it.name + "*" + other.name + ": " + fmt(gab) + " vs " + fmt(ga + gb);
    }
  }
  return "";
}

std::string conic_suite() {
  for (const auto& name : {"kg2pt", "distorted3"}) {
    const PhaseFn p = fixture::validated(phase_case(name));
    CriticalScanConfig cc;
    cc.xs = Box::cube(4, -2, 2).grid(5);
    for (const auto& v : critical_set_scan(p, cc)) {
      if (!v.conic_consistent) return std::string(name) + " verdict changes on the offset ladder";
    }
  }
  return "";
}

std::string containment_suite() {
  // Stationary-phase points lie in the critical projection.
  for (const auto& name : {"kg2pt", "distorted3"}) {
    const PhaseFn p = fixture::validated(phase_case(name));
    CriticalScanConfig cc;
    cc.xs = Box::cube(4, -2, 2).grid(5);
    cc.keep_regular = false;
    const auto crit = critical_set_scan(p, cc);
    const auto supp = singular_support(crit);
    const std::set<Vec> proj(supp.begin(), supp.end());
    for (const auto& v : stationary_phase_scan(p, crit, {})) {
      if (v.in_sp && !proj.count(v.x)) return std::string(name) + " in_SP point outside the critical projection";
    }
  }
  // Singular wavefront directions lie in SP: the plane wave in two dimensions
  // (the delta distribution) probed on and off the origin.
  const Dims d(2, 2);
  ScanConfig sc;
  sc.box = Box::cube(2, -1, 1);
  const PhaseFn lin = validate_phase(parse("x1*t1 + x2*t2", d), d, 1.0, sc);
  CriticalScanConfig cc;
  cc.xs = {{0, 0}, {0.5, 0}};
  SPScanConfig spc;
  spc.kdirs = direction_set(2, 8);
  spc.add_candidates = false;
  const auto sp = stationary_phase_scan(lin, critical_set_scan(lin, cc), spc);
  WavefrontConfig w;
  w.points = cc.xs;
  w.kdirs = spc.kdirs;
  w.quad.strict = false;
  const auto rep = wavefront_scan(fixture::symbol("1", d, 0.0), lin, w);
  int singular = 0;
  for (const auto& e : rep.entries) {
    if (e.verdict != DirectionVerdict::Singular) continue;
    ++singular;
    bool covered = false;
    for (const auto& v : sp) covered |= v.in_sp && v.x == e.x0 && oracle::angle(v.khat, e.khat) < 1e-9;
    if (!covered) return "singular wavefront direction outside SP";
  }
  if (singular == 0) return "no singular direction found at the origin";
  return "";
}

std::string determinism_suite() {
  const cli::json raw = {{"command", "stationary-phase"}, {"preset", "kg2pt"}, {"seed", 7}, {"threads", 1}};
  const auto a = cli::run_command("stationary-phase", cli::parse_config(raw));
  const auto b = cli::run_command("stationary-phase", cli::parse_config(raw));
  if (a.report.dump(2) != b.report.dump(2)) return "report differs between identical runs";
  if (a.files != b.files) return "CSV output differs between identical runs";
  cli::json threaded = raw;
  threaded["threads"] = 2;
  auto c = cli::run_command("stationary-phase", cli::parse_config(threaded));
  if (c.report["result"] != a.report["result"]) return "result depends on the thread count";
  return "";
}

Verdict invariant_suites() {
  const std::vector<Suite> suites{{"finite differences", fd_suite},   {"round trip", round_trip_suite},
                                  {"order algebra", order_algebra_suite}, {"conic consistency", conic_suite},
                                  {"containment", containment_suite}, {"determinism", determinism_suite}};
  std::string failures;
  for (const auto& s : suites) {
    std::string why;
    try {
      why = s.run();
    } catch (const std::exception& e) {
      why = e.what();
    }
    if (!why.empty()) failures += (failures.empty() ? "" : "; ") + s.name + ": " + why;
  }
  return {failures.empty(), failures.empty() ? std::to_string(suites.size()) + " suites passed" : failures};
}

struct Criterion {
  int id;
  double limit_s;
  Verdict (*run)();
};

const Criterion kCriteria[] = {
    {1, 10, transpose_identity}, {2, 30, gaussian_oracle}, {3, 300, regularization_consistency},
    {4, 120, kg_critical_set},   {5, 120, kg_stationary_phase}, {6, 600, kg_wavefront},
    {7, 300, moyal_euclid},      {8, 30, moyal_hyper},      {9, 180, distorted},
    {10, 300, invariant_suites},
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  bool all_pass = true;
  for (const auto& c : kCriteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.limit_s) {
      v.pass = false;
      v.detail += "; over the " + fmt(c.limit_s) + " s limit";
    }
    all_pass = all_pass && v.pass;
    std::cout << "criterion " << c.id << ": " << (v.pass ? "PASS" : "FAIL") << " (" << fmt(secs) << " s) " << v.detail
              << std::endl;
  }
  return all_pass ? 0 : 1;
}
