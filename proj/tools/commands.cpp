#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oscint/errors.hpp"
#include "oscint/expr.hpp"
#include "oscint/regularize.hpp"
#include "presets.hpp"

#ifndef OSCINT_VERSION
#define OSCINT_VERSION "0.0.0"
#endif

namespace oscint::cli {

const char* const kVersion = OSCINT_VERSION;

namespace {

const char* const kCommands[] = {"validate", "eval", "pair", "critical-set", "stationary-phase", "wavefront",
                                 "presets"};

json complex_json(Complex z) { return json::array({z.real(), z.imag()}); }

// Non-finite values have no JSON literal; infinities become strings, NaN null.
json number(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  return v;
}

std::string csv_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string csv_header(const char* prefix, int count) {
  std::string h;
  for (int i = 1; i <= count; ++i) h += std::string(prefix) + std::to_string(i) + ",";
  return h;
}

std::string csv_row(const Vec& v) {
  std::string r;
  for (double c : v) r += csv_num(c) + ",";
  return r;
}

json error_json(const std::exception& e) {
  json j = {{"message", e.what()}};
  if (const auto* oe = dynamic_cast<const Error*>(&e)) {
    j["kind"] = oe->kind();
    j["module"] = oe->module();
    j["operation"] = oe->operation();
  } else {
    j["kind"] = "InternalError";
  }
  if (const auto* dp = dynamic_cast<const DegeneratePhase*>(&e)) {
    j["witness"] = {{"x", dp->x()}, {"direction", dp->direction()}, {"lambdas", dp->lambdas()}, {"ratios", dp->ratios()}};
  }
  return j;
}

struct Context {
  const RunConfig& cfg;
  json& result;
  std::map<std::string, std::string>& files;
  Expr phase_expr;
};

SymbolFn make_symbol(const RunConfig& cfg, json& report) {
  SymbolFn a;
  a.dims = cfg.dims;
  const Expr re = parse(cfg.symbol, cfg.dims);
  const Expr im = cfg.symbol_im.empty() ? constant(0) : parse(cfg.symbol_im, cfg.dims);
  a.expr = CExpr(re, im);
  if (cfg.symbol_order_declared) {
    a.order = cfg.symbol_order;
    a.provenance = SymbolFn::Provenance::Declared;
  } else {
    const std::vector<Expr> parts{re, im};
    a.order = estimate_growth(parts, cfg.dims, cfg.scan).slope;
    a.provenance = SymbolFn::Provenance::Estimated;
  }
  report["symbol"] = {{"re", format(re)},
                      {"im", format(im)},
                      {"order", number(a.order)},
                      {"provenance", a.provenance == SymbolFn::Provenance::Declared ? "declared" : "estimated"}};
  return a;
}

json certificate_json(const Certificate& c) {
  return {{"C", c.C},
          {"D", c.D},
          {"min_ratio", c.min_ratio},
          {"box", {{"lo", c.box.lo}, {"hi", c.box.hi}}},
          {"directions", c.directions},
          {"grid_per_axis", c.grid_per_axis},
          {"ladder", {{"start", c.ladder.start}, {"base", c.ladder.base}, {"rungs", c.ladder.rungs}}}};
}

void cmd_validate(Context& c, const PhaseFn& phi) {
  c.result["valid"] = true;
  c.result["certificate"] = certificate_json(phi.cert);
  c.result["eta"] = format(eta_expr(phi.expr, phi.dims));
  const Reducer R = build_reducer(phi);
  c.result["transpose_residual"] = verify_transpose_identity(R, phi, 1000, c.cfg.seed);
}

void cmd_eval(Context& c, const PhaseFn& phi, const SymbolFn& a) {
  const PointwiseResult r = eval_pointwise(a, phi, c.cfg.eval_points, c.cfg.quad);
  json pts = json::array();
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    pts.push_back({{"x", c.cfg.eval_points[i]}, {"value", complex_json(r.values[i])}, {"abs_err", r.errors[i]}});
  }
  c.result["points"] = pts;
  c.result["smoothness"] = r.smoothness;
}

void cmd_pair(Context& c, const PhaseFn& phi, const SymbolFn& a) {
  const PairingResult r = c.cfg.pair_method == "direct" ? pair_direct(a, phi, c.cfg.f, c.cfg.quad)
                                                        : pair_regularized(a, phi, c.cfg.f, c.cfg.pair_p, c.cfg.quad);
  c.result = {{"value", complex_json(r.value)},
              {"abs_err", r.abs_err},
              {"quad_err", r.quad_err},
              {"tail_bound", r.tail_bound},
              {"p", r.p},
              {"R", r.R},
              {"post_order", number(r.post_order)},
              {"nodes", r.nodes},
              {"converged", r.converged},
              {"method", r.method}};
}

std::vector<RayVerdict> scan_critical(Context& c, const PhaseFn& phi) {
  CriticalScanConfig cc;
  cc.xs = c.cfg.box.grid(c.cfg.crit_grid);
  cc.dirs = direction_set(phi.dims.s, c.cfg.crit_directions, c.cfg.seed);
  cc.ladder = c.cfg.scan.ladder;
  cc.thresholds = c.cfg.thresholds;
  cc.refine = c.cfg.crit_refine;
  cc.keep_regular = c.cfg.crit_keep_regular;
  cc.threads = c.cfg.threads;
  auto rays = critical_set_scan(phi, cc);

  json list = json::array();
  int critical = 0, inconsistent = 0;
  for (const auto& v : rays) {
    critical += v.critical;
    inconsistent += !v.conic_consistent;
    list.push_back({{"x", v.x},
                    {"dir", v.dir},
                    {"slope", number(v.slope)},
                    {"min_ratio", v.min_ratio},
                    {"ratio_slope", number(v.ratio_slope)},
                    {"verdict", v.critical ? "critical" : "regular"},
                    {"refined", v.refined},
                    {"conic_consistent", v.conic_consistent}});
  }
  const auto supp = singular_support(rays);
  c.result["grid_points"] = cc.xs.size();
  c.result["directions"] = cc.dirs.size();
  c.result["critical_count"] = critical;
  c.result["conic_inconsistent"] = inconsistent;
  c.result["rays"] = list;
  c.result["singular_support"] = supp;

  std::string csv = csv_header("x", phi.dims.n);
  csv.back() = '\n';
  for (const auto& x : supp) {
    std::string row = csv_row(x);
    row.back() = '\n';
    csv += row;
  }
  c.files["singular_support.csv"] = csv;
  return rays;
}

void cmd_stationary_phase(Context& c, const PhaseFn& phi) {
  const auto rays = scan_critical(c, phi);
  c.result.erase("rays");
  SPScanConfig sc;
  sc.kdirs = direction_set(phi.dims.n, c.cfg.sp_kdirections, c.cfg.seed);
  sc.ladder = c.cfg.scan.ladder;
  sc.thresholds = c.cfg.thresholds;
  sc.threads = c.cfg.threads;
  const auto cov = stationary_phase_scan(phi, rays, sc);
  json in = json::array();
  std::string csv = csv_header("x", phi.dims.n) + csv_header("khat", phi.dims.n) + "min_angle,candidate\n";
  for (const auto& v : cov) {
    if (!v.in_sp) continue;
    json trace = json::array();
    for (double t : v.angle_trace) trace.push_back(number(t));
    in.push_back({{"x", v.x},
                  {"khat", v.khat},
                  {"min_angle", v.min_angle},
                  {"witness_dir", v.witness_dir},
                  {"angle_trace", trace},
                  {"candidate", v.candidate}});
    csv += csv_row(v.x) + csv_row(v.khat) + csv_num(v.min_angle) + "," + (v.candidate ? "1" : "0") + "\n";
  }
  c.result["probed"] = cov.size();
  c.result["in_sp_count"] = in.size();
  c.result["in_sp"] = in;
  c.files["stationary_phase.csv"] = csv;
}

void cmd_wavefront(Context& c, const PhaseFn& phi, const SymbolFn& a) {
  const WavefrontReport rep = wavefront_scan(a, phi, c.cfg.wavefront);
  json entries = json::array();
  std::string csv = csv_header("x", phi.dims.n) + csv_header("khat", phi.dims.n) + "N_fit,residual,verdict\n";
  std::map<std::string, int> tally;
  for (const auto& e : rep.entries) {
    ++tally[to_string(e.verdict)];
    json j = {{"x0", e.x0},
              {"khat", e.khat},
              {"N", e.N},
              {"lower_bound", e.lower_bound},
              {"residual", e.residual},
              {"verdict", to_string(e.verdict)},
              {"rhos", e.rhos},
              {"magnitudes", e.magnitudes},
              {"errors", e.errors},
              {"floors", e.floors}};
    if (!e.error.empty()) j["error"] = e.error;
    entries.push_back(j);
    csv += csv_row(e.x0) + csv_row(e.khat) + csv_num(e.N) + "," + csv_num(e.residual) + "," + to_string(e.verdict) +
           "\n";
  }
  const Thresholds& th = rep.thresholds;
  c.result["policy"] = rep.policy;
  c.result["window_radius"] = rep.window_radius;
  c.result["thresholds"] = {{"N_threshold", th.N_threshold},
                            {"N_singular", th.N_singular},
                            {"residual_cap", th.residual_cap}};
  c.result["verdicts"] = tally;
  c.result["entries"] = entries;
  c.files["wavefront.csv"] = csv;
}

}  // namespace

bool known_command(const std::string& cmd) {
  for (const char* c : kCommands) {
    if (cmd == c) return true;
  }
  return false;
}

json preset_catalog() {
  json list = json::array();
  for (const auto& p : presets()) {
    const BuiltPreset b = build_preset(p.name, {});
    json params = json::array();
    for (const auto& q : p.params) params.push_back({{"name", q.name}, {"default", q.value}, {"doc", q.doc}});
    list.push_back({{"name", p.name},
                    {"summary", p.summary},
                    {"dims", {{"n", b.dims.n}, {"s", b.dims.s}}},
                    {"mu", b.mu},
                    {"phase", b.phase},
                    {"symbol", b.symbol},
                    {"params", params},
                    {"expected_valid", p.expected_valid},
                    {"expected_critical_set", p.critical_set},
                    {"expected_stationary_phase", p.stationary_phase}});
  }
  return list;
}

Outcome run_command(const std::string& cmd, const RunConfig& cfg) {
  Outcome out;
  json& rep = out.report;
  rep["tool"] = "oscint";
  rep["version"] = kVersion;
  rep["command"] = cmd;
  rep["seed"] = cfg.seed;
  rep["config"] = cfg.echo();
  rep["result"] = json::object();
  try {
    if (!known_command(cmd)) throw ConfigInvalid("run_command", "unknown command '" + cmd + "'");
    if (cmd == "presets") {
      rep["result"]["presets"] = preset_catalog();
    } else {
      Context c{cfg, rep["result"], out.files, parse(cfg.phase, cfg.dims)};
      rep["phase"] = {{"expr", format(c.phase_expr)}, {"dims", {{"n", cfg.dims.n}, {"s", cfg.dims.s}}}, {"mu", cfg.mu}};
      const PhaseFn phi = validate_phase(c.phase_expr, cfg.dims, cfg.mu, cfg.scan);
      if (cmd == "validate") {
        cmd_validate(c, phi);
      } else if (cmd == "critical-set") {
        scan_critical(c, phi);
      } else if (cmd == "stationary-phase") {
        cmd_stationary_phase(c, phi);
      } else {
        const SymbolFn a = make_symbol(cfg, rep);
        if (cmd == "eval") {
          cmd_eval(c, phi, a);
        } else if (cmd == "pair") {
          cmd_pair(c, phi, a);
        } else {
          cmd_wavefront(c, phi, a);
        }
      }
    }
    rep["status"] = "ok";
  } catch (const DegeneratePhase& e) {
    out.exit_code = 2;
    rep["status"] = "invalid_phase";
    rep["error"] = error_json(e);
    if (cmd == "validate") rep["result"]["valid"] = false;
  } catch (const std::exception& e) {
    out.exit_code = 1;
    rep["status"] = "error";
    rep["error"] = error_json(e);
  }
  return out;
}

Outcome config_failure(const std::string& cmd, const json& raw, const std::exception& e) {
  Outcome out;
  out.exit_code = 1;
  out.report = {{"tool", "oscint"},       {"version", kVersion}, {"command", cmd},
                {"seed", nullptr},        {"config", raw},       {"result", json::object()},
                {"status", "error"},      {"error", error_json(e)}};
  if (raw.is_object() && raw.contains("seed")) out.report["seed"] = raw["seed"];
  return out;
}

void write_outcome(const Outcome& out, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto put = [&](const std::string& name, const std::string& text) {
    std::ofstream f(fs::path(dir) / name, std::ios::binary);
    f << text;
    if (text.empty() || text.back() != '\n') f << '\n';
    if (!f) throw std::runtime_error("cannot write " + (fs::path(dir) / name).string());
  };
  put("report.json", out.report.dump(2));
  for (const auto& [name, text] : out.files) put(name, text);
}

}  // namespace oscint::cli
