#include "config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "oscint/errors.hpp"
#include "oscint/expr.hpp"
#include "presets.hpp"

namespace oscint::cli {

namespace {

[[noreturn]] void invalid(const std::string& field, const std::string& reason) {
  throw ConfigInvalid("load_config", "field '" + field + "': " + reason);
}

// Strict view of one JSON object: every key must be consumed before finish().
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) invalid(path_.empty() ? "<root>" : path_, "must be an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <class T>
  T get(const std::string& key, T def) {
    if (!has(key)) return def;
    return as<T>(raw(key), field(key));
  }

  template <class T>
  static T as(const json& v, const std::string& where) {
    try {
      if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_integer()) invalid(where, "expected an integer");
        if constexpr (std::is_same_v<T, std::uint64_t>) {
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
            invalid(where, "expected a non-negative integer");
          }
        }
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) invalid(where, "expected a number");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      invalid(where, e.what());
    }
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) invalid(field(k), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Vec vec_of(const json& v, const std::string& where, std::size_t dim) {
  if (!v.is_array()) invalid(where, "expected an array of numbers");
  Vec out;
  for (const auto& e : v) out.push_back(Reader::as<double>(e, where));
  if (dim && out.size() != dim) invalid(where, "expected " + std::to_string(dim) + " components");
  return out;
}

std::vector<Vec> points_of(const json& v, const std::string& where, std::size_t dim) {
  if (!v.is_array() || v.empty()) invalid(where, "expected a non-empty array of points");
  std::vector<Vec> out;
  for (const auto& e : v) out.push_back(vec_of(e, where, dim));
  return out;
}

double positive(double v, const std::string& where) {
  if (!(v > 0.0) || !std::isfinite(v)) invalid(where, "must be positive");
  return v;
}

int at_least(int v, int lo, const std::string& where) {
  if (v < lo) invalid(where, "must be >= " + std::to_string(lo));
  return v;
}

json order_json(double m) {
  if (std::isinf(m)) return m < 0 ? "-inf" : "inf";
  return m;
}

json points_json(const std::vector<Vec>& pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back(p);
  return a;
}

const char* policy_name(WavefrontConfig::Policy p) {
  switch (p) {
    case WavefrontConfig::Policy::Auto:
      return "auto";
    case WavefrontConfig::Policy::Direct:
      return "direct";
    case WavefrontConfig::Policy::Spectral:
      return "spectral";
    case WavefrontConfig::Policy::ThetaReduced:
      return "theta-reduced";
    case WavefrontConfig::Policy::FourierReduced:
      return "fourier-reduced";
  }
  return "auto";
}

const char* kind_name(TestFn::Kind k) { return k == TestFn::Kind::Bump ? "bump" : "gaussian"; }

TestFn::Kind kind_of(const std::string& s, const std::string& where) {
  if (s == "bump") return TestFn::Kind::Bump;
  if (s == "gaussian") return TestFn::Kind::Gaussian;
  invalid(where, "expected \"bump\" or \"gaussian\"");
}

void read_symbol(RunConfig& cfg, Reader& r) {
  if (!r.has("symbol")) return;
  const json& s = r.raw("symbol");
  if (s.is_string()) {
    cfg.symbol = s.get<std::string>();
    cfg.symbol_im.clear();
    cfg.symbol_order_declared = false;
    return;
  }
  Reader sr(s, r.field("symbol"));
  cfg.symbol = sr.get<std::string>("expr", "");
  if (cfg.symbol.empty()) invalid(sr.field("expr"), "required");
  cfg.symbol_im = sr.get<std::string>("im", "");
  if (sr.has("order")) {
    const json& o = sr.raw("order");
    if (o.is_string() && o.get<std::string>() == "-inf") {
      cfg.symbol_order = -std::numeric_limits<double>::infinity();
    } else {
      cfg.symbol_order = Reader::as<double>(o, sr.field("order"));
    }
    cfg.symbol_order_declared = true;
  } else {
    cfg.symbol_order_declared = false;
  }
  sr.finish();
}

void read_phase_source(RunConfig& cfg, Reader& r) {
  const bool has_expr = r.has("expr"), has_preset = r.has("preset");
  if (has_expr == has_preset) invalid("expr|preset", "exactly one phase source is required");
  std::optional<Dims> dims;
  if (r.has("dims")) {
    Reader dr(r.raw("dims"), "dims");
    dims = Dims(at_least(dr.get<int>("n", 1), 1, "dims.n"), at_least(dr.get<int>("s", 1), 1, "dims.s"));
    dr.finish();
  }
  if (has_preset) {
    cfg.preset = r.get<std::string>("preset", "");
    if (r.has("params")) {
      Reader pr(r.raw("params"), "params");
      for (const auto& [k, v] : r.raw("params").items()) cfg.params[k] = pr.get<double>(k, 0.0);
      pr.finish();
    }
    const BuiltPreset b = build_preset(*cfg.preset, cfg.params);
    if (dims && !(*dims == b.dims)) {
      invalid("dims", "preset " + *cfg.preset + " has n=" + std::to_string(b.dims.n) + ", s=" + std::to_string(b.dims.s));
    }
    cfg.params = b.params;
    cfg.dims = b.dims;
    cfg.phase = b.phase;
    cfg.mu = b.mu;
    cfg.symbol = b.symbol;
    cfg.symbol_order = b.symbol_order;
    cfg.box = b.box;
  } else {
    if (r.has("params")) invalid("params", "only valid with a preset");
    if (!dims) invalid("dims", "required with expr");
    cfg.expr = r.get<std::string>("expr", "");
    cfg.dims = *dims;
    cfg.phase = *cfg.expr;
    cfg.symbol = "1";
    cfg.symbol_order = 0.0;
    cfg.box = Box::cube(cfg.dims.n, -1.0, 1.0);
  }
  cfg.mu = positive(r.get<double>("mu", cfg.mu), "mu");
  read_symbol(cfg, r);
  if (r.has("box")) {
    Reader br(r.raw("box"), "box");
    const auto n = static_cast<std::size_t>(cfg.dims.n);
    Vec lo = vec_of(br.raw("lo"), "box.lo", n), hi = vec_of(br.raw("hi"), "box.hi", n);
    br.finish();
    try {
      cfg.box = Box(lo, hi);
    } catch (const Error& e) {
      invalid("box", e.what());
    }
  }
}

void read_ladder(Ladder& l, const json& j, const std::string& path) {
  Reader r(j, path);
  l.start = positive(r.get<double>("start", l.start), r.field("start"));
  l.base = r.get<double>("base", l.base);
  if (!(l.base > 1.0)) invalid(r.field("base"), "must exceed 1");
  l.rungs = at_least(r.get<int>("rungs", l.rungs), 4, r.field("rungs"));
  r.finish();
}

}  // namespace

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigParse("load_config", path + ": cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ConfigParse("load_config", path + ":" + std::to_string(line) + ": " + e.what());
  }
}

RunConfig parse_config(const json& j) {
  RunConfig cfg;
  Reader r(j, "");
  cfg.command = r.get<std::string>("command", "");
  read_phase_source(cfg, r);

  cfg.seed = r.get<std::uint64_t>("seed", cfg.seed);
  cfg.threads = at_least(r.get<int>("threads", cfg.threads), 1, "threads");

  cfg.scan.box = cfg.box;
  if (r.has("scan")) {
    Reader sr(r.raw("scan"), "scan");
    cfg.scan.grid_per_axis = at_least(sr.get<int>("grid_per_axis", cfg.scan.grid_per_axis), 1, "scan.grid_per_axis");
    cfg.scan.directions = at_least(sr.get<int>("directions", cfg.scan.directions), 0, "scan.directions");
    cfg.scan.order_tol = positive(sr.get<double>("order_tol", cfg.scan.order_tol), "scan.order_tol");
    cfg.scan.plateau_drift = positive(sr.get<double>("plateau_drift", cfg.scan.plateau_drift), "scan.plateau_drift");
    if (sr.has("ladder")) read_ladder(cfg.scan.ladder, sr.raw("ladder"), "scan.ladder");
    sr.finish();
  }

  if (r.has("quadrature")) {
    Reader q(r.raw("quadrature"), "quadrature");
    QuadOptions& o = cfg.quad;
    o.tol = positive(q.get<double>("tol", o.tol), "quadrature.tol");
    o.R0 = positive(q.get<double>("R0", o.R0), "quadrature.R0");
    o.R_max = positive(q.get<double>("R_max", o.R_max), "quadrature.R_max");
    if (o.R_max < o.R0) invalid("quadrature.R_max", "must be >= R0");
    o.order = at_least(q.get<int>("order", o.order), 2, "quadrature.order");
    o.budget = positive(q.get<double>("budget", o.budget), "quadrature.budget");
    o.max_panels = at_least(q.get<int>("max_panels", o.max_panels), 1, "quadrature.max_panels");
    o.allow_spectral = q.get<bool>("allow_spectral", o.allow_spectral);
    o.strict = q.get<bool>("strict", o.strict);
    o.swell_cap = static_cast<std::size_t>(
        at_least(q.get<int>("swell_cap", static_cast<int>(o.swell_cap)), 1, "quadrature.swell_cap"));
    o.fourier_rel_tol = positive(q.get<double>("fourier_rel_tol", o.fourier_rel_tol), "quadrature.fourier_rel_tol");
    q.finish();
  }

  if (r.has("thresholds")) {
    Reader t(r.raw("thresholds"), "thresholds");
    Thresholds& th = cfg.thresholds;
    th.eps_crit = positive(t.get<double>("eps_crit", th.eps_crit), "thresholds.eps_crit");
    th.slope_tol = positive(t.get<double>("slope_tol", th.slope_tol), "thresholds.slope_tol");
    th.alpha_tol = positive(t.get<double>("alpha_tol", th.alpha_tol), "thresholds.alpha_tol");
    th.N_threshold = t.get<double>("N_threshold", th.N_threshold);
    th.N_singular = t.get<double>("N_singular", th.N_singular);
    if (!(th.N_singular < th.N_threshold)) invalid("thresholds.N_singular", "must be below N_threshold");
    th.residual_cap = positive(t.get<double>("residual_cap", th.residual_cap), "thresholds.residual_cap");
    t.finish();
  }

  const auto n = static_cast<std::size_t>(cfg.dims.n);
  Vec center(n);
  for (std::size_t i = 0; i < n; ++i) center[i] = 0.5 * (cfg.box.lo[i] + cfg.box.hi[i]);

  cfg.eval_points = {Vec(n, 0.0)};
  if (r.has("eval")) {
    Reader e(r.raw("eval"), "eval");
    if (e.has("points")) cfg.eval_points = points_of(e.raw("points"), "eval.points", n);
    e.finish();
  }

  cfg.f = TestFn::bump(Vec(n, 0.0), 1.0);
  if (r.has("pair")) {
    Reader p(r.raw("pair"), "pair");
    if (p.has("f")) {
      Reader fr(p.raw("f"), "pair.f");
      cfg.f.kind = kind_of(fr.get<std::string>("kind", "bump"), "pair.f.kind");
      if (fr.has("center")) cfg.f.center = vec_of(fr.raw("center"), "pair.f.center", n);
      cfg.f.radius = positive(fr.get<double>("radius", cfg.f.radius), "pair.f.radius");
      cfg.f.amplitude = fr.get<double>("amplitude", cfg.f.amplitude);
      fr.finish();
    }
    cfg.pair_method = p.get<std::string>("method", cfg.pair_method);
    if (cfg.pair_method != "direct" && cfg.pair_method != "regularized") {
      invalid("pair.method", "expected \"direct\" or \"regularized\"");
    }
    if (p.has("p")) cfg.pair_p = at_least(p.get<int>("p", 0), 0, "pair.p");
    p.finish();
  }

  if (r.has("critical_set")) {
    Reader c(r.raw("critical_set"), "critical_set");
    cfg.crit_grid = at_least(c.get<int>("grid_per_axis", cfg.crit_grid), 1, "critical_set.grid_per_axis");
    cfg.crit_directions = at_least(c.get<int>("directions", cfg.crit_directions), 1, "critical_set.directions");
    cfg.crit_refine = at_least(c.get<int>("refine", cfg.crit_refine), 0, "critical_set.refine");
    cfg.crit_keep_regular = c.get<bool>("keep_regular", cfg.crit_keep_regular);
    c.finish();
  }
  if (r.has("stationary_phase")) {
    Reader s(r.raw("stationary_phase"), "stationary_phase");
    cfg.sp_kdirections = at_least(s.get<int>("kdirections", cfg.sp_kdirections), 1, "stationary_phase.kdirections");
    s.finish();
  }

  WavefrontConfig& w = cfg.wavefront;
  w.points = {center};
  if (r.has("wavefront")) {
    Reader wr(r.raw("wavefront"), "wavefront");
    if (wr.has("points")) w.points = points_of(wr.raw("points"), "wavefront.points", n);
    if (wr.has("kdirs")) {
      w.kdirs = points_of(wr.raw("kdirs"), "wavefront.kdirs", n);
      for (const auto& k : w.kdirs) {
        double s = 0.0;
        for (double c : k) s += c * c;
        if (s == 0.0) invalid("wavefront.kdirs", "zero direction");
      }
    }
    cfg.wf_kdirections = at_least(wr.get<int>("kdirections", cfg.wf_kdirections), 1, "wavefront.kdirections");
    if (wr.has("rhos")) {
      w.rhos = vec_of(wr.raw("rhos"), "wavefront.rhos", 0);
      if (w.rhos.size() < 2) invalid("wavefront.rhos", "needs at least two radii");
      for (std::size_t i = 0; i < w.rhos.size(); ++i) {
        if (!(w.rhos[i] > (i ? w.rhos[i - 1] : 0.0))) invalid("wavefront.rhos", "must be positive and increasing");
      }
    }
    w.window_radius = positive(wr.get<double>("window_radius", w.window_radius), "wavefront.window_radius");
    w.window = kind_of(wr.get<std::string>("window", kind_name(w.window)), "wavefront.window");
    const std::string pol = wr.get<std::string>("policy", policy_name(w.policy));
    bool known = false;
    for (auto p : {WavefrontConfig::Policy::Auto, WavefrontConfig::Policy::Direct, WavefrontConfig::Policy::Spectral,
                   WavefrontConfig::Policy::ThetaReduced, WavefrontConfig::Policy::FourierReduced}) {
      if (pol == policy_name(p)) {
        w.policy = p;
        known = true;
      }
    }
    if (!known) invalid("wavefront.policy", "unknown policy '" + pol + "'");
    w.reductions = at_least(wr.get<int>("reductions", w.reductions), 0, "wavefront.reductions");
    w.noise_rel = positive(wr.get<double>("noise_rel", w.noise_rel), "wavefront.noise_rel");
    w.floor_stop = at_least(wr.get<int>("floor_stop", w.floor_stop), 0, "wavefront.floor_stop");
    wr.finish();
  }
  if (w.kdirs.empty()) w.kdirs = direction_set(cfg.dims.n, cfg.wf_kdirections, cfg.seed);
  if (w.rhos.empty()) {
    for (int i = 0; i <= 8; ++i) w.rhos.push_back(4.0 * std::ldexp(1.0, i));
  }

  if (r.has("output")) {
    Reader o(r.raw("output"), "output");
    cfg.out_dir = o.get<std::string>("dir", cfg.out_dir);
    o.finish();
  }
  r.finish();

  cfg.scan.seed = cfg.seed;
  cfg.scan.threads = cfg.threads;
  cfg.quad.seed = cfg.seed;
  cfg.quad.threads = cfg.threads;
  w.quad = cfg.quad;
  w.thresholds = cfg.thresholds;
  w.threads = cfg.threads;
  return cfg;
}

RunConfig load_config(const std::string& path) { return parse_config(read_json_file(path)); }

json RunConfig::echo() const {
  json j;
  if (!command.empty()) j["command"] = command;
  if (preset) {
    j["preset"] = *preset;
    j["params"] = params;
  } else {
    j["expr"] = *expr;
  }
  j["dims"] = {{"n", dims.n}, {"s", dims.s}};
  j["mu"] = mu;
  json sym = {{"expr", symbol}};
  if (!symbol_im.empty()) sym["im"] = symbol_im;
  if (symbol_order_declared) sym["order"] = order_json(symbol_order);
  j["symbol"] = sym;
  j["box"] = {{"lo", box.lo}, {"hi", box.hi}};
  j["seed"] = seed;
  j["threads"] = threads;
  j["scan"] = {{"grid_per_axis", scan.grid_per_axis},
               {"directions", scan.directions},
               {"order_tol", scan.order_tol},
               {"plateau_drift", scan.plateau_drift},
               {"ladder", {{"start", scan.ladder.start}, {"base", scan.ladder.base}, {"rungs", scan.ladder.rungs}}}};
  j["quadrature"] = {{"tol", quad.tol},
                     {"R0", quad.R0},
                     {"R_max", quad.R_max},
                     {"order", quad.order},
                     {"budget", quad.budget},
                     {"max_panels", quad.max_panels},
                     {"allow_spectral", quad.allow_spectral},
                     {"strict", quad.strict},
                     {"swell_cap", quad.swell_cap},
                     {"fourier_rel_tol", quad.fourier_rel_tol}};
  j["thresholds"] = {{"eps_crit", thresholds.eps_crit},       {"slope_tol", thresholds.slope_tol},
                     {"alpha_tol", thresholds.alpha_tol},     {"N_threshold", thresholds.N_threshold},
                     {"N_singular", thresholds.N_singular},   {"residual_cap", thresholds.residual_cap}};
  j["eval"] = {{"points", points_json(eval_points)}};
  json pair = {{"f", {{"kind", kind_name(f.kind)}, {"center", f.center}, {"radius", f.radius}, {"amplitude", f.amplitude}}},
               {"method", pair_method}};
  if (pair_p) pair["p"] = *pair_p;
  j["pair"] = pair;
  j["critical_set"] = {{"grid_per_axis", crit_grid},
                       {"directions", crit_directions},
                       {"refine", crit_refine},
                       {"keep_regular", crit_keep_regular}};
  j["stationary_phase"] = {{"kdirections", sp_kdirections}};
  j["wavefront"] = {{"points", points_json(wavefront.points)},
                    {"kdirs", points_json(wavefront.kdirs)},
                    {"kdirections", wf_kdirections},
                    {"rhos", wavefront.rhos},
                    {"window_radius", wavefront.window_radius},
                    {"window", kind_name(wavefront.window)},
                    {"policy", policy_name(wavefront.policy)},
                    {"reductions", wavefront.reductions},
                    {"noise_rel", wavefront.noise_rel},
                    {"floor_stop", wavefront.floor_stop}};
  j["output"] = {{"dir", out_dir}};
  return j;
}

}  // namespace oscint::cli
