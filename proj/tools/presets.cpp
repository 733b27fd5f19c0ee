#include "presets.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "oscint/errors.hpp"

namespace oscint::cli {

namespace {

// Shortest decimal that parses back to v.
std::string num(double v) {
  for (int prec = 1; prec <= 17; ++prec) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    if (std::stod(os.str()) == v) return os.str();
  }
  return std::to_string(v);
}

std::string theta_norm2(int from, int count) {
  std::string out;
  for (int j = 0; j < count; ++j) out += (j ? "+" : "") + ("t" + std::to_string(from + j)) + "^2";
  return out;
}

int integer_param(const std::string& preset, const std::string& name, double v, int lo) {
  if (v != std::floor(v) || v < lo || v > 64) {
    throw ConfigInvalid("build_preset", preset + "." + name + " must be an integer in [" + std::to_string(lo) +
                                            ", 64], got " + num(v));
  }
  return static_cast<int>(v);
}

using Builder = std::function<BuiltPreset(const std::map<std::string, double>&)>;

BuiltPreset linear(const std::map<std::string, double>& p, bool gaussian) {
  const int n = gaussian ? 1 : integer_param("linear", "n", p.at("n"), 1);
  BuiltPreset b;
  b.dims = Dims(n, n);
  for (int i = 1; i <= n; ++i) b.phase += (i > 1 ? " + " : "") + ("x" + std::to_string(i)) + "*t" + std::to_string(i);
  b.mu = 1.0;
  if (gaussian) {
    b.symbol = "exp(-t1^2)";
    b.symbol_order = -std::numeric_limits<double>::infinity();
  } else {
    b.symbol = "1";
    b.symbol_order = 0.0;
  }
  b.box = Box::cube(n, -2.0, 2.0);
  return b;
}

// phi = -x1 sqrt(|theta|^2 + f(theta)) + (x2, x3, x4) . theta.
BuiltPreset dispersion(const std::string& radicand, double mu) {
  BuiltPreset b;
  b.dims = Dims(4, 3);
  b.phase = "-x1*sqrt(" + radicand + ") + x2*t1 + x3*t2 + x4*t3";
  b.mu = mu;
  b.symbol = "1";
  b.symbol_order = 0.0;
  b.box = Box::cube(4, -2.0, 2.0);
  return b;
}

BuiltPreset kg2pt(const std::map<std::string, double>& p) {
  const double m2 = p.at("m2");
  // omega is not smooth at theta = 0 without a mass gap.
  if (!(m2 > 0.0) || !std::isfinite(m2)) throw ConfigInvalid("build_preset", "kg2pt.m2 must be positive, got " + num(m2));
  return dispersion(theta_norm2(1, 3) + "+" + num(m2), 1.0);
}

BuiltPreset distorted(const std::map<std::string, double>& p) {
  const int nu = integer_param("distorted", "nu", p.at("nu"), 1);
  const std::string q = "(1+" + theta_norm2(1, 3) + ")";
  std::string f;
  if (nu % 2 == 0) {
    f = nu == 2 ? q : q + "^" + std::to_string(nu / 2);
  } else {
    f = nu == 1 ? "sqrt" + q : (nu == 3 ? q : q + "^" + std::to_string(nu / 2)) + "*sqrt" + q;
  }
  // sqrt(|theta|^2 + f) grows like |theta|^max(1, nu/2).
  return dispersion(theta_norm2(1, 3) + " + " + f, std::max(1.0, nu / 2.0));
}

// x . (theta1 + theta2) + theta1^t sigma theta2 with sigma = diag(eps, ..., eps),
// eps the 2x2 symplectic unit; theta1 = (t1..td), theta2 = (t(d+1)..t(2d)).
BuiltPreset moyal_euclid(const std::map<std::string, double>& p) {
  const int d = integer_param("moyal-euclid", "d", p.at("d"), 2);
  if (d % 2 != 0) throw ConfigInvalid("build_preset", "moyal-euclid.d must be even, got " + std::to_string(d));
  auto t = [](int j) { return "t" + std::to_string(j); };
  BuiltPreset b;
  b.dims = Dims(d, 2 * d);
  for (int i = 1; i <= d; ++i) {
    b.phase += (i > 1 ? " + " : "") + ("x" + std::to_string(i)) + "*(" + t(i) + "+" + t(d + i) + ")";
  }
  for (int i = 1; i <= d; i += 2) {
    b.phase += " + " + t(i) + "*" + t(d + i + 1) + " - " + t(i + 1) + "*" + t(d + i);
  }
  b.mu = 2.0;
  b.symbol = "exp(-(" + theta_norm2(1, 2 * d) + "))";
  b.symbol_order = -std::numeric_limits<double>::infinity();
  b.box = Box::cube(d, -1.0, 1.0);
  return b;
}

// d = 2: x . (w1 + w2) + w1^t eps w2 with w = (omega(t), t).
BuiltPreset moyal_hyper(const std::map<std::string, double>& p) {
  const double m2 = p.at("m2");
  if (!(m2 > 0.0) || !std::isfinite(m2)) {
    throw ConfigInvalid("build_preset", "moyal-hyper.m2 must be positive, got " + num(m2));
  }
  const std::string w1 = "sqrt(t1^2+" + num(m2) + ")", w2 = "sqrt(t2^2+" + num(m2) + ")";
  BuiltPreset b;
  b.dims = Dims(2, 2);
  b.phase = "x1*(" + w1 + "+" + w2 + ") + x2*(t1+t2) + " + w1 + "*t2 - t1*" + w2;
  b.mu = 2.0;
  b.symbol = "exp(-t1^2-t2^2)";
  b.symbol_order = -std::numeric_limits<double>::infinity();
  b.box = Box::cube(2, -1.0, 1.0);
  return b;
}

struct Entry {
  Preset meta;
  Builder build;
};

const std::vector<Entry>& registry() {
  static const std::vector<Entry> r = {
      {{"linear",
        "phi = x . theta on R^n x R^n, symbol 1; D(a) is (2 pi)^n delta",
        {{"n", 1, "dimension n = s"}},
        true,
        "{x = 0} x all directions",
        "x = 0, every covector direction"},
       [](const auto& p) { return linear(p, false); }},
      {{"gaussian",
        "phi = x t1 (n = s = 1) with symbol exp(-t1^2); D(a)(x) = sqrt(pi) exp(-x^2/4)",
        {},
        true,
        "{x = 0} x {+1, -1}",
        "x = 0, k = +-1 (the output is nevertheless smooth: the symbol has order -inf)"},
       [](const auto& p) { return linear(p, true); }},
      {{"kg2pt",
        "Klein-Gordon two-point phase -x1 omega(theta) + (x2, x3, x4) . theta, omega = sqrt(|theta|^2 + m2), mu = 1",
        {{"m2", 1, "mass squared, > 0"}},
        true,
        "x = 0 with every direction, and |x1| = |(x2,x3,x4)| != 0 with direction (x2,x3,x4) sign(x1)",
        "at x = 0: (-|k|, k); on the light cone: (-|xv|, xv) up to positive scaling"},
       kg2pt},
      {{"distorted",
        "distorted dispersion -x1 sqrt(|theta|^2 + (1+|theta|^2)^(nu/2)) + (x2, x3, x4) . theta, mu = max(1, nu/2)",
        {{"nu", 3, "integer order of the distortion"}},
        true,
        "for nu > 2: {x1 = 0} with every direction",
        "for nu > 2: x1 = 0 with covector direction (-1, 0, 0, 0)"},
       distorted},
      {{"moyal-euclid",
        "Euclidean Moyal twisted convolution x . (theta1 + theta2) + theta1^t sigma theta2, sigma of full rank, mu = 2",
        {{"d", 2, "even space dimension"}},
        true,
        "empty",
        "empty"},
       moyal_euclid},
      {{"moyal-hyper",
        "hyperbolic Moyal twisted convolution with theta~ = (omega(theta), theta), d = 2",
        {{"m2", 1, "mass squared, > 0"}},
        false,
        "not defined: the nondegeneracy bound fails along rays where theta1 and theta2 share sign",
        "not defined"},
       moyal_hyper},
  };
  return r;
}

}  // namespace

const std::vector<Preset>& presets() {
  static const std::vector<Preset> list = [] {
    std::vector<Preset> out;
    for (const auto& e : registry()) out.push_back(e.meta);
    return out;
  }();
  return list;
}

const Preset* find_preset(const std::string& name) {
  for (const auto& p : presets()) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

BuiltPreset build_preset(const std::string& name, const std::map<std::string, double>& overrides) {
  for (const auto& e : registry()) {
    if (e.meta.name != name) continue;
    std::map<std::string, double> p;
    for (const auto& d : e.meta.params) p[d.name] = d.value;
    for (const auto& [k, v] : overrides) {
      if (!p.count(k)) throw ConfigInvalid("build_preset", "preset " + name + " has no parameter '" + k + "'");
      p[k] = v;
    }
    BuiltPreset b = e.build(p);
    b.params = p;
    return b;
  }
  throw ConfigInvalid("build_preset", "unknown preset '" + name + "'");
}

}  // namespace oscint::cli
