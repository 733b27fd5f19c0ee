#pragma once

// Phase functions shared by the test suites, written out as expressions so
// the core tests do not depend on the CLI preset registry.

#include <limits>
#include <string>
#include <vector>

#include "oscint/calculus.hpp"

namespace fixture {

struct PhaseCase {
  std::string name;
  std::string text;
  oscint::Dims dims;
  double mu;
  double box;  // half-width of the cube [-box, box]^n
};

inline const std::string kKleinGordon = "-x1*sqrt(t1^2+t2^2+t3^2+1) + x2*t1 + x3*t2 + x4*t3";
inline const std::string kDistorted3 =
    "-x1*sqrt(t1^2+t2^2+t3^2 + (1+t1^2+t2^2+t3^2)*sqrt(1+t1^2+t2^2+t3^2)) + x2*t1 + x3*t2 + x4*t3";
inline const std::string kMoyalEuclid = "x1*(t1+t3) + x2*(t2+t4) + t1*t4 - t2*t3";
inline const std::string kMoyalHyper =
    "x1*(sqrt(t1^2+1)+sqrt(t2^2+1)) + x2*(t1+t2) + sqrt(t1^2+1)*t2 - t1*sqrt(t2^2+1)";

inline std::vector<PhaseCase> valid_phases() {
  return {{"linear", "x1*t1", oscint::Dims(1, 1), 1.0, 2.0},
          {"kg2pt", kKleinGordon, oscint::Dims(4, 3), 1.0, 2.0},
          {"distorted3", kDistorted3, oscint::Dims(4, 3), 1.5, 2.0},
          {"moyal-euclid", kMoyalEuclid, oscint::Dims(2, 4), 2.0, 1.0}};
}

inline oscint::ScanConfig scan_on(const PhaseCase& c) {
  oscint::ScanConfig cfg;
  cfg.box = oscint::Box::cube(c.dims.n, -c.box, c.box);
  return cfg;
}

inline oscint::PhaseFn validated(const PhaseCase& c) {
  return oscint::validate_phase(oscint::parse(c.text, c.dims), c.dims, c.mu, scan_on(c));
}

inline oscint::SymbolFn symbol(const std::string& re, const oscint::Dims& d, double order) {
  return {oscint::CExpr(oscint::parse(re, d)), d, order};
}

inline constexpr double kMinusInf = -std::numeric_limits<double>::infinity();

}  // namespace fixture
