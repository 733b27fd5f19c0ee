#pragma once

// Registry of named phase functions with their parameters, default symbols,
// scan boxes and the results the analysis is expected to reproduce.

#include <map>
#include <string>
#include <vector>

#include "oscint/calculus.hpp"

namespace oscint::cli {

struct PresetParam {
  std::string name;
  double value;  // default
  std::string doc;
};

struct Preset {
  std::string name;
  std::string summary;
  std::vector<PresetParam> params;
  bool expected_valid = true;
  std::string critical_set;      // expected M(phi)
  std::string stationary_phase;  // expected SP(phi)
};

// A preset instantiated with concrete parameters.
struct BuiltPreset {
  Dims dims;
  std::string phase;
  double mu = 1.0;
  std::string symbol;
  double symbol_order = 0.0;
  Box box;
  std::map<std::string, double> params;  // defaults merged with overrides
};

const std::vector<Preset>& presets();
const Preset* find_preset(const std::string& name);

// Throws ConfigInvalid for unknown presets, unknown parameters or values
// outside a preset's admissible range.
BuiltPreset build_preset(const std::string& name, const std::map<std::string, double>& overrides);

}  // namespace oscint::cli
