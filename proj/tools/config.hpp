#pragma once

// Run configuration: a single JSON document, validated strictly (unknown keys
// are errors) and echoed back with every default filled in.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "oscint/microlocal.hpp"
#include "oscint/quadrature.hpp"

namespace oscint::cli {

using nlohmann::json;

struct RunConfig {
  std::string command;  // may be empty until the command line supplies it

  // Phase source: exactly one of `expr` / `preset`.
  std::optional<std::string> expr;
  std::optional<std::string> preset;
  std::map<std::string, double> params;

  Dims dims;
  double mu = 1.0;
  std::string phase;  // expression text (from expr or the built preset)
  std::string symbol;     // real part
  std::string symbol_im;  // imaginary part, may be empty
  double symbol_order = 0.0;
  bool symbol_order_declared = true;  // false: estimated from growth
  Box box;

  ScanConfig scan;  // validation and growth estimates
  std::uint64_t seed = 1;
  int threads = 1;
  QuadOptions quad;
  Thresholds thresholds;

  std::vector<Vec> eval_points;

  TestFn f;  // pairing test function
  std::string pair_method = "direct";  // direct | regularized
  std::optional<int> pair_p;

  int crit_grid = 3;  // grid points per axis for critical-set / stationary-phase
  int crit_directions = 256;
  int crit_refine = 2;
  bool crit_keep_regular = false;
  int sp_kdirections = 256;

  WavefrontConfig wavefront;
  int wf_kdirections = 16;  // used when wavefront.kdirs is empty

  std::string out_dir = ".";

  json echo() const;  // effective configuration
};

// Throws ConfigParse (with line) or ConfigInvalid (with field).
json read_json_file(const std::string& path);
RunConfig parse_config(const json& j);
RunConfig load_config(const std::string& path);

}  // namespace oscint::cli
