// oscint: command-line front end. Exit codes: 0 success, 2 invalid phase,
// 1 any other failure.

#include <iostream>
#include <regex>
#include <thread>

#include "CLI11.hpp"
#include "commands.hpp"
#include "oscint/errors.hpp"

namespace {

using oscint::cli::json;

// "bump(c1, ..., cn, r)" or "gaussian(...)"; the last number is the radius.
json parse_test_fn(const std::string& text) {
  static const std::regex form(R"(\s*(bump|gaussian)\s*\(([^)]*)\)\s*)");
  std::smatch m;
  if (!std::regex_match(text, m, form)) {
    throw oscint::ConfigInvalid("load_config", "field '--f': expected bump(c1,...,cn,r) or gaussian(c1,...,cn,r)");
  }
  std::vector<double> nums;
  std::stringstream ss(m[2].str());
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      nums.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw oscint::ConfigInvalid("load_config", "field '--f': bad number '" + item + "'");
    }
  }
  if (nums.size() < 2) throw oscint::ConfigInvalid("load_config", "field '--f': needs a center and a radius");
  const double r = nums.back();
  nums.pop_back();
  return {{"kind", m[1].str()}, {"center", nums}, {"radius", r}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Oscillatory integrals with phase functions of arbitrary order: validation, evaluation and "
               "microlocal scans"};
  std::string command, config_path, preset, symbol, f_spec, out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  app.add_option("command", command, "validate|eval|pair|critical-set|stationary-phase|wavefront|presets")
      ->required();
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--preset", preset, "phase preset (see `oscint presets`)");
  auto* seed_opt = app.add_option("--seed", seed, "seed for direction sets and lattice shifts");
  auto* threads_opt = app.add_option("--threads", threads, "worker threads (default: all cores)")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "output directory for report.json and CSVs");
  app.add_option("--symbol", symbol, "symbol expression (order estimated from growth)");
  app.add_option("--f", f_spec, "pairing test function, e.g. bump(0,1)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  json raw = json::object();
  try {
    if (!oscint::cli::known_command(command)) {
      throw oscint::ConfigInvalid("run_command", "unknown command '" + command + "'");
    }
    if (!config_path.empty()) raw = oscint::cli::read_json_file(config_path);
    if (!raw.is_object()) throw oscint::ConfigInvalid("load_config", "field '<root>': must be an object");
    raw["command"] = command;
    if (!preset.empty()) raw["preset"] = preset;
    if (command == "presets" && !raw.contains("preset") && !raw.contains("expr")) raw["preset"] = "linear";
    if (*seed_opt) raw["seed"] = seed;
    if (*threads_opt) {
      raw["threads"] = threads;
    } else if (!raw.contains("threads")) {
      raw["threads"] = std::max(1u, std::thread::hardware_concurrency());
    }
    if (!symbol.empty()) raw["symbol"] = symbol;
    if (!f_spec.empty()) raw["pair"]["f"] = parse_test_fn(f_spec);
    if (!out_dir.empty()) raw["output"]["dir"] = out_dir;

    const oscint::cli::RunConfig cfg = oscint::cli::parse_config(raw);
    const oscint::cli::Outcome out = oscint::cli::run_command(command, cfg);
    oscint::cli::write_outcome(out, cfg.out_dir);
    const json& rep = out.report;
    std::cout << command << ": " << rep["status"].get<std::string>();
    if (rep.contains("error")) {
      std::cout << " (" << rep["error"]["kind"].get<std::string>() << ": " << rep["error"]["message"].get<std::string>()
                << ")";
    }
    std::cout << "; report in " << cfg.out_dir << "/report.json\n";
    return out.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "oscint: " << e.what() << "\n";
    try {
      oscint::cli::write_outcome(oscint::cli::config_failure(command, raw, e), out_dir.empty() ? "." : out_dir);
    } catch (const std::exception& w) {
      std::cerr << "oscint: " << w.what() << "\n";
    }
    return 1;
  }
}
