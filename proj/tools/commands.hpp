#pragma once

#include <map>
#include <string>

#include "config.hpp"

namespace oscint::cli {

extern const char* const kVersion;

// Everything a command produces. Files are named relative to the output
// directory; `exit_code` is 0 (success), 2 (invalid phase) or 1 (error).
struct Outcome {
  int exit_code = 0;
  json report;
  std::map<std::string, std::string> files;  // name -> contents (CSV)
};

bool known_command(const std::string& cmd);

// Never throws for library errors: they are rendered into the report.
Outcome run_command(const std::string& cmd, const RunConfig& cfg);

// Report for a configuration that failed to load.
Outcome config_failure(const std::string& cmd, const json& raw, const std::exception& e);

json preset_catalog();

// Writes report.json plus `files` into `dir` (created if missing).
void write_outcome(const Outcome& out, const std::string& dir);

}  // namespace oscint::cli
