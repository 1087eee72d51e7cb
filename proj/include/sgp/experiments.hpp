#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "sgp/types.hpp"

namespace sgp {

using Json = nlohmann::ordered_json;

/// Fully-resolved configuration for a named experiment: per-experiment
/// defaults overlaid with the user's settings. Throws InvalidArgumentError
/// with the offending field path on malformed input.
Json resolve_config(const std::string& experiment, const Json& user);

/// Built-in defaults for a named experiment.
Json default_config(const std::string& experiment);

struct RunOutcome {
  Json manifest;
  bool partial = false;  // some sub-runs failed; their errors are recorded
};

/// Executes the experiment described by `config` (already resolved), writing
/// manifest.json plus per-method result files into `out_dir`.
RunOutcome run_experiment(const Json& config, const std::string& out_dir,
                          int jobs = 1);

/// Reads manifest.json from `run_dir` and writes delimited plot-data series
/// plus a self-contained plotting script per figure into `out_dir`.
/// Returns the list of files written.
std::vector<std::string> emit_plots(const std::string& run_dir,
                                    const std::string& out_dir);

}  // namespace sgp
