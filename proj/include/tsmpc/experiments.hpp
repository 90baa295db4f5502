#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace tsmpc {

// One registered acceptance check evaluated by an experiment run.
struct CheckResult {
  std::string label;
  bool pass = false;
  std::string detail;  // measured values, thresholds
};

struct ExperimentContext {
  std::string out_dir;
  std::map<std::string, std::string> overrides;  // validated against declared keys
  uint64_t seed = 0;
  bool plots = false;
  int max_workers = 0;  // 0 = hardware concurrency
};

struct ExperimentResult {
  std::string name;
  std::vector<CheckResult> checks;
  nlohmann::json metrics;  // mirror of the emitted metrics.json

  bool all_passed() const {
    for (const CheckResult& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

struct Experiment {
  std::string name;
  std::string summary;
  std::vector<std::string> override_keys;
  std::function<ExperimentResult(const ExperimentContext&)> run;
};

const std::vector<Experiment>& experiment_registry();
const Experiment* find_experiment(const std::string& name);

// Validates overrides, creates out_dir, runs the experiment, writes run CSVs
// (solve_ms column zeroed so identical runs are byte-identical; timing stats
// live in metrics.json), metrics.json, metadata.json and optional SVG plots.
ExperimentResult run_experiment(const std::string& name, const ExperimentContext& ctx);

// Aggregates every metrics.json found under dir into one comparison table;
// writes report.csv and report.txt into dir and returns the text rendering.
std::string report_directory(const std::string& dir);

}  // namespace tsmpc
