#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tsmpc/experiments.hpp"
#include "tsmpc/io.hpp"

namespace {

using nlohmann::json;

std::string value_to_override(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v.get<double>());
    return buf;
  }
  if (v.is_array()) {
    std::string out;
    for (const json& item : v) {
      if (!out.empty()) out += ",";
      out += value_to_override(item);
    }
    return out;
  }
  throw std::invalid_argument("config values must be numbers, strings, or arrays");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"task-space MPC experiment runner"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "run a registered experiment");
  std::string name;
  run_cmd->add_option("name", name, "experiment name (see 'list')")->required();
  std::vector<std::string> sets;
  run_cmd->add_option("--set", sets, "override as key=value (repeatable)");
  std::string out_dir;
  run_cmd->add_option("--out", out_dir, "output directory (default runs/<name>)");
  bool plots = false;
  run_cmd->add_flag("--plots", plots, "also emit SVG plots");
  uint64_t seed = 0;
  run_cmd->add_option("--seed", seed, "random seed for stochastic pieces");
  std::string config_path;
  run_cmd->add_option("--config", config_path, "JSON file with a flat override object");
  int workers = 0;
  run_cmd->add_option("--workers", workers, "worker pool size (0 = hardware concurrency)");

  auto* report_cmd = app.add_subcommand("report", "aggregate metrics.json files under a directory");
  std::string report_dir;
  report_cmd->add_option("dir", report_dir, "directory holding run outputs")->required();

  auto* list_cmd = app.add_subcommand("list", "list registered experiments");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (list_cmd->parsed()) {
      for (const tsmpc::Experiment& e : tsmpc::experiment_registry()) {
        std::printf("%-18s %s\n", e.name.c_str(), e.summary.c_str());
        std::string keys;
        for (const std::string& k : e.override_keys) keys += (keys.empty() ? "" : ", ") + k;
        std::printf("%-18s overrides: %s\n", "", keys.c_str());
      }
      return 0;
    }

    if (report_cmd->parsed()) {
      std::cout << tsmpc::report_directory(report_dir);
      return 0;
    }

    tsmpc::ExperimentContext ctx;
    ctx.seed = seed;
    ctx.plots = plots;
    ctx.max_workers = workers;
    ctx.out_dir = out_dir.empty() ? "runs/" + name : out_dir;

    if (!tsmpc::find_experiment(name))
      throw std::invalid_argument("unknown experiment: " + name);

    if (!config_path.empty()) {
      const json cfg = json::parse(tsmpc::read_text_file(config_path));
      if (!cfg.is_object())
        throw std::invalid_argument("config file must hold a flat JSON object");
      for (const auto& [key, value] : cfg.items())
        ctx.overrides[key] = value_to_override(value);
    }
    for (const std::string& kv : sets) {
      const size_t eq = kv.find('=');
      if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
      ctx.overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
    }

    const tsmpc::ExperimentResult res = tsmpc::run_experiment(name, ctx);
    for (const tsmpc::CheckResult& c : res.checks)
      std::printf("%s %s: %s\n", c.pass ? "PASS" : "FAIL", c.label.c_str(), c.detail.c_str());
    std::printf("artifacts: %s\n", ctx.out_dir.c_str());
    if (!res.all_passed()) {
      json failure{{"experiment", name}, {"status", "acceptance_failure"}, {"failed", json::array()}};
      for (const tsmpc::CheckResult& c : res.checks)
        if (!c.pass) failure["failed"].push_back({{"label", c.label}, {"detail", c.detail}});
      std::cerr << failure.dump() << "\n";
      return 1;
    }
    return 0;
  } catch (const std::invalid_argument& e) {
    std::cerr << json{{"status", "usage_error"}, {"error", e.what()}}.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << json{{"status", "runtime_error"}, {"error", e.what()}}.dump() << "\n";
    return 3;
  }
}
