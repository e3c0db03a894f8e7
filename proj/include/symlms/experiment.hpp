#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "symlms/analysis.hpp"
#include "symlms/filters.hpp"
#include "symlms/simulate.hpp"

namespace symlms {

struct FilterEntry {
  std::string name;  // unique label, used in file names and result rows
  FilterConfig config;
};

struct ExperimentSpec {
  std::string name;
  SystemSpec system;
  PermutationModel perm;
  std::optional<HyperChain> hyper;
  std::vector<FilterEntry> filters;
  long horizon = 0;
  long eval_at = 0;  // 0 = horizon
  int trials = 1;
  std::uint64_t seed = 0;
  bool reveal = false;
};

/// Strict config parsing: full validation, unknown keys rejected with the
/// offending path in the message. The documented key set is in the README.
ExperimentSpec parse_experiment(const nlohmann::json& config);
SystemSpec parse_system(const nlohmann::json& config);
FilterConfig parse_filter(const nlohmann::json& config, int L, int D);

/// Canned configs reproducing the published experiments:
/// example1..example4, covariance, blackwell, tracking.
nlohmann::json preset_config(const std::string& name);
std::vector<std::string> preset_names();

struct TargetResult {
  std::string description;
  double value = 0.0;
  double target = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct RunResult {
  nlohmann::json summary;
  std::vector<TargetResult> targets;
  bool targets_met = true;
  std::vector<std::string> output_files;
};

/// Dispatch on config["task"]: "simulate", "fit", "analyze" or "reproduce".
/// Artifacts are written under out_dir; the returned summary is also written
/// as <name>_summary.json. Deterministic given the config (seed included).
RunResult run_task(const nlohmann::json& config, const std::string& out_dir);

/// FNV-1a hash of the canonical dump, recorded in summaries for provenance.
std::string config_hash(const nlohmann::json& config);

}  // namespace symlms
