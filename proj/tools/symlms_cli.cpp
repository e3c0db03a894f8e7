// Experiment harness over the symlms C API. Subcommands: simulate, fit,
// analyze, reproduce. Exit codes: 0 all targets met, 1 target missed or
// divergence, 2 usage/config errors.
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "symlms/symlms.h"

namespace {

using nlohmann::json;

struct CommonOptions {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::int64_t> seed;
  std::optional<std::int64_t> trials;
  bool reveal = false;
};

void add_common(CLI::App* cmd, CommonOptions* opts, bool config_required) {
  auto* config = cmd->add_option("--config", opts->config_path, "Path to a JSON experiment config");
  if (config_required) config->required();
  cmd->add_option("--out", opts->out_dir, "Output directory for CSV/JSON artifacts");
  cmd->add_option("--seed", opts->seed, "Override the config seed");
  cmd->add_option("--trials", opts->trials, "Override the number of trials");
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot read " + path);
  json config;
  in >> config;
  return config;
}

void apply_overrides(json* config, const CommonOptions& opts, const std::string& task) {
  (*config)["task"] = task;
  if (opts.seed) (*config)["seed"] = *opts.seed;
  if (opts.trials) (*config)["trials"] = *opts.trials;
  if (opts.reveal) (*config)["reveal"] = true;
}

int run_and_report(const json& config, const std::string& out_dir) {
  char* result_json = nullptr;
  const symlms_status status = symlms_run(config.dump().c_str(), out_dir.c_str(), &result_json);
  std::unique_ptr<char, decltype(&symlms_string_free)> guard(result_json, &symlms_string_free);

  if (status != SYMLMS_OK && !result_json) {
    std::cerr << "error: " << symlms_last_error() << "\n";
    return status == SYMLMS_ERR_DIVERGED ? 1 : 2;
  }
  const json summary = json::parse(result_json);
  if (summary.contains("targets")) {
    for (const auto& t : summary.at("targets")) {
      std::cout << (t.at("pass").get<bool>() ? "PASS" : "FAIL") << "  "
                << t.at("description").get<std::string>() << "  (value "
                << t.at("value").get<double>() << ", target " << t.at("target").get<double>()
                << ", tolerance " << t.at("tolerance").get<double>() << ")\n";
    }
  }
  if (summary.contains("filters")) {
    for (const auto& f : summary.at("filters")) {
      std::cout << f.at("name").get<std::string>() << ": estimate " << f.at("estimate_at_end").dump()
                << " (set error vs theta: " << f.at("set_error_vs_theta").get<double>() << ")\n";
    }
  }
  if (summary.contains("analysis")) std::cout << summary.at("analysis").dump(2) << "\n";
  if (summary.contains("runtime_seconds"))
    std::cout << "runtime: " << summary.at("runtime_seconds").get<double>() << " s\n";
  std::cout << "summary: " << out_dir << "/" << summary.at("experiment").get<std::string>()
            << "_summary.json\n";

  if (status == SYMLMS_OK) return 0;
  if (status == SYMLMS_ERR_TARGET_MISSED || status == SYMLMS_ERR_DIVERGED) return 1;
  std::cerr << "error: " << symlms_last_error() << "\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("symlms ") + symlms_version() +
               " - adaptive filtering on anonymized observation sets"};
  app.require_subcommand(1);

  CommonOptions sim_opts, fit_opts, analyze_opts, repro_opts;
  std::string preset_name;
  bool print_config = false;

  auto* simulate = app.add_subcommand("simulate", "Generate an anonymized trajectory CSV");
  add_common(simulate, &sim_opts, /*config_required=*/true);
  simulate->add_flag("--reveal", sim_opts.reveal,
                     "Include hidden permutation/noise/theta columns");

  auto* fit = app.add_subcommand("fit", "Run the configured filters over simulated data");
  add_common(fit, &fit_opts, /*config_required=*/true);

  auto* analyze = app.add_subcommand("analyze", "Covariance / anonymity / Blackwell / tracking");
  add_common(analyze, &analyze_opts, /*config_required=*/true);

  auto* reproduce = app.add_subcommand("reproduce", "Reproduce a published experiment");
  reproduce->add_option("preset", preset_name,
                        "example1|example2|example3|example4|covariance|blackwell|tracking")
      ->required();
  add_common(reproduce, &repro_opts, /*config_required=*/false);
  reproduce->add_flag("--print-config", print_config, "Print the preset config and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (simulate->parsed()) {
      json config = load_config(sim_opts.config_path);
      apply_overrides(&config, sim_opts, "simulate");
      return run_and_report(config, sim_opts.out_dir);
    }
    if (fit->parsed()) {
      json config = load_config(fit_opts.config_path);
      apply_overrides(&config, fit_opts, "fit");
      return run_and_report(config, fit_opts.out_dir);
    }
    if (analyze->parsed()) {
      json config = load_config(analyze_opts.config_path);
      apply_overrides(&config, analyze_opts, "analyze");
      return run_and_report(config, analyze_opts.out_dir);
    }
    if (reproduce->parsed()) {
      json config;
      if (!repro_opts.config_path.empty()) {
        config = load_config(repro_opts.config_path);
      } else {
        char* preset_json = nullptr;
        if (symlms_preset(preset_name.c_str(), &preset_json) != SYMLMS_OK) {
          std::cerr << "error: " << symlms_last_error() << "\n";
          return 2;
        }
        config = json::parse(preset_json);
        symlms_string_free(preset_json);
      }
      apply_overrides(&config, repro_opts, "reproduce");
      if (print_config) {
        std::cout << config.dump(2) << "\n";
        return 0;
      }
      return run_and_report(config, repro_opts.out_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
