/*
   Copyright 2026 The semiperm Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

// Batch driver: semiperm --config run.json [--experiment NAME] [--seed S] [--out DIR] [--force]

#include "semiperm/experiments.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

namespace {

enum Exit { ok = 0, checks_failed = 1, usage_error = 2, assumption_failed = 3, runtime_failed = 4 };

void report_error(const std::string& kind, const std::string& message, const semiperm::ExperimentConfig* cfg,
                  const std::string& out_dir) {
  nlohmann::json rec = {{"status", "error"}, {"error", kind}, {"message", message}};
  if (cfg) {
    rec["experiment"] = cfg->experiment;
    rec["config_hash"] = semiperm::hash_hex(cfg->hash());
  }
  std::cerr << rec.dump() << "\n";
  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    std::ofstream(std::filesystem::path(out_dir) / "error.json") << rec.dump(2) << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusions with semipermeable membranes: batch experiments"};
  std::string config_path, experiment, out_dir;
  std::uint64_t seed = 0;
  bool force = false;
  app.add_option("--config", config_path, "JSON experiment configuration")->required()->check(CLI::ExistingFile);
  app.add_option("--experiment", experiment, "override the experiment named in the config")
      ->check(CLI::IsMember({"validate", "exit-stats", "pseudo-gen", "homogenize", "fig2", "rates"}));
  auto* seed_opt = app.add_option("--seed", seed, "override the master seed");
  app.add_option("--out", out_dir, "output directory (default: the config's \"output\")");
  app.add_flag("--force", force, "run even if the scenario fails the assumption checks");
  CLI11_PARSE(app, argc, argv);

  semiperm::ExperimentConfig cfg;
  try {
    std::ifstream is(config_path);
    cfg = semiperm::ExperimentConfig::from_json(nlohmann::json::parse(is));
    if (!experiment.empty()) cfg.experiment = experiment;
    if (*seed_opt) cfg.seed = seed;
    if (!out_dir.empty()) cfg.output = out_dir;
    cfg.validate();
  } catch (const nlohmann::json::exception& e) {
    report_error("invalid_config", e.what(), nullptr, out_dir);
    return usage_error;
  } catch (const semiperm::Error& e) {
    report_error(semiperm::to_string(e.kind()), e.what(), nullptr, out_dir);
    return usage_error;
  }

  try {
    std::error_code ec;
    std::filesystem::remove(std::filesystem::path(cfg.output) / "error.json", ec);
    const semiperm::ExperimentResult r = semiperm::run_experiment(cfg, force);
    semiperm::write_artifacts(cfg, r, cfg.output);
    std::cout << semiperm::summary_text(cfg, r);
    if (cfg.experiment == "validate" && !r.passed()) {
      for (const auto& [name, content] : r.files)
        if (name == "validation.txt") std::cout << content;
      report_error("assumption_failure", "scenario violates the standing assumptions", &cfg, cfg.output);
      return assumption_failed;
    }
    return r.passed() ? ok : checks_failed;
  } catch (const semiperm::Error& e) {
    if (e.kind() == semiperm::ErrorKind::assumption_failure) {
      std::cout << e.what();
      report_error("assumption_failure", e.what(), &cfg, cfg.output);
      return assumption_failed;
    }
    const bool usage = e.kind() == semiperm::ErrorKind::invalid_argument ||
                       e.kind() == semiperm::ErrorKind::unknown_scenario ||
                       e.kind() == semiperm::ErrorKind::dimension_mismatch;
    report_error(semiperm::to_string(e.kind()), e.what(), &cfg, cfg.output);
    return usage ? usage_error : runtime_failed;
  } catch (const std::exception& e) {
    report_error("internal", e.what(), &cfg, cfg.output);
    return runtime_failed;
  }
}
