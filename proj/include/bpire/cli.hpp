#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace bpire::cli {

// Raised for malformed invocations/configs; maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string model_file;
  std::string experiment;
  nlohmann::json parameters;  // object; schema depends on the experiment
  std::uint64_t seed = 0;
  std::string out_dir;
};

// Names of all runnable experiments.
const std::vector<std::string>& experiment_registry();

ExperimentConfig config_from_json_text(const std::string& text, const std::string& origin);
ExperimentConfig config_from_json_file(const std::string& path);

// Canonical serialization (sorted keys, model file content inlined) and its
// FNV-1a 64-bit digest. Reruns of an identical config hash identically.
std::string canonical_config_text(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

struct VerdictRecord {
  std::string experiment;
  std::string timestamp;
  std::string config_hash;
  bool pass = false;
  nlohmann::json metrics;
  std::vector<std::string> artifacts;
  nlohmann::json to_json() const;
};

// Runs one experiment: writes its CSVs and verdict JSON under cfg.out_dir
// and returns the verdict. `force` skips the model-assumption gate.
VerdictRecord run_config(const ExperimentConfig& cfg, unsigned workers = 0, bool force = false);

// Subcommand entry points (argv semantics, return process exit codes:
// 0 pass, 1 verdict failure, 2 usage/config error).
int cmd_validate(const std::string& model_file, double delta, double p, double q,
                 const std::string& json_out = "");
int cmd_run(const std::string& config_file, const std::string& out_override,
            const std::string& seed_override, unsigned workers, bool force);
int cmd_suite(const std::string& suite_file, unsigned workers);

// Stable formatting helper shared by all CSV writers ("%.17g").
std::string format_double(double v);

}  // namespace bpire::cli
