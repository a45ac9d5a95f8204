#pragma once

// Experiment configuration. The file format is line oriented:
//
//   # comment
//   section.key = value
//
// Lists are comma separated. Keys not listed in config_keys() are rejected.

#include <cstdint>
#include <string>
#include <vector>

#include "mvelab/ddpg.hpp"
#include "mvelab/dyn_model.hpp"
#include "mvelab/value_expansion.hpp"

namespace mvelab {

struct ExperimentConfig {
  std::string env = "point_mass";
  MveConfig mve;

  AgentConfig agent;
  int batch_size = 128;
  NoiseConfig noise;

  DynamicsConfig dynamics;
  int dynamics_steps = 4;  ///< dynamics gradient steps per collected step
  int dynamics_batch = 128;
  bool oracle_dynamics = false;
  bool always_fit_model = false;  ///< fit the learned model even when the mode ignores it

  std::int64_t total_steps = 30000;
  int gradient_steps = 4;  ///< agent iterations per collected step
  std::int64_t warmup_steps = 1000;
  std::int64_t model_warmup_steps = 500;
  std::int64_t replay_capacity = 1000000;

  std::int64_t eval_interval = 500;
  int eval_episodes = 5;

  std::vector<std::uint64_t> seeds{0, 1, 2, 3};
  std::string output_dir = "runs";

  bool operator==(const ExperimentConfig&) const;
};

ExperimentConfig desk_profile();
ExperimentConfig full_profile();
/// "desk" or "full".
ExperimentConfig named_profile(const std::string& name);

/// Every accepted key in canonical order.
const std::vector<std::string>& config_keys();

/// Applies `key = value` lines on top of `base`. Throws ContractViolation on
/// unknown or duplicate keys, malformed values, or an invalid result.
ExperimentConfig parse_config(const std::string& text, const ExperimentConfig& base = desk_profile());
ExperimentConfig load_config(const std::string& path, const ExperimentConfig& base = desk_profile());

/// Sets one key. Same errors as parse_config.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& config, const std::string& key);

/// Every key in canonical order with shortest round-trip number formatting.
std::string to_canonical_text(const ExperimentConfig& config);

/// Throws ContractViolation naming the first problem.
void validate(const ExperimentConfig& config);

/// Keys whose values differ between the two configs.
std::vector<std::string> differing_keys(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace mvelab
