#pragma once

// End-to-end training runs: collect with exploration noise, fit the dynamics
// model, train the agent with the configured value-expansion mode, evaluate
// the noiseless actor on a fixed schedule and log one row per evaluation.
//
// Run directory layout (one per seed):
//   metrics.csv  env_step,eval_return_mean,eval_return_std,critic_bellman_error,model_one_step_mse
//   timing.csv   env_step,wall_time
//   meta.txt     status, run id, seed, then the canonical config
//   agent.json   final agent
//   model.json   final dynamics model (when one was used or fit)

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mvelab/config.hpp"

namespace mvelab {

struct MetricsRow {
  std::int64_t env_step = 0;
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;
  double critic_bellman_error = 0.0;
  double model_one_step_mse = 0.0;  ///< NaN when no model is maintained
  double wall_time = 0.0;           ///< seconds since the run started; timing.csv only
};

inline constexpr const char* kMetricsHeader =
    "env_step,eval_return_mean,eval_return_std,critic_bellman_error,model_one_step_mse";

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;  ///< population std over episodes
  std::vector<double> returns;
  std::vector<Transition> transitions;
};

/// Undiscounted returns of the noiseless actor over full-length episodes.
/// Start states come from `seed` alone, so every call sees the same starts.
EvalResult evaluate_policy(const EnvSpec& env, const MlpParams& actor, const ActionScale& scale,
                           int episodes, std::uint64_t seed);

struct RunResult {
  std::uint64_t seed = 0;
  std::string dir;  ///< empty when nothing was written
  bool failed = false;
  std::string failure;
  std::vector<MetricsRow> rows;
  AgentState agent;
  std::optional<DynamicsModel> model;
};

/// Short hex id derived from the canonical config text and the seed.
std::string run_id(const ExperimentConfig& config, std::uint64_t seed);

/// One seed. Writes the run directory when `dir` is non-empty. A non-finite
/// loss or parameter stops the run; it is then marked failed and the rows
/// logged so far are kept.
RunResult run_seed(const ExperimentConfig& config, std::uint64_t seed, const std::string& dir = "");

struct ExperimentResult {
  std::vector<RunResult> runs;  ///< in config.seeds order
};

/// Every seed in config.seeds, written to <output_dir>/seed_<seed>.
/// Seeds run on up to `threads` threads; results do not depend on it.
ExperimentResult run_experiment(const ExperimentConfig& config, int threads = 1,
                                bool write_files = true);

/// Reloads a finished run directory.
struct LoadedRun {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  AgentState agent;
  std::optional<DynamicsModel> model;
};

LoadedRun load_run(const std::string& dir);

}  // namespace mvelab
