#pragma once

// Learned dynamics: an MLP that predicts the z-scored state difference
// s' - s from z-scored (s, a). Also hosts imagined rollouts and the
// open-loop error curve.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mvelab/envs.hpp"
#include "mvelab/nn.hpp"
#include "mvelab/rng.hpp"

namespace mvelab {

inline constexpr double kStdFloor = 1e-6;
inline constexpr double kBlowUpNorm = 1e6;

struct DynamicsConfig {
  std::vector<int> hidden{64, 64, 64, 64};
  double learning_rate = 1e-3;
};

struct DynamicsModel {
  EnvSpec env;
  bool oracle = false;  ///< wraps the true env dynamics; nothing is learned
  MlpParams net;
  Vec input_mean;
  Vec input_std;
  Vec delta_mean;
  Vec delta_std;
  std::int64_t trained_on = 0;
  AdamState optimizer;
};

DynamicsModel make_dynamics_model(const EnvSpec& env, const DynamicsConfig& config,
                                  std::uint64_t seed);
DynamicsModel make_oracle_model(const EnvSpec& env);

/// Recomputes normalization from `buffer` (unless `refresh_normalization` is
/// false and the model has been fit before), then runs `steps` Adam updates
/// on the mean squared error of normalized deltas. Returns the last batch
/// loss. Throws DivergedError on a non-finite loss.
double fit_dynamics_inplace(DynamicsModel& model, std::span<const Transition> buffer, int steps,
                            int batch_size, Rng& rng, bool refresh_normalization = true);

DynamicsModel fit_dynamics(DynamicsModel model, std::span<const Transition> buffer, int steps,
                           int batch_size, Rng& rng);

/// Training loss on `batch` under the current normalization: mean over
/// transitions of the squared norm of (net output - z-scored delta).
double dynamics_loss(const DynamicsModel& model, std::span<const Transition> batch);
Vec dynamics_loss_grad(const DynamicsModel& model, std::span<const Transition> batch);

Vec predict_next(const DynamicsModel& model, const Vec& state, const Vec& action);

/// Columns are samples.
Mat predict_next_batch(const DynamicsModel& model, const Mat& states, const Mat& actions);

/// Mean over `transitions` of ||predict_next(s, a) - s'||^2.
double one_step_mse(const DynamicsModel& model, std::span<const Transition> transitions);

struct ImaginedRollout {
  std::vector<Vec> states;      ///< s_0 .. s_depth
  std::vector<Vec> actions;     ///< a_0 .. a_depth (clipped to the action box)
  std::vector<double> rewards;  ///< r_0 .. r_{depth-1}, true reward function
  int depth = 0;
  bool truncated = false;       ///< model blew up before the requested horizon
};

/// Imagines `horizon` steps from `start` under `policy`. If a predicted state
/// is non-finite or exceeds kBlowUpNorm the rollout stops early and is
/// flagged truncated; `depth` is then the usable prefix length.
ImaginedRollout imagine_rollout(const DynamicsModel& model, const Policy& policy, const Vec& start,
                                int horizon);

/// Batched imagination used by the trainers. All columns advance together;
/// `depth[j]` is the usable depth of column j.
struct BatchRollout {
  std::vector<Mat> states;   ///< horizon + 1 entries, state_dim x B
  std::vector<Mat> actions;  ///< horizon + 1 entries, action_dim x B
  Mat rewards;               ///< horizon x B
  std::vector<int> depth;
};

BatchRollout imagine_batch(const DynamicsModel& model, const BatchPolicy& policy,
                           const Mat& start_states, int horizon);

struct ErrorPoint {
  int depth = 0;
  double mean_l2 = 0.0;
  double std_l2 = 0.0;
};

/// Paired true/imagined open-loop rollouts from `n_starts` reset states.
/// Returns one point per depth 1..horizon.
std::vector<ErrorPoint> open_loop_error_curve(const DynamicsModel& model, const EnvSpec& env,
                                              const Policy& policy, int horizon, int n_starts,
                                              Rng& rng);

}  // namespace mvelab
