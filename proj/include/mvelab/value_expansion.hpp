#pragma once

// Model-based value expansion: H-step expanded critic labels built from
// imagined rollouts of the target actor, the TD-k training distribution
// (one regression pair per imagined depth), the naive variant that keeps
// only the real pair, and an imagination-buffer baseline.

#include <span>
#include <string>
#include <vector>

#include "mvelab/ddpg.hpp"
#include "mvelab/dyn_model.hpp"

namespace mvelab {

enum class MveMode { off, tdk, naive, imagination_buffer };

std::string to_string(MveMode mode);
MveMode parse_mve_mode(const std::string& text);

struct MveConfig {
  int horizon = 0;
  MveMode mode = MveMode::off;
  int ib_ratio = 4;     ///< imagined-to-real update ratio (imagination_buffer only)
  int ib_rollouts = 0;  ///< rollouts imagined per step; 0 means one per batch element

  bool operator==(const MveConfig&) const = default;
};

/// Uses the model only when it changes the training outcome.
bool uses_model(const MveConfig& config);

struct CriticTarget {
  Vec state;
  Vec action;
  double target_value = 0.0;
  int origin_depth = -1;  ///< -1 is the real (s, a) pair of the sampled transition
};

struct ExpansionValue {
  double value = 0.0;
  int depth = 0;  ///< expansion depth actually used
  bool truncated = false;
};

/// sum_{t<H'} gamma^t r_t + gamma^{H'} tail_value, where H' is the rollout depth.
ExpansionValue mve_state_value(const ImaginedRollout& rollout, double tail_value, double gamma);

/// Regression pairs for one sampled transition tau0 = (s_{-1}, a_{-1}, r_{-1}, s_0).
/// Imagines s_1..s_H from s_0 with the target actor. For t in {-1, 0, .., H-1}
/// the label is sum_{k=t}^{H-1} gamma^{k-t} r_k + gamma^{H-t} Q'(s_H, a_H).
/// Only target networks are read.
std::vector<CriticTarget> build_tdk_targets(const TargetNetworks& targets,
                                            const DynamicsModel& model, const Transition& tau0,
                                            int horizon, double gamma);

/// The t = -1 element of build_tdk_targets: the real pair with the full
/// H-step label.
std::vector<CriticTarget> naive_targets(const TargetNetworks& targets, const DynamicsModel& model,
                                        const Transition& tau0, int horizon, double gamma);

/// Gradient w.r.t. critic parameters of mean (Q(s, a) - label)^2 over `targets`.
Vec tdk_critic_grad(const MlpParams& critic, std::span<const CriticTarget> targets);

/// Batched labels for a whole minibatch; `all_depths` selects TD-k (true)
/// or naive (false). Pairs are ordered depth-major: all t = -1 pairs first.
struct TargetBatch {
  Mat states;
  Mat actions;
  Vec labels;
  std::vector<int> origin_depth;

  Eigen::Index size() const { return labels.size(); }
};

TargetBatch expand_targets(const TargetNetworks& targets, const DynamicsModel& model,
                           const TransitionBatch& batch, int horizon, double gamma,
                           bool all_depths);

Vec tdk_critic_grad(const MlpParams& critic, const TargetBatch& targets);

/// One training iteration on a real minibatch: actor step on the real states,
/// critic step with labels chosen by `config.mode`, then the target update.
/// `model` may be null when the mode does not use it.
void train_iteration(AgentState& agent, const DynamicsModel* model, const TransitionBatch& batch,
                     const MveConfig& config, double gamma);

/// Imagination-buffer baseline step. Samples a real batch, does one
/// actor + critic + target update on it, imagines `horizon`-step rollouts of
/// the target actor from real next-states only and appends them to `imag`
/// (tagged Provenance::imagined), then does `ib_ratio` updates on batches
/// drawn from `imag`. Returns the number of imagined transitions appended.
std::size_t imagination_buffer_step(AgentState& agent, const DynamicsModel& model,
                                    const ReplayBuffer& real, ReplayBuffer& imag,
                                    const MveConfig& config, double gamma, int batch_size,
                                    Rng& rng);

}  // namespace mvelab
