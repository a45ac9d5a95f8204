#pragma once

// Deterministic policy gradient learner: actor, critic, Polyak-averaged
// target copies, replay buffer and exploration noise.

#include <cstdint>
#include <span>
#include <vector>

#include "mvelab/envs.hpp"
#include "mvelab/nn.hpp"
#include "mvelab/rng.hpp"

namespace mvelab {

/// Maps the actor's tanh output in [-1, 1] onto the action box.
struct ActionScale {
  Vec mid;
  Vec half;

  static ActionScale from_env(const EnvSpec& env);
  Mat apply(const Mat& squashed) const;
};

struct AgentConfig {
  std::vector<int> hidden{64, 64};
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  double decay = 1e-2;
  double actor_final_scale = 0.1;
};

struct AgentState {
  MlpParams actor;
  MlpParams critic;  ///< input is (s, a) stacked
  MlpParams target_actor;
  MlpParams target_critic;
  AdamState actor_opt;
  AdamState critic_opt;
  double decay = 1e-2;
  ActionScale scale;
};

AgentState make_agent(const EnvSpec& env, const AgentConfig& config, std::uint64_t seed);

/// Read-only view of the networks used to build regression labels.
struct TargetNetworks {
  const MlpParams& actor;
  const MlpParams& critic;
  const ActionScale& scale;
};

TargetNetworks target_networks(const AgentState& agent);

Mat policy_batch(const MlpParams& actor, const ActionScale& scale, const Mat& states);
Vec policy_action(const MlpParams& actor, const ActionScale& scale, const Vec& state);
Vec q_batch(const MlpParams& critic, const Mat& states, const Mat& actions);
double q_value(const MlpParams& critic, const Vec& state, const Vec& action);

/// Columns-as-samples view of a batch of transitions.
struct TransitionBatch {
  Mat states;
  Mat actions;
  Vec rewards;
  Mat next_states;

  Eigen::Index size() const { return states.cols(); }
};

TransitionBatch make_batch(std::span<const Transition> transitions);

/// Gradient w.r.t. the actor parameters of mean_batch Q_phi(s, pi_theta(s)).
/// This is an ascent direction; the trainer feeds its negation to Adam.
Vec actor_loss_grad(const AgentState& agent, const TransitionBatch& batch);
Vec actor_loss_grad(const AgentState& agent, std::span<const Transition> batch);

/// Gradient of mean (Q(s, a) - label)^2 w.r.t. critic parameters, labels constant.
Vec regression_grad(const MlpParams& critic, const Mat& states, const Mat& actions,
                    const Vec& labels);

/// One-step DDPG labels r + gamma Q'(s', pi'(s')).
Vec ddpg_targets(const TargetNetworks& targets, const TransitionBatch& batch, double gamma);

/// Gradient of the mean squared Bellman error with target-network labels.
Vec critic_loss_grad(const AgentState& agent, const TransitionBatch& batch, double gamma);
Vec critic_loss_grad(const AgentState& agent, std::span<const Transition> batch, double gamma);

/// Mean squared one-step Bellman error with target-network labels.
double bellman_error(const AgentState& agent, const TransitionBatch& batch, double gamma);

/// target <- (1 - decay) target + decay live, both networks.
AgentState target_update(AgentState agent);
void target_update_inplace(AgentState& agent);

void apply_actor_step(AgentState& agent, const Vec& ascent_grad);
void apply_critic_step(AgentState& agent, const Vec& grad);

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void add(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }

  /// Storage order, not insertion order, once the buffer has wrapped.
  std::span<const Transition> contents() const { return items_; }
  const Transition& at(std::size_t i) const { return items_.at(i); }

  /// Uniform with replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;
  std::vector<Transition> sample(std::size_t n, Rng& rng) const;
  TransitionBatch sample_batch(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> items_;
};

enum class NoiseKind { parameter, action_gaussian, none };

struct NoiseConfig {
  NoiseKind kind = NoiseKind::parameter;
  double target_distance = 0.2;  ///< adaptive parameter-noise target, normalized action units
  double initial_sigma = 0.1;
  double adapt_factor = 1.01;
  double action_sigma = 0.2;  ///< Gaussian action-noise std (action_gaussian mode)
};

struct ExplorationState {
  double sigma = 0.1;
  MlpParams perturbed_actor;
};

ExplorationState make_exploration(const AgentState& agent, const NoiseConfig& config);

/// Draws a fresh parameter perturbation xi ~ N(0, sigma^2) for the live actor.
void resample_perturbation(ExplorationState& explore, const AgentState& agent, Rng& rng);

/// Exploration action, clipped to the action box. Parameter mode uses the
/// current perturbed actor; Gaussian mode adds N(0, action_sigma^2) noise.
Vec explore_action(const AgentState& agent, const ExplorationState& explore, const Vec& state,
                   const NoiseConfig& config, Rng& rng);

/// Root-mean-square distance in normalized action units between the
/// perturbed and clean actors over `states`.
double perturbation_distance(const AgentState& agent, const ExplorationState& explore,
                             const Mat& states);

/// One adaptation round: sigma shrinks by adapt_factor if the measured
/// distance exceeds the target and grows otherwise. Returns the distance.
double adapt_parameter_noise(ExplorationState& explore, const AgentState& agent, const Mat& states,
                             const NoiseConfig& config);

}  // namespace mvelab
