#include "mvelab/ddpg.hpp"

#include <cmath>

#include "mvelab/errors.hpp"

namespace mvelab {

namespace {

Mat stack(const Mat& top, const Mat& bottom) {
  Mat x(top.rows() + bottom.rows(), top.cols());
  x.topRows(top.rows()) = top;
  x.bottomRows(bottom.rows()) = bottom;
  return x;
}

void check_finite(const Vec& g, const char* what) {
  if (!g.allFinite()) throw DivergedError(std::string(what) + ": non-finite gradient");
}

}  // namespace

ActionScale ActionScale::from_env(const EnvSpec& env) {
  return {0.5 * (env.action_high + env.action_low), 0.5 * (env.action_high - env.action_low)};
}

Mat ActionScale::apply(const Mat& squashed) const {
  return (squashed.array().colwise() * half.array()).colwise() + mid.array();
}

AgentState make_agent(const EnvSpec& env, const AgentConfig& config, std::uint64_t seed) {
  std::vector<int> actor_sizes{env.state_dim};
  actor_sizes.insert(actor_sizes.end(), config.hidden.begin(), config.hidden.end());
  actor_sizes.push_back(env.action_dim);
  std::vector<int> critic_sizes{env.state_dim + env.action_dim};
  critic_sizes.insert(critic_sizes.end(), config.hidden.begin(), config.hidden.end());
  critic_sizes.push_back(1);

  AgentState a;
  a.actor = init_params(actor_sizes, derive_seed(seed, 1), Activation::tanh, Activation::tanh,
                        config.actor_final_scale);
  a.critic = init_params(critic_sizes, derive_seed(seed, 2), Activation::tanh, Activation::identity);
  a.target_actor = a.actor;
  a.target_critic = a.critic;
  a.actor_opt = make_adam(a.actor.size(), config.actor_lr);
  a.critic_opt = make_adam(a.critic.size(), config.critic_lr);
  require(config.decay >= 0.0 && config.decay <= 1.0, "target decay must lie in [0, 1]");
  a.decay = config.decay;
  a.scale = ActionScale::from_env(env);
  return a;
}

TargetNetworks target_networks(const AgentState& agent) {
  return {agent.target_actor, agent.target_critic, agent.scale};
}

Mat policy_batch(const MlpParams& actor, const ActionScale& scale, const Mat& states) {
  return scale.apply(mlp_forward_batch(actor, states));
}

Vec policy_action(const MlpParams& actor, const ActionScale& scale, const Vec& state) {
  return policy_batch(actor, scale, Mat(state)).col(0);
}

Vec q_batch(const MlpParams& critic, const Mat& states, const Mat& actions) {
  return mlp_forward_batch(critic, stack(states, actions)).row(0).transpose();
}

double q_value(const MlpParams& critic, const Vec& state, const Vec& action) {
  return q_batch(critic, Mat(state), Mat(action))[0];
}

TransitionBatch make_batch(std::span<const Transition> transitions) {
  require(!transitions.empty(), "empty transition batch");
  const auto n = static_cast<Eigen::Index>(transitions.size());
  const auto sd = transitions.front().state.size();
  const auto ad = transitions.front().action.size();
  TransitionBatch b{Mat(sd, n), Mat(ad, n), Vec(n), Mat(sd, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const Transition& t = transitions[static_cast<std::size_t>(j)];
    b.states.col(j) = t.state;
    b.actions.col(j) = t.action;
    b.rewards[j] = t.reward;
    b.next_states.col(j) = t.next_state;
  }
  return b;
}

Vec actor_loss_grad(const AgentState& agent, const TransitionBatch& batch) {
  require(batch.size() > 0, "actor_loss_grad: empty batch");
  const auto B = static_cast<double>(batch.size());
  ForwardTrace actor_trace;
  const Mat squashed = mlp_forward_batch(agent.actor, batch.states, &actor_trace);
  const Mat actions = agent.scale.apply(squashed);
  ForwardTrace critic_trace;
  mlp_forward_batch(agent.critic, stack(batch.states, actions), &critic_trace);
  const Mat dq = Mat::Constant(1, batch.size(), 1.0 / B);
  const BatchGradients cg = mlp_backward_batch(agent.critic, critic_trace, dq, true);
  const Mat da = cg.input_grad.bottomRows(actions.rows());
  const Mat du = da.array().colwise() * agent.scale.half.array();
  Vec g = mlp_backward_batch(agent.actor, actor_trace, du, false).param_grad;
  check_finite(g, "actor_loss_grad");
  return g;
}

Vec actor_loss_grad(const AgentState& agent, std::span<const Transition> batch) {
  return actor_loss_grad(agent, make_batch(batch));
}

Vec regression_grad(const MlpParams& critic, const Mat& states, const Mat& actions,
                    const Vec& labels) {
  require(states.cols() > 0 && states.cols() == labels.size() && actions.cols() == labels.size(),
          "regression_grad: batch shapes differ");
  ForwardTrace trace;
  const Mat q = mlp_forward_batch(critic, stack(states, actions), &trace);
  const Mat err = q - labels.transpose();
  Vec g = mlp_backward_batch(critic, trace, (2.0 / static_cast<double>(labels.size())) * err, false)
              .param_grad;
  check_finite(g, "critic regression");
  return g;
}

Vec ddpg_targets(const TargetNetworks& targets, const TransitionBatch& batch, double gamma) {
  const Mat next_actions = policy_batch(targets.actor, targets.scale, batch.next_states);
  const Vec next_q = q_batch(targets.critic, batch.next_states, next_actions);
  Vec y(batch.size());
  for (Eigen::Index j = 0; j < y.size(); ++j) y[j] = batch.rewards[j] + gamma * next_q[j];
  return y;
}

Vec critic_loss_grad(const AgentState& agent, const TransitionBatch& batch, double gamma) {
  require(batch.size() > 0, "critic_loss_grad: empty batch");
  const Vec y = ddpg_targets(target_networks(agent), batch, gamma);
  return regression_grad(agent.critic, batch.states, batch.actions, y);
}

Vec critic_loss_grad(const AgentState& agent, std::span<const Transition> batch, double gamma) {
  return critic_loss_grad(agent, make_batch(batch), gamma);
}

double bellman_error(const AgentState& agent, const TransitionBatch& batch, double gamma) {
  const Vec y = ddpg_targets(target_networks(agent), batch, gamma);
  const Vec q = q_batch(agent.critic, batch.states, batch.actions);
  return (q - y).squaredNorm() / static_cast<double>(y.size());
}

void target_update_inplace(AgentState& agent) {
  polyak_average(agent.target_actor.values, agent.actor.values, agent.decay);
  polyak_average(agent.target_critic.values, agent.critic.values, agent.decay);
}

AgentState target_update(AgentState agent) {
  target_update_inplace(agent);
  return agent;
}

void apply_actor_step(AgentState& agent, const Vec& ascent_grad) {
  adam_update(agent.actor.values, -ascent_grad, agent.actor_opt);
}

void apply_critic_step(AgentState& agent, const Vec& grad) {
  adam_update(agent.critic.values, grad, agent.critic_opt);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  require(capacity > 0, "replay capacity must be positive");
}

void ReplayBuffer::add(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  require(!items_.empty(), "cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  std::vector<Transition> out;
  out.reserve(n);
  for (std::size_t i : sample_indices(n, rng)) out.push_back(items_[i]);
  return out;
}

TransitionBatch ReplayBuffer::sample_batch(std::size_t n, Rng& rng) const {
  const auto idx = sample_indices(n, rng);
  const Transition& first = items_[idx.front()];
  const auto B = static_cast<Eigen::Index>(n);
  TransitionBatch b{Mat(first.state.size(), B), Mat(first.action.size(), B), Vec(B),
                    Mat(first.state.size(), B)};
  for (Eigen::Index j = 0; j < B; ++j) {
    const Transition& t = items_[idx[static_cast<std::size_t>(j)]];
    b.states.col(j) = t.state;
    b.actions.col(j) = t.action;
    b.rewards[j] = t.reward;
    b.next_states.col(j) = t.next_state;
  }
  return b;
}

ExplorationState make_exploration(const AgentState& agent, const NoiseConfig& config) {
  return {config.initial_sigma, agent.actor};
}

void resample_perturbation(ExplorationState& explore, const AgentState& agent, Rng& rng) {
  explore.perturbed_actor = agent.actor;
  if (explore.sigma <= 0.0) return;
  std::normal_distribution<double> noise(0.0, explore.sigma);
  for (Eigen::Index i = 0; i < explore.perturbed_actor.values.size(); ++i) {
    explore.perturbed_actor.values[i] += noise(rng);
  }
}

Vec explore_action(const AgentState& agent, const ExplorationState& explore, const Vec& state,
                   const NoiseConfig& config, Rng& rng) {
  require(state.allFinite(), "explore_action: non-finite state");
  Vec a;
  switch (config.kind) {
    case NoiseKind::parameter:
      a = policy_action(explore.perturbed_actor, agent.scale, state);
      break;
    case NoiseKind::action_gaussian: {
      a = policy_action(agent.actor, agent.scale, state);
      std::normal_distribution<double> noise(0.0, config.action_sigma);
      for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += noise(rng);
      break;
    }
    case NoiseKind::none:
      a = policy_action(agent.actor, agent.scale, state);
      break;
  }
  const Vec lo = agent.scale.mid - agent.scale.half;
  const Vec hi = agent.scale.mid + agent.scale.half;
  return a.cwiseMax(lo).cwiseMin(hi);
}

double perturbation_distance(const AgentState& agent, const ExplorationState& explore,
                             const Mat& states) {
  const Mat clean = mlp_forward_batch(agent.actor, states);
  const Mat noisy = mlp_forward_batch(explore.perturbed_actor, states);
  return std::sqrt((noisy - clean).squaredNorm() / static_cast<double>(clean.size()));
}

double adapt_parameter_noise(ExplorationState& explore, const AgentState& agent, const Mat& states,
                             const NoiseConfig& config) {
  const double d = perturbation_distance(agent, explore, states);
  if (d > config.target_distance) {
    explore.sigma /= config.adapt_factor;
  } else {
    explore.sigma *= config.adapt_factor;
  }
  return d;
}

}  // namespace mvelab
