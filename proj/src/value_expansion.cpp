#include "mvelab/value_expansion.hpp"

#include <cmath>

#include "mvelab/errors.hpp"

namespace mvelab {

std::string to_string(MveMode mode) {
  switch (mode) {
    case MveMode::off:
      return "off";
    case MveMode::tdk:
      return "tdk";
    case MveMode::naive:
      return "naive";
    case MveMode::imagination_buffer:
      return "imagination_buffer";
  }
  return "off";
}

MveMode parse_mve_mode(const std::string& text) {
  if (text == "off") return MveMode::off;
  if (text == "tdk") return MveMode::tdk;
  if (text == "naive") return MveMode::naive;
  if (text == "imagination_buffer") return MveMode::imagination_buffer;
  throw ContractViolation("unknown mve mode '" + text + "'");
}

bool uses_model(const MveConfig& config) {
  if (config.mode == MveMode::off || config.horizon == 0) return false;
  if (config.mode == MveMode::imagination_buffer) return config.ib_ratio > 0;
  return true;
}

ExpansionValue mve_state_value(const ImaginedRollout& rollout, double tail_value, double gamma) {
  ExpansionValue out;
  out.depth = rollout.depth;
  out.truncated = rollout.truncated;
  double discount = 1.0;
  for (int t = 0; t < rollout.depth; ++t) {
    out.value += discount * rollout.rewards[static_cast<std::size_t>(t)];
    discount *= gamma;
  }
  out.value += discount * tail_value;
  return out;
}

TargetBatch expand_targets(const TargetNetworks& targets, const DynamicsModel& model,
                           const TransitionBatch& batch, int horizon, double gamma,
                           bool all_depths) {
  require(horizon >= 0, "expand_targets: horizon must be non-negative");
  require(batch.size() > 0, "expand_targets: empty batch");
  const Eigen::Index B = batch.size();
  const BatchPolicy target_policy = [&](const Mat& s) {
    return policy_batch(targets.actor, targets.scale, s);
  };
  const BatchRollout roll = imagine_batch(model, target_policy, batch.next_states, horizon);

  // Tail values Q'(s_d, a_d) at each column's usable depth d.
  Mat tail_s(batch.states.rows(), B);
  Mat tail_a(batch.actions.rows(), B);
  for (Eigen::Index j = 0; j < B; ++j) {
    const auto d = static_cast<std::size_t>(roll.depth[static_cast<std::size_t>(j)]);
    tail_s.col(j) = roll.states[d].col(j);
    tail_a.col(j) = roll.actions[d].col(j);
  }
  const Vec tail_q = q_batch(targets.critic, tail_s, tail_a);

  // labels(t + 1, j) = G_t for t = -1 .. depth_j - 1, via G_t = r_t + gamma G_{t+1}.
  Mat labels(horizon + 1, B);
  Eigen::Index count = 0;
  for (Eigen::Index j = 0; j < B; ++j) {
    const int d = roll.depth[static_cast<std::size_t>(j)];
    double g = tail_q[j];
    for (int t = d - 1; t >= 0; --t) {
      g = roll.rewards(t, j) + gamma * g;
      labels(t + 1, j) = g;
    }
    labels(0, j) = batch.rewards[j] + gamma * g;
    count += all_depths ? d + 1 : 1;
  }

  TargetBatch out{Mat(batch.states.rows(), count), Mat(batch.actions.rows(), count), Vec(count),
                  {}};
  out.origin_depth.reserve(static_cast<std::size_t>(count));
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < B; ++j, ++k) {
    out.states.col(k) = batch.states.col(j);
    out.actions.col(k) = batch.actions.col(j);
    out.labels[k] = labels(0, j);
    out.origin_depth.push_back(-1);
  }
  if (all_depths) {
    for (int t = 0; t < horizon; ++t) {
      for (Eigen::Index j = 0; j < B; ++j) {
        if (t >= roll.depth[static_cast<std::size_t>(j)]) continue;
        out.states.col(k) = roll.states[static_cast<std::size_t>(t)].col(j);
        out.actions.col(k) = roll.actions[static_cast<std::size_t>(t)].col(j);
        out.labels[k] = labels(t + 1, j);
        out.origin_depth.push_back(t);
        ++k;
      }
    }
  }
  if (!out.labels.allFinite()) throw DivergedError("expanded critic labels are not finite");
  return out;
}

namespace {

std::vector<CriticTarget> to_targets(const TargetBatch& b) {
  std::vector<CriticTarget> out;
  out.reserve(static_cast<std::size_t>(b.size()));
  for (Eigen::Index k = 0; k < b.size(); ++k) {
    out.push_back({b.states.col(k), b.actions.col(k), b.labels[k],
                   b.origin_depth[static_cast<std::size_t>(k)]});
  }
  return out;
}

}  // namespace

std::vector<CriticTarget> build_tdk_targets(const TargetNetworks& targets,
                                            const DynamicsModel& model, const Transition& tau0,
                                            int horizon, double gamma) {
  const Transition one[] = {tau0};
  return to_targets(expand_targets(targets, model, make_batch(one), horizon, gamma, true));
}

std::vector<CriticTarget> naive_targets(const TargetNetworks& targets, const DynamicsModel& model,
                                        const Transition& tau0, int horizon, double gamma) {
  const Transition one[] = {tau0};
  return to_targets(expand_targets(targets, model, make_batch(one), horizon, gamma, false));
}

Vec tdk_critic_grad(const MlpParams& critic, const TargetBatch& targets) {
  require(targets.size() > 0, "tdk_critic_grad: no targets");
  return regression_grad(critic, targets.states, targets.actions, targets.labels);
}

Vec tdk_critic_grad(const MlpParams& critic, std::span<const CriticTarget> targets) {
  require(!targets.empty(), "tdk_critic_grad: no targets");
  const auto n = static_cast<Eigen::Index>(targets.size());
  TargetBatch b{Mat(targets.front().state.size(), n), Mat(targets.front().action.size(), n), Vec(n),
                {}};
  for (Eigen::Index k = 0; k < n; ++k) {
    const CriticTarget& t = targets[static_cast<std::size_t>(k)];
    b.states.col(k) = t.state;
    b.actions.col(k) = t.action;
    b.labels[k] = t.target_value;
  }
  return tdk_critic_grad(critic, b);
}

void train_iteration(AgentState& agent, const DynamicsModel* model, const TransitionBatch& batch,
                     const MveConfig& config, double gamma) {
  apply_actor_step(agent, actor_loss_grad(agent, batch));
  const bool expand = (config.mode == MveMode::tdk || config.mode == MveMode::naive) &&
                      config.horizon > 0;
  if (expand) {
    require(model != nullptr, "train_iteration: value expansion needs a dynamics model");
    const TargetBatch t = expand_targets(target_networks(agent), *model, batch, config.horizon,
                                         gamma, config.mode == MveMode::tdk);
    apply_critic_step(agent, tdk_critic_grad(agent.critic, t));
  } else {
    apply_critic_step(agent, critic_loss_grad(agent, batch, gamma));
  }
  target_update_inplace(agent);
}

std::size_t imagination_buffer_step(AgentState& agent, const DynamicsModel& model,
                                    const ReplayBuffer& real, ReplayBuffer& imag,
                                    const MveConfig& config, double gamma, int batch_size,
                                    Rng& rng) {
  require(batch_size > 0, "imagination_buffer_step: batch size must be positive");
  const MveConfig plain{0, MveMode::off, 0, 0};
  const TransitionBatch batch = real.sample_batch(static_cast<std::size_t>(batch_size), rng);
  train_iteration(agent, nullptr, batch, plain, gamma);
  if (config.ib_ratio <= 0 || config.horizon <= 0) return 0;

  const int rollouts = config.ib_rollouts > 0 ? config.ib_rollouts : batch_size;
  Mat starts(batch.next_states.rows(), rollouts);
  for (int j = 0; j < rollouts; ++j) starts.col(j) = batch.next_states.col(j % batch.size());
  const BatchPolicy target_policy = [&](const Mat& s) {
    return policy_batch(agent.target_actor, agent.scale, s);
  };
  const BatchRollout roll = imagine_batch(model, target_policy, starts, config.horizon);
  std::size_t appended = 0;
  for (int j = 0; j < rollouts; ++j) {
    for (int t = 0; t < roll.depth[static_cast<std::size_t>(j)]; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      imag.add({roll.states[ts].col(j), roll.actions[ts].col(j), roll.rewards(t, j),
                roll.states[ts + 1].col(j), Provenance::imagined});
      ++appended;
    }
  }
  if (imag.empty()) return appended;
  for (int k = 0; k < config.ib_ratio; ++k) {
    train_iteration(agent, nullptr, imag.sample_batch(static_cast<std::size_t>(batch_size), rng),
                    plain, gamma);
  }
  return appended;
}

}  // namespace mvelab
