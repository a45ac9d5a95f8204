#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mvelab/ddpg.hpp"
#include "mvelab/errors.hpp"
#include "oracles.hpp"

using namespace mvelab;

namespace {

std::vector<Transition> random_transitions(const EnvSpec& env, int n, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Transition> out;
  for (int i = 0; i < n; ++i) {
    const Vec s = env_reset(env, rng);
    Vec a(env.action_dim);
    for (auto& x : a) x = u(rng);
    out.push_back(env_step(env, s, a));
  }
  return out;
}

double mean_q_of_policy(const AgentState& agent, const TransitionBatch& b) {
  return q_batch(agent.critic, b.states, policy_batch(agent.actor, agent.scale, b.states)).mean();
}

double critic_loss(const AgentState& agent, const TransitionBatch& b, double gamma) {
  const Vec y = ddpg_targets(target_networks(agent), b, gamma);
  return (q_batch(agent.critic, b.states, b.actions) - y).squaredNorm() / static_cast<double>(y.size());
}

}  // namespace

TEST(MakeAgent, TargetsStartEqualAndActionsInsideBox) {
  for (const auto& name : env_names()) {
    const EnvSpec env = make_env(name);
    const AgentState a = make_agent(env, {}, 3);
    EXPECT_EQ(a.actor, a.target_actor);
    EXPECT_EQ(a.critic, a.target_critic);
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
      const Vec act = policy_action(a.actor, a.scale, env_reset(env, rng) * 50.0);
      EXPECT_TRUE((act.array() >= env.action_low.array()).all());
      EXPECT_TRUE((act.array() <= env.action_high.array()).all());
    }
  }
}

TEST(ActorGradient, LinearCriticClosedForm) {
  // One-layer actor u = tanh(W s + b), a = mid + half u, and a linear critic
  // Q = w_s . s + w_a . a + c. Then d mean Q / d b = mean_j half * w_a * (1 - u_j^2).
  const EnvSpec env = make_env("hillclimb");
  AgentConfig cfg;
  cfg.hidden = {};
  AgentState agent = make_agent(env, cfg, 5);
  agent.actor.values << 0.7, 0.2;  // W, b
  agent.critic.values << 0.3, -1.3, 0.05;  // w_s, w_a, c
  Rng rng(2);
  const TransitionBatch b = make_batch(random_transitions(env, 16, rng));
  const Vec g = actor_loss_grad(agent, b);
  double gw = 0.0, gb = 0.0;
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    const double s = b.states(0, j);
    const double u = std::tanh(0.7 * s + 0.2);
    const double common = 1.5 * -1.3 * (1 - u * u);  // half = 1.5 on [-1, 2]
    gw += common * s;
    gb += common;
  }
  EXPECT_NEAR(g[0], gw / 16, 1e-14);
  EXPECT_NEAR(g[1], gb / 16, 1e-14);
}

TEST(ActorGradient, MatchesFiniteDifferences) {
  for (const auto& name : env_names()) {
    const EnvSpec env = make_env(name);
    AgentConfig cfg;
    cfg.hidden = {8, 8};
    cfg.actor_final_scale = 1.0;
    const AgentState agent = make_agent(env, cfg, 7);
    Rng rng(3);
    const TransitionBatch b = make_batch(random_transitions(env, 10, rng));
    const Vec g = actor_loss_grad(agent, b);
    const Vec fd = oracle::central_diff(
        [&](const Vec& theta) {
          AgentState a = agent;
          a.actor.values = theta;
          return mean_q_of_policy(a, b);
        },
        agent.actor.values);
    EXPECT_LT(oracle::max_rel_err(g, fd, 1e-5), 1e-4) << name;
  }
}

TEST(CriticGradient, MatchesFiniteDifferences) {
  for (const auto& name : env_names()) {
    const EnvSpec env = make_env(name);
    AgentConfig cfg;
    cfg.hidden = {8, 8};
    AgentState agent = make_agent(env, cfg, 9);
    Rng rng(4);
    std::normal_distribution<double> n(0.0, 0.1);
    for (auto& x : agent.target_critic.values) x += n(rng);
    const TransitionBatch b = make_batch(random_transitions(env, 10, rng));
    const Vec g = critic_loss_grad(agent, b, 0.9);
    const Vec fd = oracle::central_diff(
        [&](const Vec& phi) {
          AgentState a = agent;
          a.critic.values = phi;
          return critic_loss(a, b, 0.9);
        },
        agent.critic.values);
    EXPECT_LT(oracle::max_rel_err(g, fd, 1e-5), 1e-4) << name;
  }
}

TEST(CriticGradient, LabelsIgnoreLiveNetworks) {
  const EnvSpec env = make_env("point_mass");
  AgentState agent = make_agent(env, {}, 1);
  Rng rng(5);
  const TransitionBatch b = make_batch(random_transitions(env, 8, rng));
  const Vec y0 = ddpg_targets(target_networks(agent), b, 0.99);
  agent.actor.values.array() += 0.3;
  agent.critic.values.array() -= 0.2;
  EXPECT_EQ(ddpg_targets(target_networks(agent), b, 0.99), y0);
}

TEST(CriticTraining, GammaZeroRegressesOntoReward) {
  const EnvSpec env = make_env("point_mass");
  AgentConfig cfg;
  cfg.critic_lr = 3e-3;
  AgentState agent = make_agent(env, cfg, 11);
  Rng rng(6);
  const TransitionBatch b = make_batch(random_transitions(env, 64, rng));
  const double before = critic_loss(agent, b, 0.0);
  for (int i = 0; i < 3000; ++i) apply_critic_step(agent, critic_loss_grad(agent, b, 0.0));
  const double after = critic_loss(agent, b, 0.0);
  EXPECT_LT(after, 1e-3 * before);
  const Vec q = q_batch(agent.critic, b.states, b.actions);
  EXPECT_LT((q - b.rewards).cwiseAbs().maxCoeff(), 0.05);
}

TEST(TargetUpdate, PolyakLagExact) {
  const EnvSpec env = make_env("pendulum");
  AgentConfig cfg;
  cfg.decay = 0.25;
  AgentState agent = make_agent(env, cfg, 2);
  agent.actor.values.setConstant(1.0);
  agent.critic.values.setConstant(-2.0);
  agent.target_actor.values.setZero();
  agent.target_critic.values.setZero();
  const AgentState once = target_update(agent);
  EXPECT_TRUE(once.target_actor.values.isApprox(Vec::Constant(agent.actor.size(), 0.25)));
  const AgentState twice = target_update(once);
  EXPECT_NEAR(twice.target_critic.values[0], -2.0 * (1 - 0.75 * 0.75), 1e-15);
  // Live networks are untouched.
  EXPECT_EQ(twice.actor, agent.actor);
}

TEST(TargetUpdate, StepsDoNotTouchTargets) {
  const EnvSpec env = make_env("point_mass");
  AgentState agent = make_agent(env, {}, 8);
  Rng rng(7);
  const TransitionBatch b = make_batch(random_transitions(env, 8, rng));
  const AgentState before = agent;
  apply_actor_step(agent, actor_loss_grad(agent, b));
  apply_critic_step(agent, critic_loss_grad(agent, b, 0.99));
  EXPECT_EQ(agent.target_actor, before.target_actor);
  EXPECT_EQ(agent.target_critic, before.target_critic);
  EXPECT_NE(agent.actor.values, before.actor.values);
  EXPECT_NE(agent.critic.values, before.critic.values);
}

TEST(ActorStep, AscendsQ) {
  const EnvSpec env = make_env("pendulum");
  AgentState agent = make_agent(env, {}, 12);
  Rng rng(8);
  const TransitionBatch b = make_batch(random_transitions(env, 32, rng));
  const double before = mean_q_of_policy(agent, b);
  for (int i = 0; i < 20; ++i) apply_actor_step(agent, actor_loss_grad(agent, b));
  EXPECT_GT(mean_q_of_policy(agent, b), before);
}

TEST(ReplayBuffer, WrapsAtCapacity) {
  ReplayBuffer buf(3);
  for (int i = 0; i < 5; ++i) buf.add({Vec::Constant(1, i), Vec::Zero(1), double(i), Vec::Zero(1)});
  ASSERT_EQ(buf.size(), 3u);
  EXPECT_EQ(buf.at(0).reward, 3.0);
  EXPECT_EQ(buf.at(1).reward, 4.0);
  EXPECT_EQ(buf.at(2).reward, 2.0);
  EXPECT_THROW(ReplayBuffer(0), ContractViolation);
  Rng rng(1);
  EXPECT_THROW(ReplayBuffer(4).sample(1, rng), ContractViolation);
}

TEST(ReplayBuffer, SamplingIsUniform) {
  ReplayBuffer buf(100);
  for (int i = 0; i < 100; ++i) buf.add({Vec::Zero(1), Vec::Zero(1), double(i), Vec::Zero(1)});
  Rng rng(42);
  std::vector<int> counts(100, 0);
  const int n = 100000;
  for (std::size_t i : buf.sample_indices(n, rng)) ++counts[i];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 100.0) * (c - n / 100.0) / (n / 100.0);
  EXPECT_LT(chi2, 148.23);  // 99 dof, p = 0.001
}

TEST(ParameterNoise, AdaptationDirection) {
  const EnvSpec env = make_env("point_mass");
  const AgentState agent = make_agent(env, {}, 4);
  NoiseConfig cfg;
  Rng rng(9);
  Mat states(4, 64);
  for (int j = 0; j < 64; ++j) states.col(j) = env_reset(env, rng);

  ExplorationState big = make_exploration(agent, cfg);
  big.sigma = 5.0;
  resample_perturbation(big, agent, rng);
  const double d_big = adapt_parameter_noise(big, agent, states, cfg);
  EXPECT_GT(d_big, cfg.target_distance);
  EXPECT_DOUBLE_EQ(big.sigma, 5.0 / 1.01);

  ExplorationState tiny = make_exploration(agent, cfg);
  tiny.sigma = 1e-6;
  resample_perturbation(tiny, agent, rng);
  const double d_tiny = adapt_parameter_noise(tiny, agent, states, cfg);
  EXPECT_LT(d_tiny, cfg.target_distance);
  EXPECT_DOUBLE_EQ(tiny.sigma, 1e-6 * 1.01);
}

TEST(ParameterNoise, ZeroSigmaActsLikeCleanPolicy) {
  const EnvSpec env = make_env("pendulum");
  const AgentState agent = make_agent(env, {}, 4);
  NoiseConfig cfg;
  ExplorationState e = make_exploration(agent, cfg);
  e.sigma = 0.0;
  Rng rng(1);
  resample_perturbation(e, agent, rng);
  const Vec s = env_reset(env, rng);
  EXPECT_EQ(explore_action(agent, e, s, cfg, rng), policy_action(agent.actor, agent.scale, s));
}

TEST(ActionNoise, GaussianStdWithinFivePercent) {
  const EnvSpec env = make_env("pendulum");  // torque box [-2, 2], far from the clip
  const AgentState agent = make_agent(env, {}, 6);
  NoiseConfig cfg;
  cfg.kind = NoiseKind::action_gaussian;
  cfg.action_sigma = 0.2;
  const ExplorationState e = make_exploration(agent, cfg);
  Rng rng(10);
  const Vec s = env_reset(env, rng);
  const double clean = policy_action(agent.actor, agent.scale, s)[0];
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double a = explore_action(agent, e, s, cfg, rng)[0] - clean;
    sum += a;
    sq += a * a;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(sd, 0.2, 0.05 * 0.2);
}

TEST(ActionNoise, ResultIsClipped) {
  const EnvSpec env = make_env("hillclimb");
  const AgentState agent = make_agent(env, {}, 6);
  NoiseConfig cfg;
  cfg.kind = NoiseKind::action_gaussian;
  cfg.action_sigma = 100.0;
  const ExplorationState e = make_exploration(agent, cfg);
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const double a = explore_action(agent, e, Vec::Zero(1), cfg, rng)[0];
    EXPECT_GE(a, -1.0);
    EXPECT_LE(a, 2.0);
  }
}
