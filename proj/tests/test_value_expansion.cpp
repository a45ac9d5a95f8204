#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mvelab/errors.hpp"
#include "mvelab/value_expansion.hpp"
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

// Agent whose target networks differ from the live ones.
AgentState shifted_agent(const EnvSpec& env, std::uint64_t seed) {
  AgentConfig cfg;
  cfg.hidden = {16, 16};
  AgentState a = make_agent(env, cfg, seed);
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 0.2);
  for (auto& x : a.target_actor.values) x += n(rng);
  for (auto& x : a.target_critic.values) x += n(rng);
  return a;
}

// Straight-line label: walks the true env with the target actor and sums
// gamma^{k-t} r_k over k = t..H-1, then adds gamma^{H-t} Q'(s_H, a_H).
std::vector<double> reference_labels(const EnvSpec& env, const AgentState& agent,
                                     const Transition& tau0, int H, double gamma) {
  std::vector<Vec> s{tau0.next_state};
  std::vector<Vec> a;
  std::vector<double> r;
  for (int k = 0; k < H; ++k) {
    const Vec act = clip_action(env, policy_action(agent.target_actor, agent.scale, s.back()));
    const Transition t = env_step(env, s.back(), act);
    a.push_back(act);
    r.push_back(t.reward);
    s.push_back(t.next_state);
  }
  const Vec aH = clip_action(env, policy_action(agent.target_actor, agent.scale, s.back()));
  const double tail = q_value(agent.target_critic, s.back(), aH);
  std::vector<double> out;
  for (int t = -1; t < H; ++t) {
    long double acc = 0.0L;
    for (int k = t; k < H; ++k) {
      const double rk = k == -1 ? tau0.reward : r[static_cast<std::size_t>(k)];
      acc += std::pow(gamma, k - t) * rk;
    }
    acc += std::pow(gamma, H - t) * tail;
    out.push_back(static_cast<double>(acc));
  }
  return out;
}

}  // namespace

TEST(MveMode, ParseRoundTrip) {
  for (auto m : {MveMode::off, MveMode::tdk, MveMode::naive, MveMode::imagination_buffer}) {
    EXPECT_EQ(parse_mve_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_mve_mode("td-k"), ContractViolation);
}

TEST(MveMode, UsesModel) {
  EXPECT_FALSE(uses_model({0, MveMode::tdk}));
  EXPECT_FALSE(uses_model({5, MveMode::off}));
  EXPECT_TRUE(uses_model({5, MveMode::tdk}));
  EXPECT_TRUE(uses_model({1, MveMode::naive}));
  EXPECT_TRUE(uses_model({3, MveMode::imagination_buffer, 4}));
  EXPECT_FALSE(uses_model({3, MveMode::imagination_buffer, 0}));
}

TEST(MveStateValue, WorkedExample) {
  ImaginedRollout r;
  r.states.assign(3, Vec::Zero(1));
  r.actions.assign(3, Vec::Zero(1));
  r.rewards = {1.0, 1.0};
  r.depth = 2;
  // 1 + 0.5 + 0.25 * 4
  EXPECT_DOUBLE_EQ(mve_state_value(r, 4.0, 0.5).value, 2.5);
  r.depth = 0;
  r.rewards.clear();
  EXPECT_DOUBLE_EQ(mve_state_value(r, 2.0, 0.5).value, 2.0);
}

TEST(MveStateValue, TrueTailTelescopesToTrueValue) {
  for (const auto& name : env_names()) {
    const EnvSpec env = make_env(name);
    const AgentState agent = make_agent(env, {}, 2);
    const Policy pi = [&](const Vec& s) { return policy_action(agent.actor, agent.scale, s); };
    const DynamicsModel oracle = make_oracle_model(env);
    Rng rng(3);
    for (int i = 0; i < 5; ++i) {
      const Vec s0 = env_reset(env, rng);
      for (int H : {0, 3, 7}) {
        const ImaginedRollout r = imagine_rollout(oracle, pi, s0, H);
        const double tail = true_value(env, pi, r.states.back());
        EXPECT_NEAR(mve_state_value(r, tail, env.gamma).value, true_value(env, pi, s0), 1e-6) << name;
      }
    }
  }
}

TEST(MveStateValue, TruncatedRolloutUsesUsableDepth) {
  ImaginedRollout r;
  r.states.assign(2, Vec::Zero(1));
  r.actions.assign(2, Vec::Zero(1));
  r.rewards = {3.0};
  r.depth = 1;
  r.truncated = true;
  const ExpansionValue v = mve_state_value(r, 10.0, 0.9);
  EXPECT_TRUE(v.truncated);
  EXPECT_EQ(v.depth, 1);
  EXPECT_DOUBLE_EQ(v.value, 3.0 + 0.9 * 10.0);
}

TEST(TdkTargets, HandExpandedHorizonOne) {
  const EnvSpec env = make_env("hillclimb");
  const AgentState agent = shifted_agent(env, 3);
  const DynamicsModel model = make_oracle_model(env);
  const Transition tau0 = env_step(env, Vec::Constant(1, 0.4), Vec::Constant(1, 1.2));
  const double g = 0.9;

  const Vec s0 = tau0.next_state;
  const Vec a0 = policy_action(agent.target_actor, agent.scale, s0);
  const double r0 = hillclimb_reward(s0[0]);
  const Vec s1 = Vec::Constant(1, s0[0] + env.hill_delta * (a0[0] - s0[0]));
  const Vec a1 = policy_action(agent.target_actor, agent.scale, s1);
  const double q1 = q_value(agent.target_critic, s1, a1);

  const auto t = build_tdk_targets(target_networks(agent), model, tau0, 1, g);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].origin_depth, -1);
  EXPECT_EQ(t[0].state, tau0.state);
  EXPECT_EQ(t[0].action, tau0.action);
  EXPECT_NEAR(t[0].target_value, tau0.reward + g * r0 + g * g * q1, 1e-12);
  EXPECT_EQ(t[1].origin_depth, 0);
  EXPECT_EQ(t[1].state, s0);
  EXPECT_TRUE(t[1].action.isApprox(a0, 1e-15));
  EXPECT_NEAR(t[1].target_value, r0 + g * q1, 1e-12);
}

TEST(TdkTargets, MatchStraightLineSumsOnEveryEnv) {
  for (const auto& name : env_names()) {
    const EnvSpec env = make_env(name);
    const AgentState agent = shifted_agent(env, 5);
    const DynamicsModel model = make_oracle_model(env);
    Rng rng(2);
    for (const Transition& tau0 : random_transitions(env, 5, rng)) {
      for (int H : {0, 1, 4, 10}) {
        const auto got = build_tdk_targets(target_networks(agent), model, tau0, H, env.gamma);
        const auto want = reference_labels(env, agent, tau0, H, env.gamma);
        ASSERT_EQ(got.size(), want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
          EXPECT_EQ(got[i].origin_depth, static_cast<int>(i) - 1);
          EXPECT_LE(oracle::rel_err(got[i].target_value, want[i], 1.0), 1e-12) << name << " H=" << H;
        }
      }
    }
  }
}

TEST(TdkTargets, SuffixConsistency) {
  const EnvSpec env = make_env("pendulum");
  const AgentState agent = shifted_agent(env, 7);
  const DynamicsModel model = make_oracle_model(env);
  Rng rng(4);
  const Transition tau0 = random_transitions(env, 1, rng)[0];
  const int H = 8;
  const auto t = build_tdk_targets(target_networks(agent), model, tau0, H, env.gamma);
  const ImaginedRollout roll =
      imagine_rollout(model, [&](const Vec& s) { return policy_action(agent.target_actor, agent.scale, s); },
                      tau0.next_state, H);
  for (int k = 0; k + 1 <= H; ++k) {
    const double lhs = t[static_cast<std::size_t>(k)].target_value;  // depth k - 1
    const double r = k == 0 ? tau0.reward : roll.rewards[static_cast<std::size_t>(k - 1)];
    const double rhs = r + env.gamma * t[static_cast<std::size_t>(k + 1)].target_value;
    EXPECT_LE(oracle::rel_err(lhs, rhs, 1.0), 1e-12);
  }
}

TEST(NaiveTargets, EqualsRealPairOfTdk) {
  const EnvSpec env = make_env("point_mass");
  const AgentState agent = shifted_agent(env, 9);
  const DynamicsModel model = make_oracle_model(env);
  Rng rng(6);
  for (const Transition& tau0 : random_transitions(env, 4, rng)) {
    const auto tdk = build_tdk_targets(target_networks(agent), model, tau0, 6, env.gamma);
    const auto naive = naive_targets(target_networks(agent), model, tau0, 6, env.gamma);
    ASSERT_EQ(naive.size(), 1u);
    EXPECT_EQ(naive_targets(target_networks(agent), model, tau0, 0, env.gamma).size(), 1u);
    EXPECT_EQ(naive[0].origin_depth, -1);
    EXPECT_EQ(naive[0].target_value, tdk[0].target_value);
    EXPECT_EQ(naive[0].state, tdk[0].state);
  }
}

TEST(ExpandTargets, HorizonZeroIsPlainDdpgBitForBit) {
  const EnvSpec env = make_env("pendulum");
  const AgentState agent = shifted_agent(env, 11);
  DynamicsModel model = make_dynamics_model(env, {}, 3);
  Rng rng(8);
  const TransitionBatch b = make_batch(random_transitions(env, 32, rng));
  const TargetBatch t = expand_targets(target_networks(agent), model, b, 0, env.gamma, true);
  EXPECT_EQ(t.labels, ddpg_targets(target_networks(agent), b, env.gamma));
  EXPECT_EQ(t.states, b.states);
  EXPECT_EQ(t.actions, b.actions);
}

TEST(ExpandTargets, BatchMatchesPerTransition) {
  const EnvSpec env = make_env("point_mass");
  const AgentState agent = shifted_agent(env, 13);
  const DynamicsModel model = make_oracle_model(env);
  Rng rng(10);
  const auto data = random_transitions(env, 6, rng);
  const int H = 3;
  const TargetBatch t = expand_targets(target_networks(agent), model, make_batch(data), H,
                                       env.gamma, true);
  ASSERT_EQ(t.size(), 6 * (H + 1));
  for (int j = 0; j < 6; ++j) {
    const auto single = build_tdk_targets(target_networks(agent), model, data[static_cast<std::size_t>(j)],
                                          H, env.gamma);
    for (int d = -1; d < H; ++d) {
      const Eigen::Index k = (d + 1) * 6 + j;
      EXPECT_EQ(t.origin_depth[static_cast<std::size_t>(k)], d);
      EXPECT_NEAR(t.labels[k], single[static_cast<std::size_t>(d + 1)].target_value, 1e-12);
    }
  }
}

TEST(ExpandTargets, BlownUpModelTruncatesButStaysFinite) {
  const EnvSpec env = make_env("hillclimb");
  const AgentState agent = shifted_agent(env, 1);
  DynamicsModel model = make_dynamics_model(env, {}, 1);
  model.net.values.setZero();
  model.delta_mean = Vec::Constant(1, 4e5);
  Rng rng(1);
  const TransitionBatch b = make_batch(random_transitions(env, 4, rng));
  const TargetBatch t = expand_targets(target_networks(agent), model, b, 10, 0.9, true);
  EXPECT_TRUE(t.labels.allFinite());
  EXPECT_EQ(t.size(), 4 * 3);  // real pair plus depths 0 and 1
}

TEST(TdkCriticGrad, MatchesFiniteDifferences) {
  const EnvSpec env = make_env("pendulum");
  const AgentState agent = shifted_agent(env, 15);
  const DynamicsModel model = make_oracle_model(env);
  Rng rng(12);
  const auto data = random_transitions(env, 3, rng);
  std::vector<CriticTarget> targets;
  for (const auto& tau0 : data) {
    auto t = build_tdk_targets(target_networks(agent), model, tau0, 4, env.gamma);
    targets.insert(targets.end(), t.begin(), t.end());
  }
  const Vec g = tdk_critic_grad(agent.critic, targets);
  const Vec fd = oracle::central_diff(
      [&](const Vec& phi) {
        MlpParams c = agent.critic;
        c.values = phi;
        double loss = 0.0;
        for (const auto& t : targets) {
          const double e = q_value(c, t.state, t.action) - t.target_value;
          loss += e * e;
        }
        return loss / static_cast<double>(targets.size());
      },
      agent.critic.values);
  EXPECT_LT(oracle::max_rel_err(g, fd, 1e-5), 1e-4);
  EXPECT_THROW(tdk_critic_grad(agent.critic, std::span<const CriticTarget>{}), ContractViolation);
}

TEST(TdkCriticGrad, ReducesToPlainRegressionAndVanishesAtFit) {
  const EnvSpec env = make_env("point_mass");
  const AgentState agent = shifted_agent(env, 19);
  Rng rng(13);
  const Transition tr = random_transitions(env, 1, rng)[0];
  const CriticTarget one{tr.state, tr.action, 0.75, -1};
  EXPECT_EQ(tdk_critic_grad(agent.critic, std::span<const CriticTarget>(&one, 1)),
            regression_grad(agent.critic, Mat(tr.state), Mat(tr.action), Vec::Constant(1, 0.75)));
  const CriticTarget fit{tr.state, tr.action, q_value(agent.critic, tr.state, tr.action), 0};
  EXPECT_EQ(tdk_critic_grad(agent.critic, std::span<const CriticTarget>(&fit, 1)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(TrainIteration, ActorThenCriticThenTargets) {
  const EnvSpec env = make_env("point_mass");
  const AgentState start = shifted_agent(env, 17);
  const DynamicsModel model = make_oracle_model(env);
  Rng rng(14);
  const TransitionBatch b = make_batch(random_transitions(env, 16, rng));
  const MveConfig cfg{3, MveMode::tdk};

  AgentState manual = start;
  apply_actor_step(manual, actor_loss_grad(manual, b));
  const TargetBatch t = expand_targets(target_networks(manual), model, b, 3, env.gamma, true);
  apply_critic_step(manual, tdk_critic_grad(manual.critic, t));
  target_update_inplace(manual);

  AgentState agent = start;
  train_iteration(agent, &model, b, cfg, env.gamma);
  EXPECT_EQ(agent.actor, manual.actor);
  EXPECT_EQ(agent.critic, manual.critic);
  EXPECT_EQ(agent.target_actor, manual.target_actor);
  EXPECT_EQ(agent.target_critic, manual.target_critic);
  EXPECT_THROW(train_iteration(agent, nullptr, b, cfg, env.gamma), ContractViolation);
}

TEST(TrainIteration, HorizonZeroModesAreBitIdentical) {
  const EnvSpec env = make_env("pendulum");
  const DynamicsModel model = make_dynamics_model(env, {}, 4);
  ReplayBuffer buf(5000);
  Rng fill(3);
  for (auto& t : random_transitions(env, 2000, fill)) buf.add(t);

  std::vector<AgentState> agents(4, make_agent(env, {}, 21));
  std::vector<Rng> rngs(4, Rng(99));
  ReplayBuffer imag(100);
  for (int step = 0; step < 1000; ++step) {
    train_iteration(agents[0], nullptr, buf.sample_batch(32, rngs[0]), {0, MveMode::off}, env.gamma);
    train_iteration(agents[1], &model, buf.sample_batch(32, rngs[1]), {0, MveMode::tdk}, env.gamma);
    train_iteration(agents[2], &model, buf.sample_batch(32, rngs[2]), {0, MveMode::naive}, env.gamma);
    imagination_buffer_step(agents[3], model, buf, imag, {0, MveMode::imagination_buffer}, env.gamma,
                            32, rngs[3]);
  }
  EXPECT_EQ(imag.size(), 0u);
  for (int i = 1; i < 4; ++i) {
    EXPECT_EQ(agents[i].actor, agents[0].actor) << i;
    EXPECT_EQ(agents[i].critic, agents[0].critic) << i;
    EXPECT_EQ(agents[i].target_actor, agents[0].target_actor) << i;
    EXPECT_EQ(agents[i].target_critic, agents[0].target_critic) << i;
  }
}

TEST(ImaginationBuffer, CountsAndProvenance) {
  const EnvSpec env = make_env("point_mass");
  AgentState agent = make_agent(env, {}, 2);
  const DynamicsModel model = make_oracle_model(env);
  ReplayBuffer real(1000);
  Rng fill(5);
  for (auto& t : random_transitions(env, 200, fill)) real.add(t);
  ReplayBuffer imag(100000);
  Rng rng(6);
  const MveConfig cfg{2, MveMode::imagination_buffer, 2, 8};
  const int N = 7;
  for (int step = 0; step < N; ++step) {
    EXPECT_EQ(imagination_buffer_step(agent, model, real, imag, cfg, env.gamma, 16, rng), 2u * 8u);
  }
  EXPECT_EQ(imag.size(), 2u * N * 8u);
  for (const Transition& t : imag.contents()) EXPECT_EQ(t.origin, Provenance::imagined);
  for (const Transition& t : real.contents()) EXPECT_EQ(t.origin, Provenance::real);
  // Imagined transitions follow the true dynamics under the oracle model.
  for (const Transition& t : imag.contents()) {
    EXPECT_EQ(env_dynamics(env, t.state, t.action), t.next_state);
  }
}

TEST(ImaginationBuffer, ZeroRatioSkipsImagination) {
  const EnvSpec env = make_env("point_mass");
  AgentState agent = make_agent(env, {}, 2);
  const DynamicsModel model = make_oracle_model(env);
  ReplayBuffer real(100);
  Rng fill(5);
  for (auto& t : random_transitions(env, 50, fill)) real.add(t);
  ReplayBuffer imag(100);
  Rng rng(1);
  EXPECT_EQ(imagination_buffer_step(agent, model, real, imag, {5, MveMode::imagination_buffer, 0}, 0.99,
                                    8, rng),
            0u);
  EXPECT_TRUE(imag.empty());
}
