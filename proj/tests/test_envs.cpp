#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mvelab/envs.hpp"
#include "mvelab/errors.hpp"

using namespace mvelab;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }

// Independent transcription of the pendulum equations.
Vec pendulum_reference(const Vec& s, double u) {
  const double th = std::atan2(s[1], s[0]);
  u = std::min(2.0, std::max(-2.0, u));
  double thdot = s[2] + (3.0 * 10.0 / 2.0 * std::sin(th) + 3.0 * u) * 0.05;
  thdot = std::min(8.0, std::max(-8.0, thdot));
  const double th2 = th + thdot * 0.05;
  Vec n(3);
  n << std::cos(th2), std::sin(th2), thdot;
  return n;
}

}  // namespace

TEST(Hillclimb, FixedPointWhenActionEqualsState) {
  const EnvSpec env = make_env("hillclimb");
  const Transition t = env_step(env, v1(0.5), v1(0.5));
  EXPECT_EQ(t.next_state[0], 0.5);
}

TEST(Hillclimb, RewardValues) {
  const EnvSpec env = make_env("hillclimb");
  EXPECT_EQ(env_reward(env, v1(0.0), v1(0.0)), 0.0);
  EXPECT_EQ(env_reward(env, v1(1.0), v1(0.0)), 1.0);
  EXPECT_EQ(env_reward(env, v1(-1.0), v1(0.0)), -1.0);
}

TEST(Hillclimb, DerivativeFacts) {
  const double h = 1e-5;
  auto d1 = [&](double s) { return (hillclimb_reward(s + h) - hillclimb_reward(s - h)) / (2 * h); };
  EXPECT_NEAR(d1(0.0), 0.0, 1e-9);
  for (double eps : {0.02, 0.05, 0.1}) EXPECT_LT(d1(1.0 + eps), 0.0);
  // r'(1 + eps) = -Theta(eps^3): the ratio to eps^3 stays bounded as eps shrinks.
  const double r1 = d1(1.02) / std::pow(0.02, 3);
  const double r2 = d1(1.01) / std::pow(0.01, 3);
  EXPECT_NEAR(r1 / r2, 1.0, 0.05);
}

TEST(Hillclimb, BumpVanishesContinuouslyAtSupportEdge) {
  for (double x : {-1.0, 1.0}) {
    for (double off : {0.0, 1e-4, 5e-5}) {
      const double probe = x > 0 ? x - off : x + off;
      EXPECT_LT(std::abs(bump(probe)), 1e-8);
    }
    EXPECT_EQ(bump(x > 0 ? x + 1e-4 : x - 1e-4), 0.0);
  }
}

TEST(PointMass, RestIsEquilibrium) {
  const EnvSpec env = make_env("point_mass");
  Vec s(4);
  s << 0.3, -0.4, 0.0, 0.0;
  EXPECT_EQ(env_step(env, s, Vec::Zero(2)).next_state, s);
}

TEST(PointMass, ClipsActions) {
  const EnvSpec env = make_env("point_mass");
  const Transition t = env_step(env, Vec::Zero(4), Vec::Constant(2, 5.0));
  EXPECT_EQ(t.action, Vec::Ones(2));
  EXPECT_NEAR(t.reward, -0.02, 1e-15);
}

TEST(Pendulum, MatchesIndependentEquations) {
  const EnvSpec env = make_env("pendulum");
  Rng rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    const Vec s = env_reset(env, rng);
    const double a = u(rng);
    const Vec next = env_step(env, s, v1(a)).next_state;
    EXPECT_LE((next - pendulum_reference(s, a)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(EnvStep, RejectsNonFiniteState) {
  const EnvSpec env = make_env("point_mass");
  Vec s = Vec::Zero(4);
  s[2] = NAN;
  EXPECT_THROW(env_step(env, s, Vec::Zero(2)), ContractViolation);
}

TEST(EnvReset, DeterministicAndInsideBox) {
  for (const auto& name : env_names()) {
    const EnvSpec env = make_env(name);
    EXPECT_EQ(env_reset(env, 99u), env_reset(env, 99u));
    Rng rng(5);
    Vec sum = Vec::Zero(env.state_dim);
    Vec sq = Vec::Zero(env.state_dim);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      const Vec s = env_reset(env, rng);
      if (env.kind == EnvKind::pendulum) {
        EXPECT_NEAR(s.head(2).norm(), 1.0, 1e-12);
        EXPECT_LE(std::abs(s[2]), 1.0);
      } else {
        EXPECT_TRUE((s.array() >= env.init_low.array()).all());
        EXPECT_TRUE((s.array() <= env.init_high.array()).all());
      }
      sum += s;
      sq += s.cwiseProduct(s);
    }
    const Vec mean = sum / n;
    const Vec se = ((sq / n - mean.cwiseProduct(mean)) / n).cwiseSqrt();
    const Vec expected = env_init_mean(env);
    for (int d = 0; d < env.state_dim; ++d) EXPECT_LE(std::abs(mean[d] - expected[d]), 3 * se[d]) << name;
  }
}

TEST(EnvReward, BoundedOverRandomProbes) {
  Rng rng(11);
  for (const auto& name : env_names()) {
    const EnvSpec env = make_env(name);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 1000000; ++i) {
      Vec s(env.state_dim);
      Vec a(env.action_dim);
      switch (env.kind) {
        case EnvKind::point_mass:
          for (auto& x : s) x = -2.0 + 4.0 * unit(rng);
          break;
        case EnvKind::pendulum: {
          const double th = -std::numbers::pi + 2 * std::numbers::pi * unit(rng);
          s << std::cos(th), std::sin(th), -8.0 + 16.0 * unit(rng);
          break;
        }
        case EnvKind::hillclimb:
          s[0] = -1.0 + 3.0 * unit(rng);
          break;
      }
      for (int k = 0; k < env.action_dim; ++k) {
        a[k] = env.action_low[k] + (env.action_high[k] - env.action_low[k]) * unit(rng);
      }
      worst = std::max(worst, std::abs(env_reward(env, s, a)));
    }
    EXPECT_LE(worst, env.reward_bound) << name;
  }
}

TEST(TrueValue, AbsorbingZeroRewardFixedPoint) {
  const EnvSpec env = make_env("hillclimb");
  const Policy stay = [](const Vec&) { return v1(0.0); };
  EXPECT_NEAR(true_value(env, stay, v1(0.0), 1e-8), 0.0, 1e-8);
}

TEST(TrueValue, ConstantRewardGeometricSeries) {
  // Sitting at the bump peak yields reward 1 forever.
  const EnvSpec env = make_env("hillclimb");
  const Policy stay = [](const Vec&) { return v1(1.0); };
  EXPECT_NEAR(true_value(env, stay, v1(1.0), 1e-8), 1.0 / (1.0 - env.gamma), 1e-8);
}

TEST(TrueValue, HillclimbClosedFormTrajectory) {
  // s_t = theta + (s0 - theta)(1 - delta)^t summed in long double until the tail is negligible.
  const EnvSpec env = make_env("hillclimb");
  for (double theta : {-0.5, 0.3, 0.9, 1.4}) {
    for (double s0 : {-0.9, 0.0, 1.05, 1.9}) {
      long double total = 0.0L, disc = 1.0L;
      for (int t = 0; t < 20000; ++t) {
        const double s = theta + (s0 - theta) * std::pow(1.0 - env.hill_delta, t);
        total += disc * hillclimb_reward(s);
        disc *= env.gamma;
      }
      const Policy pi = [theta](const Vec&) { return v1(theta); };
      EXPECT_NEAR(true_value(env, pi, v1(s0), 1e-8), static_cast<double>(total), 2e-8);
    }
  }
}

TEST(TrueValue, HorizonBound) {
  const EnvSpec env = make_env("point_mass");
  const int T = value_horizon(env, 0.99, 1e-8);
  EXPECT_LT(std::pow(0.99, T) * env.reward_bound / 0.01, 1e-8);
  EXPECT_GE(std::pow(0.99, T - 1) * env.reward_bound / 0.01, 1e-8);
  EXPECT_LE(T, 3000);
}
