#include "mvelab/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mvelab/errors.hpp"

namespace mvelab {

namespace {

constexpr double kPointMassDt = 0.1;
constexpr double kPointMassLimit = 2.0;

constexpr double kPendulumDt = 0.05;
constexpr double kPendulumGravity = 10.0;
constexpr double kPendulumMass = 1.0;
constexpr double kPendulumLength = 1.0;
constexpr double kPendulumMaxSpeed = 8.0;
constexpr double kPendulumMaxTorque = 2.0;

double wrap_angle(double th) {
  return std::remainder(th, 2.0 * std::numbers::pi);
}

Vec filled(int n, double v) { return Vec::Constant(n, v); }

}  // namespace

double bump(double x) {
  if (x <= -1.0 || x >= 1.0) return 0.0;
  const double x2 = x * x;
  return std::exp(-(x2 * x2) / (1.0 - x2));
}

double hillclimb_reward(double s) {
  return (s < 0.0 ? s * s * s : 0.0) + bump(s - 1.0);
}

EnvSpec make_hillclimb(double delta, double gamma) {
  require(delta > 0.0 && delta <= 1.0, "hillclimb delta must lie in (0, 1]");
  require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
  EnvSpec s;
  s.name = "hillclimb";
  s.kind = EnvKind::hillclimb;
  s.state_dim = 1;
  s.action_dim = 1;
  s.gamma = gamma;
  s.action_low = filled(1, -1.0);
  s.action_high = filled(1, 2.0);
  s.episode_length = 200;
  s.reward_bound = 1.0;
  s.hill_delta = delta;
  s.init_low = filled(1, -1.0);
  s.init_high = filled(1, 2.0);
  return s;
}

EnvSpec make_env(const std::string& name) {
  EnvSpec s;
  if (name == "point_mass") {
    s.name = name;
    s.kind = EnvKind::point_mass;
    s.state_dim = 4;
    s.action_dim = 2;
    s.gamma = 0.99;
    s.action_low = filled(2, -1.0);
    s.action_high = filled(2, 1.0);
    s.episode_length = 200;
    s.reward_bound = std::sqrt(2.0) * kPointMassLimit + 0.02;
    s.init_low = Vec(4);
    s.init_low << -1.0, -1.0, -0.2, -0.2;
    s.init_high = -s.init_low;
    return s;
  }
  if (name == "pendulum") {
    s.name = name;
    s.kind = EnvKind::pendulum;
    s.state_dim = 3;
    s.action_dim = 1;
    s.gamma = 0.99;
    s.action_low = filled(1, -kPendulumMaxTorque);
    s.action_high = filled(1, kPendulumMaxTorque);
    s.episode_length = 200;
    s.reward_bound = std::numbers::pi * std::numbers::pi +
                     0.1 * kPendulumMaxSpeed * kPendulumMaxSpeed +
                     0.001 * kPendulumMaxTorque * kPendulumMaxTorque;
    // Reset box is over (th, thdot); states are (cos, sin, thdot).
    s.init_low = Vec(2);
    s.init_low << -std::numbers::pi, -1.0;
    s.init_high = -s.init_low;
    return s;
  }
  if (name == "hillclimb") return make_hillclimb(0.1, 0.99);
  throw ContractViolation("unknown environment '" + name + "'");
}

std::vector<std::string> env_names() { return {"point_mass", "pendulum", "hillclimb"}; }

Vec clip_action(const EnvSpec& spec, const Vec& action) {
  require(action.size() == spec.action_dim, "action has wrong dimension for " + spec.name);
  return action.cwiseMax(spec.action_low).cwiseMin(spec.action_high);
}

Vec env_dynamics(const EnvSpec& spec, const Vec& s, const Vec& a) {
  switch (spec.kind) {
    case EnvKind::point_mass: {
      Vec next(4);
      const double vx = std::clamp(s[2] + kPointMassDt * a[0], -kPointMassLimit, kPointMassLimit);
      const double vy = std::clamp(s[3] + kPointMassDt * a[1], -kPointMassLimit, kPointMassLimit);
      next[0] = std::clamp(s[0] + kPointMassDt * vx, -kPointMassLimit, kPointMassLimit);
      next[1] = std::clamp(s[1] + kPointMassDt * vy, -kPointMassLimit, kPointMassLimit);
      next[2] = vx;
      next[3] = vy;
      return next;
    }
    case EnvKind::pendulum: {
      const double th = std::atan2(s[1], s[0]);
      const double accel = 3.0 * kPendulumGravity / (2.0 * kPendulumLength) * std::sin(th) +
                           3.0 / (kPendulumMass * kPendulumLength * kPendulumLength) * a[0];
      const double thdot =
          std::clamp(s[2] + accel * kPendulumDt, -kPendulumMaxSpeed, kPendulumMaxSpeed);
      const double th_next = th + thdot * kPendulumDt;
      Vec next(3);
      next << std::cos(th_next), std::sin(th_next), thdot;
      return next;
    }
    case EnvKind::hillclimb: {
      Vec next(1);
      next[0] = std::clamp(s[0] + spec.hill_delta * (a[0] - s[0]), -1.0, 2.0);
      return next;
    }
  }
  return s;
}

double env_reward(const EnvSpec& spec, const Vec& s, const Vec& a) {
  switch (spec.kind) {
    case EnvKind::point_mass:
      return -std::hypot(s[0], s[1]) - 0.01 * a.squaredNorm();
    case EnvKind::pendulum: {
      const double th = wrap_angle(std::atan2(s[1], s[0]));
      return -(th * th + 0.1 * s[2] * s[2] + 0.001 * a[0] * a[0]);
    }
    case EnvKind::hillclimb:
      return hillclimb_reward(s[0]);
  }
  return 0.0;
}

Transition env_step(const EnvSpec& spec, const Vec& state, const Vec& action) {
  require(state.size() == spec.state_dim, "state has wrong dimension for " + spec.name);
  require(state.allFinite(), "env_step: non-finite state");
  Transition t;
  t.state = state;
  t.action = clip_action(spec, action);
  t.reward = env_reward(spec, state, t.action);
  t.next_state = env_dynamics(spec, state, t.action);
  return t;
}

Vec env_reset(const EnvSpec& spec, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vec box(spec.init_low.size());
  for (Eigen::Index i = 0; i < box.size(); ++i) {
    box[i] = spec.init_low[i] + (spec.init_high[i] - spec.init_low[i]) * unif(rng);
  }
  if (spec.kind == EnvKind::pendulum) {
    Vec s(3);
    s << std::cos(box[0]), std::sin(box[0]), box[1];
    return s;
  }
  return box;
}

Vec env_reset(const EnvSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  return env_reset(spec, rng);
}

Vec env_init_mean(const EnvSpec& spec) {
  if (spec.kind == EnvKind::pendulum) {
    // E[cos th] = E[sin th] = 0 for th uniform on [-pi, pi].
    return Vec::Zero(3);
  }
  return 0.5 * (spec.init_low + spec.init_high);
}

int value_horizon(const EnvSpec& spec, double gamma, double tolerance) {
  require(tolerance > 0.0, "tolerance must be positive");
  require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
  const double head = spec.reward_bound / (1.0 - gamma);
  if (head < tolerance) return 0;
  return static_cast<int>(std::floor(std::log(tolerance / head) / std::log(gamma))) + 1;
}

double true_value(const EnvSpec& spec, const Policy& policy, const Vec& state, double tolerance,
                  double gamma) {
  const double g = gamma > 0.0 ? gamma : spec.gamma;
  const int T = value_horizon(spec, g, tolerance);
  Vec s = state;
  double total = 0.0;
  double discount = 1.0;
  for (int t = 0; t < T; ++t) {
    const Vec a = clip_action(spec, policy(s));
    total += discount * env_reward(spec, s, a);
    s = env_dynamics(spec, s, a);
    discount *= g;
  }
  return total;
}

Vec true_values_batch(const EnvSpec& spec, const BatchPolicy& policy, const Mat& states,
                      double tolerance, double gamma) {
  const double g = gamma > 0.0 ? gamma : spec.gamma;
  const int T = value_horizon(spec, g, tolerance);
  Mat s = states;
  Vec total = Vec::Zero(states.cols());
  double discount = 1.0;
  for (int t = 0; t < T; ++t) {
    const Mat a = policy(s);
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      const Vec aj = clip_action(spec, a.col(j));
      const Vec sj = s.col(j);
      total[j] += discount * env_reward(spec, sj, aj);
      s.col(j) = env_dynamics(spec, sj, aj);
    }
    discount *= g;
  }
  return total;
}

double true_q_value(const EnvSpec& spec, const Policy& policy, const Vec& state, const Vec& action,
                    double tolerance, double gamma) {
  const double g = gamma > 0.0 ? gamma : spec.gamma;
  const Vec a = clip_action(spec, action);
  return env_reward(spec, state, a) +
         g * true_value(spec, policy, env_dynamics(spec, state, a), tolerance / g, g);
}

}  // namespace mvelab
