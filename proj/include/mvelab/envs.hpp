#pragma once

// Deterministic continuous-control MDPs with analytic dynamics and rewards.
//
//   point_mass  2-D double integrator. State (x, y, vx, vy), action is an
//               acceleration in [-1, 1]^2, dt = 0.1 with semi-implicit Euler.
//               Velocities and positions are clipped to [-2, 2]. Reward is
//               -||(x, y)|| - 0.01 ||a||^2 (goal at the origin).
//               Init: position ~ U[-1, 1]^2, velocity ~ U[-0.2, 0.2]^2.
//   pendulum    swing-up. State (cos th, sin th, thdot), th = 0 upright,
//               torque in [-2, 2], dt = 0.05, g = 10, m = l = 1, |thdot| <= 8.
//               Reward -(th^2 + 0.1 thdot^2 + 0.001 a^2), th wrapped to [-pi, pi].
//               Init: th ~ U[-pi, pi], thdot ~ U[-1, 1].
//   hillclimb   1-D state s in [-1, 2], action a in [-1, 2] is a target
//               position, s' = s + delta (a - s). Reward r(s) = s^3 1{s<0} + Phi(s - 1)
//               with the bump Phi(x) = exp(-x^4 / (1 - x^2)) on (-1, 1), 0 elsewhere.
//               Init: s ~ U[-1, 2].
//
// None of the environments terminate; episodes are only time limits.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mvelab/nn.hpp"
#include "mvelab/rng.hpp"

namespace mvelab {

enum class EnvKind { point_mass, pendulum, hillclimb };

struct EnvSpec {
  std::string name;
  EnvKind kind = EnvKind::point_mass;
  int state_dim = 0;
  int action_dim = 0;
  double gamma = 0.99;
  Vec action_low;
  Vec action_high;
  int episode_length = 200;
  double reward_bound = 0.0;   ///< R_max: |r| <= reward_bound on the reachable set
  double hill_delta = 0.1;     ///< hillclimb step fraction
  Vec init_low;                ///< reset box, documented above
  Vec init_high;
};

enum class Provenance { real, imagined };

struct Transition {
  Vec state;
  Vec action;
  double reward = 0.0;
  Vec next_state;
  Provenance origin = Provenance::real;
};

using Policy = std::function<Vec(const Vec&)>;
/// Columns are states.
using BatchPolicy = std::function<Mat(const Mat&)>;

/// Known names: "point_mass", "pendulum", "hillclimb".
EnvSpec make_env(const std::string& name);
EnvSpec make_hillclimb(double delta, double gamma);
std::vector<std::string> env_names();

Vec clip_action(const EnvSpec& spec, const Vec& action);

/// Next state for an already-clipped action. No validation; hot path.
Vec env_dynamics(const EnvSpec& spec, const Vec& state, const Vec& action);

double env_reward(const EnvSpec& spec, const Vec& state, const Vec& action);

/// One step with action clipping. Throws ContractViolation on a non-finite state.
Transition env_step(const EnvSpec& spec, const Vec& state, const Vec& action);

Vec env_reset(const EnvSpec& spec, Rng& rng);
Vec env_reset(const EnvSpec& spec, std::uint64_t seed);

/// Mean of the reset distribution.
Vec env_init_mean(const EnvSpec& spec);

/// Bump function used by the hillclimb reward.
double bump(double x);
double hillclimb_reward(double s);

/// Number of steps T with gamma^T R_max / (1 - gamma) < tolerance.
int value_horizon(const EnvSpec& spec, double gamma, double tolerance);

/// Discounted return of `policy` from `state`, truncated once the tail bound
/// drops under `tolerance`. Uses spec.gamma unless `gamma` is positive.
double true_value(const EnvSpec& spec, const Policy& policy, const Vec& state,
                  double tolerance = 1e-8, double gamma = -1.0);

/// true_value for every column of `states` at once.
Vec true_values_batch(const EnvSpec& spec, const BatchPolicy& policy, const Mat& states,
                      double tolerance = 1e-8, double gamma = -1.0);

/// Q^pi(s, a) = r(s, a) + gamma V^pi(f(s, a)).
double true_q_value(const EnvSpec& spec, const Policy& policy, const Vec& state,
                    const Vec& action, double tolerance = 1e-8, double gamma = -1.0);

}  // namespace mvelab
