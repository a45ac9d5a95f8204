#pragma once

// Numerical audits of the value-expansion error bound, the off-policy
// ascent property of the deterministic policy gradient and the hillclimb
// counterexample, plus the critic distribution-mismatch measurement.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "mvelab/ddpg.hpp"
#include "mvelab/envs.hpp"

namespace mvelab {

/// State-value function evaluated on the columns of a matrix.
using BatchValueFn = std::function<Vec(const Mat&)>;

// ---------------------------------------------------------------- Lipschitz

/// max_j |g(a_j) - g(b_j)| / ||a_j - b_j|| over column pairs with a_j != b_j.
double lipschitz_ratio(const BatchValueFn& g, const Mat& a, const Mat& b);

/// Pairs of states for Lipschitz probing: half are independent draws from the
/// reset distribution, half are local pairs (s, s + radius * u) with u uniform
/// in the unit box scaled by the reset box width.
std::pair<Mat, Mat> sample_state_pairs(const EnvSpec& env, int n_pairs, double radius, Rng& rng);

struct LipschitzEstimate {
  double reward = 0.0;  ///< L_r of s -> r(s, pi(s))
  double value = 0.0;   ///< L_V of s -> V^pi(s)
};

/// Empirical lower bounds on L_r and L_V. Requires n_pairs >= 100.
LipschitzEstimate estimate_lipschitz(const EnvSpec& env, const BatchPolicy& policy, int n_pairs,
                                     Rng& rng, double gamma = -1.0, double radius = 0.05);

// ---------------------------------------------------------- perturbed model

/// f_hat(s, a) = f(s, a) + scale * tanh(W s + b): a bounded smooth offset of
/// the true dynamics.
struct PerturbedModel {
  EnvSpec env;
  Mat weight;
  Vec bias;
  double scale = 0.0;
  /// Bound on max_{1<=t<=H} E||s_hat_t - s_t||^2 <= epsilon^2, set by
  /// calibrate_epsilon on the states being audited.
  double epsilon = 0.0;
};

PerturbedModel make_perturbed_model(const EnvSpec& env, double scale, Rng& rng);
Vec perturbed_dynamics(const PerturbedModel& model, const Vec& state, const Vec& action);

/// Paired open-loop rollouts of `policy` under f and f_hat from each column
/// of `starts`. Returns E||s_hat_t - s_t||^2 for t = 0..horizon.
std::vector<double> rollout_deviation(const PerturbedModel& model, const BatchPolicy& policy,
                                      const Mat& starts, int horizon);

/// Sets model.epsilon to the square root of the largest measured squared
/// deviation over depths 1..horizon. Returns it.
double calibrate_epsilon(PerturbedModel& model, const BatchPolicy& policy, const Mat& starts,
                         int horizon);

/// Rescales the offset so that the calibrated epsilon is close to `target`.
void scale_to_epsilon(PerturbedModel& model, const BatchPolicy& policy, const Mat& starts,
                      int horizon, double target);

// ------------------------------------------------------- error-bound audit

struct BoundStep {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;  ///< 3 standard errors of the left side
  bool holds = false;   ///< lhs <= rhs + margin
  bool holds_exact = false;  ///< lhs <= rhs up to rounding
};

struct BoundReport {
  int horizon = 0;
  double gamma = 0.0;
  int n_states = 0;
  double mse_mve = 0.0;                 ///< E (V_hat_H(s0) - V^pi(s0))^2
  double mse_critic_pushforward = 0.0;  ///< A = E (V_hat(s_hat_H) - V^pi(s_hat_H))^2
  double model_term = 0.0;              ///< E (M_hat - M)^2
  double cross_term = 0.0;              ///< 2 gamma^H E[(M_hat - M)(V_hat(s_hat_H) - V^pi(s_H))]
  double tail_term = 0.0;               ///< X = E (V_hat(s_hat_H) - V^pi(s_H))^2
  double value_shift = 0.0;             ///< B = E (V^pi(s_hat_H) - V^pi(s_H))^2
  double epsilon = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;  ///< implied constant of the (1 + c2 eps) gamma^2H form, informational
  double lipschitz_Lr = 0.0;
  double lipschitz_LV = 0.0;
  bool applicable = true;  ///< A >= eps^2
  std::vector<BoundStep> steps;

  /// Every recorded step holds (steps that need the assumption are only
  /// recorded when it is met).
  bool all_hold() const;
  bool all_hold_exact() const;
};

/// Audits the decomposition on n_states reset states. `critic` is V_hat.
/// `lipschitz` seeds the constants; they are raised to cover the audited
/// pairs themselves.
BoundReport check_mve_error_decomposition(const EnvSpec& env, const PerturbedModel& model,
                                          const BatchValueFn& critic, const BatchPolicy& policy,
                                          int horizon, double gamma, const Mat& states,
                                          LipschitzEstimate lipschitz = {});

void write_bound_report_csv(std::ostream& out, const BoundReport& report);
void print_bound_report(std::ostream& out, const BoundReport& report);

struct AuditTrialConfig {
  std::string env = "hillclimb";
  int horizon = 3;
  double gamma = 0.9;
  int n_states = 300;
  int lipschitz_pairs = 200;
  double epsilon = -1.0;  ///< target epsilon; negative draws a random offset scale
  bool oracle = false;    ///< epsilon = 0
};

/// One randomized trial: random policy from a small family (constant target
/// on hillclimb, linear feedback on point_mass), random offset and a random
/// critic V^pi + bounded smooth error.
BoundReport run_bound_trial(const AuditTrialConfig& config, std::uint64_t seed);

// ---------------------------------------------------- oracle-model identity

/// |(V_hat_H(s0) - V^pi(s0)) - gamma^H (V_hat(s_H) - V^pi(s_H))| for each
/// column of `starts`, using oracle imagination with the target actor and
/// V_hat = Q'(., pi'(.)).
Vec oracle_identity_residuals(const EnvSpec& env, const AgentState& agent, const Mat& starts,
                              int horizon, double gamma = -1.0);

// ------------------------------------------------------------------ ascent

struct FqeConfig {
  std::vector<int> hidden{64, 64};
  int episodes = 100;
  int episode_length = 100;  ///< 1 keeps the data on reset states only
  double action_sigma = 0.3;
  int steps = 5000;
  int batch = 128;
  double learning_rate = 1e-3;
  double decay = 1e-2;
};

struct FqeResult {
  MlpParams critic;
  std::vector<Transition> data;
  double bellman_error = 0.0;  ///< on held-out behaviour transitions, live critic both sides
};

/// Fits Q^pi of a fixed actor from noisy behaviour data by regression onto
/// r + gamma Q'(s', pi(s')).
FqeResult fit_policy_critic(const EnvSpec& env, const MlpParams& actor, const ActionScale& scale,
                            double gamma, const FqeConfig& config, std::uint64_t seed);

struct AscentReport {
  double grad_norm = 0.0;
  bool degenerate = false;  ///< g = 0: no direction to test
  double j_base = 0.0;
  std::vector<double> alphas;
  std::vector<double> delta_j;  ///< mean over beta of V^{theta + alpha g} - V^theta
  std::vector<double> std_err;
  std::vector<bool> improved;   ///< delta_j > 3 std_err
  double largest_improving_alpha = 0.0;
  bool ascends_at_smallest = false;
};

/// Moves the actor along sign * E_beta[grad_theta pi grad_a Q] and measures
/// J_beta = E_beta V^pi with common start states.
AscentReport check_ascent_direction(const EnvSpec& env, const AgentState& agent,
                                    const Mat& beta_states, const std::vector<double>& alphas,
                                    double gamma = -1.0, double sign = 1.0);

// ---------------------------------------------------------- counterexample

struct CounterexampleReport {
  double delta = 0.0;
  double epsilon_s = 0.0;
  double gamma = 0.0;
  double g_zero = 0.0;  ///< dQ/dtheta at s = 0
  double g_far = 0.0;   ///< dQ/dtheta at s = 1 + eps
  double direction = 0.0;
  double j_base = 0.0;
  std::vector<double> alphas;
  std::vector<double> delta_j;
  bool g_zero_vanishes = false;  ///< |g(0)| < 1e-6
  bool g_far_negative = false;
  bool all_decrease = false;

  bool holds() const { return g_zero_vanishes && g_far_negative && all_decrease; }
};

/// Hillclimb with policy pi_theta(s) = theta at theta = 0 and beta split
/// evenly between 0 and 1 + eps. Gradients are central differences of the
/// exact Q^pi; J_beta is the exact truncated return.
CounterexampleReport check_hillclimb_counterexample(double delta, double epsilon_s,
                                                    const std::vector<double>& alphas,
                                                    double gamma = 0.99);

// ------------------------------------------------------ distribution shift

struct MismatchReport {
  double mse_beta = 0.0;
  double mse_pushforward = 0.0;
  double diff_std_err = 0.0;  ///< standard error of the paired per-state difference
  int n = 0;

  bool pushforward_worse() const { return mse_pushforward - mse_beta > 3.0 * diff_std_err; }
};

/// Critic MSE against V^pi on the states in `beta` and on their images after
/// `horizon` true steps of pi. V_hat(s) = Q(s, pi(s)).
MismatchReport measure_distribution_mismatch(const EnvSpec& env, const MlpParams& critic,
                                             const MlpParams& actor, const ActionScale& scale,
                                             int horizon, double gamma, const Mat& beta);

// ------------------------------------------------------------ trial drivers

/// Random actor, FQE critic on its noisy behaviour data, then the ascent
/// check on states drawn from that data (and the negated direction).
struct AscentTrialConfig {
  std::string env = "point_mass";
  double gamma = 0.9;
  FqeConfig fqe;
  int beta_states = 200;
  std::vector<double> alphas{1e-3, 1e-2, 1e-1};
  double bellman_threshold = 0.05;  ///< held-out Bellman error the critic must reach
};

struct AscentTrial {
  double bellman_error = 0.0;
  bool critic_ok = false;
  AscentReport ascent;
  AscentReport negated;
};

AscentTrial run_ascent_trial(const AscentTrialConfig& config, std::uint64_t seed);

/// Random actor, critic fit on reset states only, mismatch measured on fresh
/// reset states and their images after `horizon` true steps.
struct MismatchTrialConfig {
  std::string env = "point_mass";
  int horizon = 10;
  double gamma = 0.9;
  FqeConfig fqe{{64, 64}, 3000, 1, 0.3, 5000, 128, 1e-3, 1e-2};
  int n_states = 500;
};

struct MismatchTrial {
  double bellman_error = 0.0;
  MismatchReport report;
};

MismatchTrial run_mismatch_trial(const MismatchTrialConfig& config, std::uint64_t seed);

}  // namespace mvelab
