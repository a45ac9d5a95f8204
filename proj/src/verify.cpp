#include "mvelab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>

#include "mvelab/dyn_model.hpp"
#include "mvelab/errors.hpp"
#include "mvelab/value_expansion.hpp"

namespace mvelab {

namespace {

double mean(const Vec& v) { return v.size() ? v.mean() : 0.0; }

// Standard error of the mean of the entries of v.
double std_err(const Vec& v) {
  const auto n = static_cast<double>(v.size());
  if (n < 2) return 0.0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / (n - 1.0) / n);
}

// Reset-box coordinates to a state (pendulum stores an angle in the box).
Vec box_to_state(const EnvSpec& env, const Vec& box) {
  if (env.kind != EnvKind::pendulum) return box;
  Vec s(3);
  s << std::cos(box[0]), std::sin(box[0]), box[1];
  return s;
}

Vec reward_column(const EnvSpec& env, const Mat& states, const Mat& actions) {
  Vec r(states.cols());
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    r[j] = env_reward(env, states.col(j), clip_action(env, actions.col(j)));
  }
  return r;
}

Mat step_columns(const EnvSpec& env, const Mat& states, const Mat& actions) {
  Mat next(states.rows(), states.cols());
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    next.col(j) = env_dynamics(env, states.col(j), clip_action(env, actions.col(j)));
  }
  return next;
}

Mat perturbed_columns(const PerturbedModel& m, const Mat& states, const Mat& actions) {
  Mat next(states.rows(), states.cols());
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    next.col(j) = perturbed_dynamics(m, states.col(j), actions.col(j));
  }
  return next;
}

Vec column_sq_dist(const Mat& a, const Mat& b) { return (a - b).colwise().squaredNorm().transpose(); }

BoundStep make_step(std::string name, double lhs, double rhs, double margin) {
  BoundStep s{std::move(name), lhs, rhs, margin, false, false};
  s.holds = lhs <= rhs + margin;
  s.holds_exact = lhs <= rhs + 1e-10 * std::max({std::abs(lhs), std::abs(rhs), 1e-300});
  return s;
}

}  // namespace

double lipschitz_ratio(const BatchValueFn& g, const Mat& a, const Mat& b) {
  require(a.cols() == b.cols() && a.rows() == b.rows(), "lipschitz_ratio: pair shapes differ");
  const Vec ga = g(a);
  const Vec gb = g(b);
  double best = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const double d = (a.col(j) - b.col(j)).norm();
    if (d > 0.0) best = std::max(best, std::abs(ga[j] - gb[j]) / d);
  }
  return best;
}

std::pair<Mat, Mat> sample_state_pairs(const EnvSpec& env, int n_pairs, double radius, Rng& rng) {
  require(n_pairs > 0, "sample_state_pairs: need at least one pair");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Eigen::Index bd = env.init_low.size();
  const Vec width = env.init_high - env.init_low;
  auto draw_box = [&] {
    Vec b(bd);
    for (Eigen::Index i = 0; i < bd; ++i) b[i] = env.init_low[i] + width[i] * unit(rng);
    return b;
  };
  Mat a(env.state_dim, n_pairs), b(env.state_dim, n_pairs);
  for (int j = 0; j < n_pairs; ++j) {
    const Vec x = draw_box();
    Vec y;
    if (j % 2 == 0) {
      y = draw_box();
    } else {
      y = x;
      for (Eigen::Index i = 0; i < bd; ++i) y[i] += radius * width[i] * (2.0 * unit(rng) - 1.0);
    }
    a.col(j) = box_to_state(env, x);
    b.col(j) = box_to_state(env, y);
  }
  return {a, b};
}

LipschitzEstimate estimate_lipschitz(const EnvSpec& env, const BatchPolicy& policy, int n_pairs,
                                     Rng& rng, double gamma, double radius) {
  require(n_pairs >= 100, "estimate_lipschitz: n_pairs must be at least 100");
  const auto [a, b] = sample_state_pairs(env, n_pairs, radius, rng);
  const BatchValueFn reward = [&](const Mat& s) { return reward_column(env, s, policy(s)); };
  const BatchValueFn value = [&](const Mat& s) {
    return true_values_batch(env, policy, s, 1e-8, gamma);
  };
  return {lipschitz_ratio(reward, a, b), lipschitz_ratio(value, a, b)};
}

PerturbedModel make_perturbed_model(const EnvSpec& env, double scale, Rng& rng) {
  require(scale >= 0.0, "perturbation scale must be non-negative");
  std::normal_distribution<double> n(0.0, 1.0);
  PerturbedModel m;
  m.env = env;
  m.weight = Mat(env.state_dim, env.state_dim);
  m.bias = Vec(env.state_dim);
  for (auto& x : m.weight.reshaped()) x = n(rng);
  for (auto& x : m.bias) x = n(rng);
  m.scale = scale;
  return m;
}

Vec perturbed_dynamics(const PerturbedModel& model, const Vec& state, const Vec& action) {
  Vec next = env_dynamics(model.env, state, clip_action(model.env, action));
  if (model.scale != 0.0) {
    next += model.scale * (model.weight * state + model.bias).array().tanh().matrix();
  }
  return next;
}

std::vector<double> rollout_deviation(const PerturbedModel& model, const BatchPolicy& policy,
                                      const Mat& starts, int horizon) {
  require(horizon >= 0, "rollout_deviation: negative horizon");
  Mat s = starts, sh = starts;
  std::vector<double> out{0.0};
  for (int t = 0; t < horizon; ++t) {
    s = step_columns(model.env, s, policy(s));
    sh = perturbed_columns(model, sh, policy(sh));
    out.push_back(mean(column_sq_dist(sh, s)));
  }
  return out;
}

double calibrate_epsilon(PerturbedModel& model, const BatchPolicy& policy, const Mat& starts,
                         int horizon) {
  const auto dev = rollout_deviation(model, policy, starts, horizon);
  double worst = 0.0;
  for (std::size_t t = 1; t < dev.size(); ++t) worst = std::max(worst, dev[t]);
  model.epsilon = std::sqrt(worst);
  return model.epsilon;
}

void scale_to_epsilon(PerturbedModel& model, const BatchPolicy& policy, const Mat& starts,
                      int horizon, double target) {
  require(target >= 0.0, "target epsilon must be non-negative");
  if (target == 0.0 || horizon == 0) {
    model.scale = 0.0;
    calibrate_epsilon(model, policy, starts, horizon);
    return;
  }
  if (model.scale <= 0.0) model.scale = target;
  for (int it = 0; it < 6; ++it) {
    const double eps = calibrate_epsilon(model, policy, starts, horizon);
    if (eps <= 0.0) break;
    if (std::abs(eps - target) < 1e-3 * target) break;
    model.scale *= target / eps;
  }
  calibrate_epsilon(model, policy, starts, horizon);
}

bool BoundReport::all_hold() const {
  return std::all_of(steps.begin(), steps.end(), [](const BoundStep& s) { return s.holds; });
}

bool BoundReport::all_hold_exact() const {
  return std::all_of(steps.begin(), steps.end(), [](const BoundStep& s) { return s.holds_exact; });
}

BoundReport check_mve_error_decomposition(const EnvSpec& env, const PerturbedModel& model,
                                          const BatchValueFn& critic, const BatchPolicy& policy,
                                          int horizon, double gamma, const Mat& states,
                                          LipschitzEstimate lipschitz) {
  require(horizon >= 0, "check_mve_error_decomposition: negative horizon");
  require(states.cols() >= 2, "check_mve_error_decomposition: need at least two states");
  require(gamma > 0.0 && gamma < 1.0, "check_mve_error_decomposition: gamma must lie in (0, 1)");
  const Eigen::Index n = states.cols();
  const int H = horizon;

  // Paired rollouts under f and f_hat.
  std::vector<Mat> s{states}, sh{states};
  std::vector<Vec> d;      // r_hat_i - r_i
  std::vector<Vec> dist2;  // ||s_hat_i - s_i||^2, i = 0..H
  dist2.push_back(Vec::Zero(n));
  Vec m_hat = Vec::Zero(n);
  double disc = 1.0;
  for (int t = 0; t < H; ++t) {
    const Mat a = policy(s.back());
    const Mat ah = policy(sh.back());
    const Vec r = reward_column(env, s.back(), a);
    const Vec rh = reward_column(env, sh.back(), ah);
    d.push_back(rh - r);
    m_hat += disc * rh;
    disc *= gamma;
    s.push_back(step_columns(env, s.back(), a));
    sh.push_back(perturbed_columns(model, sh.back(), ah));
    dist2.push_back(column_sq_dist(sh.back(), s.back()));
  }
  const double gH = disc;

  const Vec v0 = true_values_batch(env, policy, states, 1e-8, gamma);
  const Vec vH = true_values_batch(env, policy, s.back(), 1e-8, gamma);
  const Vec vhH = true_values_batch(env, policy, sh.back(), 1e-8, gamma);
  const Vec critic_hH = critic(sh.back());

  BoundReport rep;
  rep.horizon = H;
  rep.gamma = gamma;
  rep.n_states = static_cast<int>(n);

  // Lipschitz constants cover the audited pairs.
  double Lr = lipschitz.reward;
  for (int i = 0; i < H; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (dist2[i](j) > 0.0) Lr = std::max(Lr, std::abs(d[i](j)) / std::sqrt(dist2[i](j)));
    }
  }
  const Vec b = vhH - vH;
  double LV = lipschitz.value;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (dist2[H](j) > 0.0) LV = std::max(LV, std::abs(b[j]) / std::sqrt(dist2[H](j)));
  }
  rep.lipschitz_Lr = Lr;
  rep.lipschitz_LV = LV;

  double eps2 = 0.0;
  for (int t = 1; t <= H; ++t) eps2 = std::max(eps2, mean(dist2[t]));
  const double eps = std::sqrt(eps2);
  rep.epsilon = eps;

  Vec dM = Vec::Zero(n);
  double w = 1.0;
  for (int i = 0; i < H; ++i, w *= gamma) dM += w * d[i];
  const Vec a = critic_hH - vhH;
  const Vec eH = a + b;
  const Vec D_dec = dM + gH * eH;
  const Vec D_dir = (m_hat + gH * critic_hH) - v0;

  const Vec D_dir2 = D_dir.cwiseAbs2();
  const Vec D_dec2 = D_dec.cwiseAbs2();
  const Vec dM2 = dM.cwiseAbs2();
  const Vec eH2 = eH.cwiseAbs2();
  const Vec a2 = a.cwiseAbs2();
  const Vec b2 = b.cwiseAbs2();
  rep.mse_mve = mean(D_dir2);
  rep.model_term = mean(dM2);
  rep.cross_term = 2.0 * gH * mean(dM.cwiseProduct(eH));
  rep.tail_term = mean(eH2);
  rep.mse_critic_pushforward = mean(a2);
  rep.value_shift = mean(b2);
  const double X = rep.tail_term, A = rep.mse_critic_pushforward, B = rep.value_shift;

  double geo = 0.0;
  w = 1.0;
  for (int t = 0; t < H; ++t, w *= gamma) geo += w;
  rep.c1 = Lr * geo;
  const double Y = std::sqrt(A) + LV * eps;
  rep.applicable = A >= eps2;
  if (eps > 0.0 && A > 0.0) {
    rep.c2 = ((1.0 + 2.0 * rep.c1 / gH) * Y * Y / A - 1.0) / eps;
  }

  auto& st = rep.steps;
  st.push_back(make_step("decomposition_identity", (D_dir - D_dec).cwiseAbs().maxCoeff(), 1e-6, 0.0));
  st.push_back(make_step("cauchy_schwarz", mean(D_dec2),
                         rep.model_term + 2.0 * gH * std::sqrt(rep.model_term * X) + gH * gH * X,
                         3.0 * std_err(D_dec2)));
  {
    double root_sum = 0.0;
    w = 1.0;
    for (int i = 0; i < H; ++i, w *= gamma) root_sum += w * std::sqrt(mean(d[i].cwiseAbs2()));
    st.push_back(make_step("reward_sum", rep.model_term, root_sum * root_sum, 3.0 * std_err(dM2)));
  }
  for (int i = 0; i < H; ++i) {
    const Vec di2 = d[i].cwiseAbs2();
    st.push_back(make_step("reward_lipschitz_" + std::to_string(i), mean(di2),
                           Lr * Lr * mean(dist2[i]), 3.0 * std_err(di2)));
  }
  st.push_back(make_step("model_term", rep.model_term, rep.c1 * rep.c1 * eps2, 3.0 * std_err(dM2)));
  {
    const double cap = std::min(static_cast<double>(H) * H, 1.0 / ((1.0 - gamma) * (1.0 - gamma)));
    st.push_back(make_step("c1_closed_form", rep.c1 * rep.c1, Lr * Lr * cap, 0.0));
  }
  st.push_back(make_step("tail_split", X, A + 2.0 * std::sqrt(A * B) + B, 3.0 * std_err(eH2)));
  st.push_back(make_step("value_lipschitz", B, LV * LV * eps2, 3.0 * std_err(b2)));
  const double root_margin = X > 0.0 ? 3.0 * std_err(eH2) / (2.0 * std::sqrt(X)) : 0.0;
  st.push_back(make_step("tail_root", std::sqrt(X), Y, root_margin));
  if (rep.applicable) {
    const double cross_lhs = 2.0 * gH * std::sqrt(rep.model_term * X);
    const double cross_margin =
        rep.model_term > 0.0
            ? 2.0 * gH * std::sqrt(X) * 3.0 * std_err(dM2) / (2.0 * std::sqrt(rep.model_term))
            : 0.0;
    st.push_back(make_step("cross_term", cross_lhs, 2.0 * gH * rep.c1 * Y * Y, cross_margin));
    st.push_back(make_step("final_bound", rep.mse_mve,
                           rep.c1 * rep.c1 * eps2 + (gH * gH + 2.0 * gH * rep.c1) * Y * Y,
                           3.0 * std_err(D_dir2)));
  }
  if (eps == 0.0) {
    const double lhs = mean(D_dec2);
    const double rhs = gH * gH * A;
    BoundStep s = make_step("epsilon_zero_collapse", std::abs(lhs - rhs),
                            1e-12 * std::max(rhs, 1e-300), 0.0);
    st.push_back(s);
  }
  if (H == 0) {
    st.push_back(make_step("horizon_zero_collapse", std::abs(rep.mse_mve - A), 0.0, 0.0));
  }
  return rep;
}

void write_bound_report_csv(std::ostream& out, const BoundReport& r) {
  out << std::setprecision(17);
  out << "term,name,value\n";
  out << "setting,horizon," << r.horizon << "\n";
  out << "setting,gamma," << r.gamma << "\n";
  out << "setting,n_states," << r.n_states << "\n";
  out << "quantity,mse_mve," << r.mse_mve << "\n";
  out << "quantity,mse_critic_pushforward," << r.mse_critic_pushforward << "\n";
  out << "quantity,model_term," << r.model_term << "\n";
  out << "quantity,cross_term," << r.cross_term << "\n";
  out << "quantity,tail_term," << r.tail_term << "\n";
  out << "quantity,value_shift," << r.value_shift << "\n";
  out << "constant,epsilon," << r.epsilon << "\n";
  out << "constant,c1," << r.c1 << "\n";
  out << "constant,c2," << r.c2 << "\n";
  out << "constant,lipschitz_Lr," << r.lipschitz_Lr << "\n";
  out << "constant,lipschitz_LV," << r.lipschitz_LV << "\n";
  out << "flag,applicable," << (r.applicable ? 1 : 0) << "\n";
  for (const BoundStep& s : r.steps) {
    out << "step:" << s.name << ",lhs," << s.lhs << "\n";
    out << "step:" << s.name << ",rhs," << s.rhs << "\n";
    out << "step:" << s.name << ",margin," << s.margin << "\n";
    out << "step:" << s.name << ",holds," << (s.holds ? 1 : 0) << "\n";
  }
}

void print_bound_report(std::ostream& out, const BoundReport& r) {
  out << std::setprecision(6);
  out << "H=" << r.horizon << " gamma=" << r.gamma << " n=" << r.n_states << " eps=" << r.epsilon
      << " Lr=" << r.lipschitz_Lr << " LV=" << r.lipschitz_LV << " c1=" << r.c1 << " c2=" << r.c2
      << (r.applicable ? "" : "  [inapplicable: A < eps^2]") << "\n";
  out << "  mse_mve=" << r.mse_mve << " A=" << r.mse_critic_pushforward << " model=" << r.model_term
      << " cross=" << r.cross_term << " X=" << r.tail_term << " B=" << r.value_shift << "\n";
  for (const BoundStep& s : r.steps) {
    out << "  " << (s.holds ? "ok  " : "FAIL") << " " << s.name << ": " << s.lhs << " <= " << s.rhs
        << " (+" << s.margin << ")\n";
  }
}

BoundReport run_bound_trial(const AuditTrialConfig& config, std::uint64_t seed) {
  const EnvSpec env = make_env(config.env);
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  BatchPolicy policy;
  if (env.kind == EnvKind::hillclimb) {
    const double theta = -1.0 + 3.0 * unit(rng);
    policy = [theta](const Mat& s) { return Mat::Constant(1, s.cols(), theta); };
  } else {
    require(env.kind == EnvKind::point_mass, "bound trials support hillclimb and point_mass");
    const double kp = 0.5 + 2.5 * unit(rng);
    const double kv = 0.5 + 2.5 * unit(rng);
    Vec bias(2);
    bias << 0.6 * unit(rng) - 0.3, 0.6 * unit(rng) - 0.3;
    policy = [kp, kv, bias](const Mat& s) {
      Mat a = (-kp * s.topRows(2) - kv * s.bottomRows(2)).colwise() + bias;
      return Mat(a.cwiseMax(-1.0).cwiseMin(1.0));
    };
  }

  Mat states(env.state_dim, config.n_states);
  for (int j = 0; j < config.n_states; ++j) states.col(j) = env_reset(env, rng);

  PerturbedModel model = make_perturbed_model(env, 0.0, rng);
  if (!config.oracle) {
    if (config.epsilon > 0.0) {
      scale_to_epsilon(model, policy, states, config.horizon, config.epsilon);
    } else {
      model.scale = 0.005 * std::pow(10.0, unit(rng));  // log-uniform on [0.005, 0.05]
      calibrate_epsilon(model, policy, states, config.horizon);
    }
  }

  // Critic: V^pi plus a bounded smooth error kappa (c0 + net(s)).
  const MlpParams err_net =
      init_params({env.state_dim, 16, 1}, derive_seed(seed, 7), Activation::tanh, Activation::tanh);
  const double c0 = (unit(rng) < 0.5 ? -1.0 : 1.0) * (0.5 + 0.5 * unit(rng));
  const double kappa = model.epsilon > 0.0 ? model.epsilon * (2.0 + 2.0 * unit(rng))
                                           : 0.01 + unit(rng);
  const double gamma = config.gamma;
  const BatchValueFn critic = [&, kappa, c0](const Mat& s) {
    const Vec v = true_values_batch(env, policy, s, 1e-8, gamma);
    const Vec e = mlp_forward_batch(err_net, s).row(0).transpose();
    return Vec(v + kappa * (e.array() + c0).matrix());
  };

  const LipschitzEstimate lip = estimate_lipschitz(env, policy, config.lipschitz_pairs, rng, gamma);
  return check_mve_error_decomposition(env, model, critic, policy, config.horizon, gamma, states,
                                       lip);
}

Vec oracle_identity_residuals(const EnvSpec& env, const AgentState& agent, const Mat& starts,
                              int horizon, double gamma) {
  const double g = gamma > 0.0 ? gamma : env.gamma;
  const DynamicsModel oracle = make_oracle_model(env);
  const Policy pi = [&](const Vec& s) { return policy_action(agent.target_actor, agent.scale, s); };
  const BatchPolicy pib = [&](const Mat& s) {
    return policy_batch(agent.target_actor, agent.scale, s);
  };
  const Eigen::Index n = starts.cols();
  Mat ends(starts.rows(), n);
  Vec expanded(n), tail(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const ImaginedRollout r = imagine_rollout(oracle, pi, starts.col(j), horizon);
    require(r.depth == horizon, "oracle rollout truncated");
    const auto H = static_cast<std::size_t>(horizon);
    tail[j] = q_value(agent.target_critic, r.states[H], r.actions[H]);
    expanded[j] = mve_state_value(r, tail[j], g).value;
    ends.col(j) = r.states[H];
  }
  const Vec v0 = true_values_batch(env, pib, starts, 1e-8, g);
  const Vec vH = true_values_batch(env, pib, ends, 1e-8, g);
  const double gH = std::pow(g, horizon);
  return ((expanded - v0) - gH * (tail - vH)).cwiseAbs();
}

FqeResult fit_policy_critic(const EnvSpec& env, const MlpParams& actor, const ActionScale& scale,
                            double gamma, const FqeConfig& config, std::uint64_t seed) {
  require(config.episodes >= 2 && config.episode_length >= 1 && config.steps >= 0 &&
              config.batch >= 1,
          "fit_policy_critic: bad configuration");
  Rng data_rng(derive_seed(seed, 1));
  std::normal_distribution<double> noise(0.0, config.action_sigma);
  std::vector<Transition> data;
  for (int e = 0; e < config.episodes; ++e) {
    Vec s = env_reset(env, data_rng);
    for (int t = 0; t < config.episode_length; ++t) {
      Vec a = policy_action(actor, scale, s);
      for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += noise(data_rng) * scale.half[i];
      const Transition tr = env_step(env, s, a);
      data.push_back(tr);
      s = tr.next_state;
    }
  }
  // Hold out every tenth transition for the Bellman error.
  std::vector<Transition> train, held;
  for (std::size_t i = 0; i < data.size(); ++i) (i % 10 == 9 ? held : train).push_back(data[i]);
  const TransitionBatch tb = make_batch(train);
  const Mat next_actions = policy_batch(actor, scale, tb.next_states);

  std::vector<int> sizes{env.state_dim + env.action_dim};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(1);
  MlpParams critic = init_params(sizes, derive_seed(seed, 2), Activation::tanh, Activation::identity);
  MlpParams target = critic;
  AdamState opt = make_adam(critic.size(), config.learning_rate);
  Rng batch_rng(derive_seed(seed, 3));
  std::uniform_int_distribution<Eigen::Index> pick(0, tb.size() - 1);
  Mat S(env.state_dim, config.batch), A(env.action_dim, config.batch), S2(env.state_dim, config.batch),
      A2(env.action_dim, config.batch);
  Vec R(config.batch);
  for (int step = 0; step < config.steps; ++step) {
    for (int j = 0; j < config.batch; ++j) {
      const Eigen::Index k = pick(batch_rng);
      S.col(j) = tb.states.col(k);
      A.col(j) = tb.actions.col(k);
      R[j] = tb.rewards[k];
      S2.col(j) = tb.next_states.col(k);
      A2.col(j) = next_actions.col(k);
    }
    const Vec y = R + gamma * q_batch(target, S2, A2);
    adam_update(critic.values, regression_grad(critic, S, A, y), opt);
    polyak_average(target.values, critic.values, config.decay);
  }
  const TransitionBatch hb = make_batch(held);
  const Vec y = hb.rewards + gamma * q_batch(critic, hb.next_states,
                                             policy_batch(actor, scale, hb.next_states));
  const double be = (q_batch(critic, hb.states, hb.actions) - y).squaredNorm() /
                    static_cast<double>(y.size());
  return {critic, data, be};
}

AscentReport check_ascent_direction(const EnvSpec& env, const AgentState& agent,
                                    const Mat& beta_states, const std::vector<double>& alphas,
                                    double gamma, double sign) {
  require(beta_states.cols() >= 2, "check_ascent_direction: need at least two beta states");
  require(!alphas.empty(), "check_ascent_direction: no step sizes");
  const double g = gamma > 0.0 ? gamma : env.gamma;
  TransitionBatch batch{beta_states, Mat::Zero(env.action_dim, beta_states.cols()),
                        Vec::Zero(beta_states.cols()), beta_states};
  const Vec dir = sign * actor_loss_grad(agent, batch);

  AscentReport rep;
  rep.grad_norm = dir.norm();
  rep.degenerate = rep.grad_norm == 0.0;
  const auto values = [&](const MlpParams& actor) {
    const BatchPolicy pi = [&](const Mat& s) { return policy_batch(actor, agent.scale, s); };
    return true_values_batch(env, pi, beta_states, 1e-8, g);
  };
  const Vec base = values(agent.actor);
  rep.j_base = base.mean();
  rep.alphas = alphas;
  for (double alpha : alphas) {
    MlpParams moved = agent.actor;
    moved.values += alpha * dir;
    const Vec diff = values(moved) - base;
    const double dj = diff.mean();
    const double se = std_err(diff);
    rep.delta_j.push_back(dj);
    rep.std_err.push_back(se);
    const bool up = !rep.degenerate && dj > 3.0 * se && dj > 0.0;
    rep.improved.push_back(up);
    if (up) rep.largest_improving_alpha = std::max(rep.largest_improving_alpha, alpha);
  }
  const auto smallest = std::min_element(alphas.begin(), alphas.end()) - alphas.begin();
  rep.ascends_at_smallest = rep.improved[static_cast<std::size_t>(smallest)];
  return rep;
}

CounterexampleReport check_hillclimb_counterexample(double delta, double epsilon_s,
                                                    const std::vector<double>& alphas,
                                                    double gamma) {
  require(epsilon_s > 0.0 && epsilon_s < 1.0, "epsilon_s must lie in (0, 1)");
  const EnvSpec env = make_hillclimb(delta, gamma);
  const auto policy_at = [](double theta) {
    return Policy([theta](const Vec&) { return Vec::Constant(1, theta); });
  };
  const Vec s0 = Vec::Constant(1, 0.0);
  const Vec s1 = Vec::Constant(1, 1.0 + epsilon_s);
  const double theta = 0.0;
  const double h = 1e-5;
  const auto grad_at = [&](const Vec& s) {
    const Policy pi = policy_at(theta);
    const double up = true_q_value(env, pi, s, Vec::Constant(1, theta + h), 1e-12, gamma);
    const double down = true_q_value(env, pi, s, Vec::Constant(1, theta - h), 1e-12, gamma);
    return (up - down) / (2.0 * h);  // d pi / d theta = 1
  };
  const auto J = [&](double th) {
    const Policy pi = policy_at(th);
    return 0.5 * (true_value(env, pi, s0, 1e-12, gamma) + true_value(env, pi, s1, 1e-12, gamma));
  };

  CounterexampleReport rep;
  rep.delta = delta;
  rep.epsilon_s = epsilon_s;
  rep.gamma = gamma;
  rep.g_zero = grad_at(s0);
  rep.g_far = grad_at(s1);
  rep.direction = 0.5 * (rep.g_zero + rep.g_far);
  rep.j_base = J(theta);
  rep.alphas = alphas;
  rep.all_decrease = !alphas.empty();
  for (double alpha : alphas) {
    const double dj = J(theta + alpha * rep.direction) - rep.j_base;
    rep.delta_j.push_back(dj);
    rep.all_decrease = rep.all_decrease && dj < 0.0;
  }
  rep.g_zero_vanishes = std::abs(rep.g_zero) < 1e-6;
  rep.g_far_negative = rep.g_far < 0.0;
  return rep;
}

MismatchReport measure_distribution_mismatch(const EnvSpec& env, const MlpParams& critic,
                                             const MlpParams& actor, const ActionScale& scale,
                                             int horizon, double gamma, const Mat& beta) {
  require(horizon >= 0, "measure_distribution_mismatch: negative horizon");
  require(beta.cols() >= 2, "measure_distribution_mismatch: need at least two states");
  const BatchPolicy pi = [&](const Mat& s) { return policy_batch(actor, scale, s); };
  const auto sq_err = [&](const Mat& s) {
    const Vec v_hat = q_batch(critic, s, pi(s));
    return Vec((v_hat - true_values_batch(env, pi, s, 1e-8, gamma)).cwiseAbs2());
  };
  Mat pushed = beta;
  for (int t = 0; t < horizon; ++t) pushed = step_columns(env, pushed, pi(pushed));
  const Vec e_beta = sq_err(beta);
  const Vec e_push = horizon == 0 ? e_beta : sq_err(pushed);
  MismatchReport rep;
  rep.n = static_cast<int>(beta.cols());
  rep.mse_beta = e_beta.mean();
  rep.mse_pushforward = e_push.mean();
  rep.diff_std_err = std_err(e_push - e_beta);
  return rep;
}

namespace {

AgentState random_actor_agent(const EnvSpec& env, const std::vector<int>& hidden, std::uint64_t seed) {
  AgentConfig cfg;
  cfg.hidden = hidden;
  cfg.actor_final_scale = 1.0;
  return make_agent(env, cfg, seed);
}

}  // namespace

AscentTrial run_ascent_trial(const AscentTrialConfig& config, std::uint64_t seed) {
  require(config.beta_states >= 2, "run_ascent_trial: need at least two beta states");
  const EnvSpec env = make_env(config.env);
  AgentState agent = random_actor_agent(env, config.fqe.hidden, derive_seed(seed, 21));
  const FqeResult fqe =
      fit_policy_critic(env, agent.actor, agent.scale, config.gamma, config.fqe, derive_seed(seed, 22));
  agent.critic = fqe.critic;
  agent.target_critic = fqe.critic;

  Rng rng(derive_seed(seed, 23));
  std::uniform_int_distribution<std::size_t> pick(0, fqe.data.size() - 1);
  Mat beta(env.state_dim, config.beta_states);
  for (int j = 0; j < config.beta_states; ++j) beta.col(j) = fqe.data[pick(rng)].state;

  AscentTrial t;
  t.bellman_error = fqe.bellman_error;
  t.critic_ok = fqe.bellman_error < config.bellman_threshold;
  t.ascent = check_ascent_direction(env, agent, beta, config.alphas, config.gamma, 1.0);
  t.negated = check_ascent_direction(env, agent, beta, config.alphas, config.gamma, -1.0);
  return t;
}

MismatchTrial run_mismatch_trial(const MismatchTrialConfig& config, std::uint64_t seed) {
  require(config.n_states >= 2, "run_mismatch_trial: need at least two states");
  const EnvSpec env = make_env(config.env);
  const AgentState agent = random_actor_agent(env, config.fqe.hidden, derive_seed(seed, 31));
  const FqeResult fqe =
      fit_policy_critic(env, agent.actor, agent.scale, config.gamma, config.fqe, derive_seed(seed, 32));
  Rng rng(derive_seed(seed, 33));
  Mat beta(env.state_dim, config.n_states);
  for (int j = 0; j < config.n_states; ++j) beta.col(j) = env_reset(env, rng);
  MismatchTrial t;
  t.bellman_error = fqe.bellman_error;
  t.report = measure_distribution_mismatch(env, fqe.critic, agent.actor, agent.scale,
                                           config.horizon, config.gamma, beta);
  return t;
}

}  // namespace mvelab
