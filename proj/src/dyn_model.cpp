#include "mvelab/dyn_model.hpp"

#include <cmath>

#include "mvelab/errors.hpp"

namespace mvelab {

namespace {

Mat stack_inputs(const Mat& states, const Mat& actions) {
  Mat x(states.rows() + actions.rows(), states.cols());
  x.topRows(states.rows()) = states;
  x.bottomRows(actions.rows()) = actions;
  return x;
}

Mat normalize_inputs(const DynamicsModel& m, const Mat& x) {
  return (x.colwise() - m.input_mean).array().colwise() / m.input_std.array();
}

bool state_ok(const Eigen::Ref<const Vec>& s) {
  return s.allFinite() && s.norm() <= kBlowUpNorm;
}

// Mean over columns of the squared error between the network output and the
// z-scored delta; `grad` receives the parameter gradient when non-null.
double normalized_loss(const DynamicsModel& model, const Mat& inputs, const Mat& deltas, Vec* grad) {
  const auto n = static_cast<double>(inputs.cols());
  const Mat xn = normalize_inputs(model, inputs);
  const Mat yn = (deltas.colwise() - model.delta_mean).array().colwise() / model.delta_std.array();
  ForwardTrace trace;
  const Mat err = mlp_forward_batch(model.net, xn, grad ? &trace : nullptr) - yn;
  if (grad) *grad = mlp_backward_batch(model.net, trace, (2.0 / n) * err, false).param_grad;
  return err.squaredNorm() / n;
}

}  // namespace

DynamicsModel make_dynamics_model(const EnvSpec& env, const DynamicsConfig& config,
                                  std::uint64_t seed) {
  DynamicsModel m;
  m.env = env;
  std::vector<int> sizes;
  sizes.push_back(env.state_dim + env.action_dim);
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(env.state_dim);
  m.net = init_params(sizes, seed, Activation::tanh, Activation::identity);
  m.input_mean = Vec::Zero(sizes.front());
  m.input_std = Vec::Ones(sizes.front());
  m.delta_mean = Vec::Zero(env.state_dim);
  m.delta_std = Vec::Ones(env.state_dim);
  m.optimizer = make_adam(m.net.size(), config.learning_rate);
  return m;
}

DynamicsModel make_oracle_model(const EnvSpec& env) {
  DynamicsModel m;
  m.env = env;
  m.oracle = true;
  return m;
}

double fit_dynamics_inplace(DynamicsModel& model, std::span<const Transition> buffer, int steps,
                            int batch_size, Rng& rng, bool refresh_normalization) {
  require(!buffer.empty(), "fit_dynamics: empty buffer");
  if (model.oracle) return 0.0;
  require(batch_size > 0, "fit_dynamics: batch size must be positive");
  const int sd = model.env.state_dim;
  const int ad = model.env.action_dim;
  const auto n = static_cast<Eigen::Index>(buffer.size());

  if (refresh_normalization || model.trained_on == 0) {
    // Normalization statistics over the whole buffer.
    Vec in_sum = Vec::Zero(sd + ad), in_sq = Vec::Zero(sd + ad);
    Vec d_sum = Vec::Zero(sd), d_sq = Vec::Zero(sd);
    Vec x(sd + ad);
    for (const Transition& t : buffer) {
      x << t.state, t.action;
      const Vec d = t.next_state - t.state;
      in_sum += x;
      in_sq += x.cwiseProduct(x);
      d_sum += d;
      d_sq += d.cwiseProduct(d);
    }
    const double nd = static_cast<double>(n);
    model.input_mean = in_sum / nd;
    model.input_std =
        (in_sq / nd - model.input_mean.cwiseProduct(model.input_mean)).cwiseMax(0.0).cwiseSqrt().cwiseMax(kStdFloor);
    model.delta_mean = d_sum / nd;
    model.delta_std =
        (d_sq / nd - model.delta_mean.cwiseProduct(model.delta_mean)).cwiseMax(0.0).cwiseSqrt().cwiseMax(kStdFloor);
    model.trained_on = n;
  }

  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  Mat inputs(sd + ad, batch_size);
  Mat targets(sd, batch_size);
  double loss = 0.0;
  for (int step = 0; step < steps; ++step) {
    for (int j = 0; j < batch_size; ++j) {
      const Transition& t = buffer[static_cast<std::size_t>(pick(rng))];
      inputs.col(j) << t.state, t.action;
      targets.col(j) = t.next_state - t.state;
    }
    Vec grad;
    loss = normalized_loss(model, inputs, targets, &grad);
    if (!std::isfinite(loss)) throw DivergedError("dynamics model loss is not finite");
    adam_update(model.net.values, grad, model.optimizer);
  }
  return loss;
}

DynamicsModel fit_dynamics(DynamicsModel model, std::span<const Transition> buffer, int steps,
                           int batch_size, Rng& rng) {
  fit_dynamics_inplace(model, buffer, steps, batch_size, rng);
  return model;
}

Mat predict_next_batch(const DynamicsModel& model, const Mat& states, const Mat& actions) {
  require(states.rows() == model.env.state_dim && actions.rows() == model.env.action_dim &&
              states.cols() == actions.cols(),
          "predict_next: shape mismatch");
  if (model.oracle) {
    Mat next(states.rows(), states.cols());
    for (Eigen::Index j = 0; j < states.cols(); ++j) {
      next.col(j) = env_dynamics(model.env, states.col(j), clip_action(model.env, actions.col(j)));
    }
    return next;
  }
  const Mat out = mlp_forward_batch(model.net, normalize_inputs(model, stack_inputs(states, actions)));
  return states + ((out.array().colwise() * model.delta_std.array()).colwise() +
                   model.delta_mean.array())
                      .matrix();
}

Vec predict_next(const DynamicsModel& model, const Vec& state, const Vec& action) {
  return predict_next_batch(model, Mat(state), Mat(action)).col(0);
}

double one_step_mse(const DynamicsModel& model, std::span<const Transition> transitions) {
  require(!transitions.empty(), "one_step_mse: no transitions");
  double total = 0.0;
  for (const Transition& t : transitions) {
    total += (predict_next(model, t.state, t.action) - t.next_state).squaredNorm();
  }
  return total / static_cast<double>(transitions.size());
}

ImaginedRollout imagine_rollout(const DynamicsModel& model, const Policy& policy, const Vec& start,
                                int horizon) {
  require(horizon >= 0, "imagine_rollout: horizon must be non-negative");
  require(start.size() == model.env.state_dim, "imagine_rollout: start state has wrong dimension");
  ImaginedRollout r;
  r.states.push_back(start);
  r.actions.push_back(clip_action(model.env, policy(start)));
  for (int t = 0; t < horizon; ++t) {
    const Vec& s = r.states.back();
    const Vec& a = r.actions.back();
    Vec next = predict_next(model, s, a);
    if (!state_ok(next)) {
      r.truncated = true;
      break;
    }
    r.rewards.push_back(env_reward(model.env, s, a));
    r.states.push_back(std::move(next));
    r.actions.push_back(clip_action(model.env, policy(r.states.back())));
  }
  r.depth = static_cast<int>(r.rewards.size());
  return r;
}

BatchRollout imagine_batch(const DynamicsModel& model, const BatchPolicy& policy,
                           const Mat& start_states, int horizon) {
  require(horizon >= 0, "imagine_batch: horizon must be non-negative");
  const EnvSpec& env = model.env;
  const Eigen::Index B = start_states.cols();
  BatchRollout r;
  r.states.reserve(horizon + 1);
  r.actions.reserve(horizon + 1);
  r.rewards = Mat::Zero(horizon, B);
  r.depth.assign(static_cast<std::size_t>(B), horizon);
  std::vector<bool> alive(static_cast<std::size_t>(B), true);

  auto clipped = [&](Mat a) {
    for (Eigen::Index j = 0; j < B; ++j) a.col(j) = a.col(j).cwiseMax(env.action_low).cwiseMin(env.action_high);
    return a;
  };
  r.states.push_back(start_states);
  r.actions.push_back(clipped(policy(start_states)));
  for (int t = 0; t < horizon; ++t) {
    const Mat& s = r.states.back();
    const Mat& a = r.actions.back();
    for (Eigen::Index j = 0; j < B; ++j) r.rewards(t, j) = env_reward(env, s.col(j), a.col(j));
    Mat next = predict_next_batch(model, s, a);
    for (Eigen::Index j = 0; j < B; ++j) {
      if (!alive[j]) {
        next.col(j) = s.col(j);
      } else if (!state_ok(next.col(j))) {
        alive[j] = false;
        r.depth[j] = t;
        next.col(j) = s.col(j);
      }
    }
    r.states.push_back(std::move(next));
    r.actions.push_back(clipped(policy(r.states.back())));
  }
  return r;
}

std::vector<ErrorPoint> open_loop_error_curve(const DynamicsModel& model, const EnvSpec& env,
                                              const Policy& policy, int horizon, int n_starts,
                                              Rng& rng) {
  require(n_starts >= 2, "open_loop_error_curve: need at least two starts");
  require(horizon >= 1, "open_loop_error_curve: horizon must be positive");
  Mat errors = Mat::Zero(horizon, n_starts);
  for (int i = 0; i < n_starts; ++i) {
    Vec s_true = env_reset(env, rng);
    Vec s_model = s_true;
    for (int t = 0; t < horizon; ++t) {
      const Vec a_true = clip_action(env, policy(s_true));
      const Vec a_model = clip_action(env, policy(s_model));
      s_true = env_dynamics(env, s_true, a_true);
      Vec next = predict_next(model, s_model, a_model);
      if (!next.allFinite()) next = Vec::Constant(next.size(), kBlowUpNorm);
      s_model = std::move(next);
      errors(t, i) = (s_model - s_true).norm();
    }
  }
  std::vector<ErrorPoint> curve;
  for (int t = 0; t < horizon; ++t) {
    const double mean = errors.row(t).mean();
    const double var = (errors.row(t).array() - mean).square().sum() / (n_starts - 1);
    curve.push_back({t + 1, mean, std::sqrt(var)});
  }
  return curve;
}

namespace {

std::pair<Mat, Mat> stack_transitions(const DynamicsModel& model, std::span<const Transition> batch) {
  require(!batch.empty(), "dynamics_loss: empty batch");
  const int sd = model.env.state_dim, ad = model.env.action_dim;
  Mat inputs(sd + ad, static_cast<Eigen::Index>(batch.size()));
  Mat deltas(sd, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    inputs.col(static_cast<Eigen::Index>(j)) << batch[j].state, batch[j].action;
    deltas.col(static_cast<Eigen::Index>(j)) = batch[j].next_state - batch[j].state;
  }
  return {inputs, deltas};
}

}  // namespace

double dynamics_loss(const DynamicsModel& model, std::span<const Transition> batch) {
  require(!model.oracle, "dynamics_loss: oracle model has no parameters");
  const auto [x, d] = stack_transitions(model, batch);
  return normalized_loss(model, x, d, nullptr);
}

Vec dynamics_loss_grad(const DynamicsModel& model, std::span<const Transition> batch) {
  require(!model.oracle, "dynamics_loss_grad: oracle model has no parameters");
  const auto [x, d] = stack_transitions(model, batch);
  Vec g;
  normalized_loss(model, x, d, &g);
  return g;
}

}  // namespace mvelab
