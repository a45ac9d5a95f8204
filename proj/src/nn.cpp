#include "mvelab/nn.hpp"

#include <cmath>
#include <string>

#include "mvelab/errors.hpp"
#include "mvelab/rng.hpp"

namespace mvelab {

namespace {

void apply_activation(Activation act, Mat& z) {
  switch (act) {
    case Activation::identity:
      break;
    case Activation::tanh:
      // Eigen's double tanh is scalar; this form vectorizes through exp.
      z = 1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0);
      break;
    case Activation::relu:
      z = z.array().max(0.0);
      break;
  }
}

// Multiplies `grad` in place by the activation derivative, expressed through
// the post-activation output `out`.
void apply_activation_derivative(Activation act, const Mat& out, Mat& grad) {
  switch (act) {
    case Activation::identity:
      break;
    case Activation::tanh:
      grad.array() *= 1.0 - out.array().square();
      break;
    case Activation::relu:
      grad.array() *= (out.array() > 0.0).cast<double>();
      break;
  }
}

void check_shape(const MlpParams& params) {
  require(params.layer_sizes.size() >= 2, "MLP needs at least two layer sizes");
  require(params.values.size() == parameter_count(params.layer_sizes),
          "MLP parameter vector does not match its layer sizes");
}

}  // namespace

Eigen::Index parameter_count(const std::vector<int>& layer_sizes) {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    n += static_cast<Eigen::Index>(layer_sizes[l] + 1) * layer_sizes[l + 1];
  }
  return n;
}

Eigen::Index MlpParams::weight_offset(int layer) const {
  Eigen::Index off = 0;
  for (int l = 0; l < layer; ++l) {
    off += static_cast<Eigen::Index>(layer_sizes[l] + 1) * layer_sizes[l + 1];
  }
  return off;
}

Eigen::Index MlpParams::bias_offset(int layer) const {
  return weight_offset(layer) + static_cast<Eigen::Index>(layer_sizes[layer]) * layer_sizes[layer + 1];
}

Eigen::Map<const Mat> MlpParams::weight(int layer) const {
  return {values.data() + weight_offset(layer), layer_sizes[layer + 1], layer_sizes[layer]};
}

Eigen::Map<Mat> MlpParams::weight(int layer) {
  return {values.data() + weight_offset(layer), layer_sizes[layer + 1], layer_sizes[layer]};
}

Eigen::Map<const Vec> MlpParams::bias(int layer) const {
  return {values.data() + bias_offset(layer), layer_sizes[layer + 1]};
}

Eigen::Map<Vec> MlpParams::bias(int layer) {
  return {values.data() + bias_offset(layer), layer_sizes[layer + 1]};
}

MlpParams zero_params(const std::vector<int>& layer_sizes, Activation hidden, Activation output) {
  require(layer_sizes.size() >= 2, "MLP needs at least two layer sizes");
  for (int s : layer_sizes) require(s > 0, "layer sizes must be positive");
  MlpParams p;
  p.layer_sizes = layer_sizes;
  p.hidden_activation = hidden;
  p.output_activation = output;
  p.values = Vec::Zero(parameter_count(layer_sizes));
  return p;
}

MlpParams init_params(const std::vector<int>& layer_sizes, std::uint64_t seed, Activation hidden,
                      Activation output, double final_layer_scale) {
  MlpParams p = zero_params(layer_sizes, hidden, output);
  Rng rng(seed);
  for (int l = 0; l < p.num_layers(); ++l) {
    const double bound = std::sqrt(3.0 / layer_sizes[l]);
    const double scale = (l + 1 == p.num_layers()) ? final_layer_scale : 1.0;
    std::uniform_real_distribution<double> unif(-bound, bound);
    auto w = p.weight(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = scale * unif(rng);
    }
  }
  return p;
}

Mat mlp_forward_batch(const MlpParams& params, const Mat& inputs, ForwardTrace* trace) {
  check_shape(params);
  require(inputs.rows() == params.input_dim(),
          "MLP input has " + std::to_string(inputs.rows()) + " rows, expected " +
              std::to_string(params.input_dim()));
  require(inputs.allFinite(), "MLP input contains non-finite values");
  if (trace) {
    trace->layers.resize(params.num_layers() + 1);
    trace->layers[0] = inputs;
  }
  Mat h = inputs;
  for (int l = 0; l < params.num_layers(); ++l) {
    Mat z = params.weight(l) * h;
    z.colwise() += params.bias(l);
    const bool last = l + 1 == params.num_layers();
    apply_activation(last ? params.output_activation : params.hidden_activation, z);
    h = std::move(z);
    if (trace) trace->layers[l + 1] = h;
  }
  return h;
}

Vec mlp_forward(const MlpParams& params, const Vec& input) {
  return mlp_forward_batch(params, Mat(input)).col(0);
}

BatchGradients mlp_backward_batch(const MlpParams& params, const ForwardTrace& trace,
                                  const Mat& output_grads, bool want_input_grad) {
  check_shape(params);
  const int L = params.num_layers();
  require(static_cast<int>(trace.layers.size()) == L + 1, "forward trace does not match network");
  require(output_grads.rows() == params.output_dim() &&
              output_grads.cols() == trace.layers[0].cols(),
          "output gradient shape does not match forward trace");

  BatchGradients out;
  out.param_grad = Vec::Zero(params.size());
  Mat delta = output_grads;
  apply_activation_derivative(params.output_activation, trace.layers[L], delta);
  for (int l = L - 1; l >= 0; --l) {
    const Mat& a_in = trace.layers[l];
    Eigen::Map<Mat> dw(out.param_grad.data() + params.weight_offset(l), params.layer_sizes[l + 1],
                       params.layer_sizes[l]);
    dw.noalias() = delta * a_in.transpose();
    out.param_grad.segment(params.bias_offset(l), params.layer_sizes[l + 1]) =
        delta.rowwise().sum();
    if (l > 0 || want_input_grad) {
      Mat prev = params.weight(l).transpose() * delta;
      if (l > 0) apply_activation_derivative(params.hidden_activation, a_in, prev);
      delta = std::move(prev);
    }
  }
  if (want_input_grad) out.input_grad = std::move(delta);
  return out;
}

MlpGradients mlp_backward(const MlpParams& params, const Vec& input, const Vec& output_grad) {
  ForwardTrace trace;
  mlp_forward_batch(params, Mat(input), &trace);
  require(output_grad.size() == params.output_dim(), "output gradient has wrong length");
  BatchGradients g = mlp_backward_batch(params, trace, Mat(output_grad), true);
  return {std::move(g.param_grad), g.input_grad.col(0)};
}

AdamState make_adam(Eigen::Index n, double learning_rate) {
  require(learning_rate > 0.0, "learning rate must be positive");
  AdamState s;
  s.first_moment = Vec::Zero(n);
  s.second_moment = Vec::Zero(n);
  s.learning_rate = learning_rate;
  return s;
}

void adam_update(Vec& params, const Vec& grad, AdamState& state) {
  require(params.size() == grad.size() && grad.size() == state.first_moment.size() &&
              grad.size() == state.second_moment.size(),
          "Adam: parameter, gradient and moment lengths differ");
  if (!grad.allFinite()) throw DivergedError("Adam: non-finite gradient");
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad;
  state.second_moment =
      state.beta2 * state.second_moment + (1.0 - state.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  params.array() -= state.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

std::pair<Vec, AdamState> adam_step(const Vec& params, const Vec& grad, AdamState state) {
  Vec p = params;
  adam_update(p, grad, state);
  return {std::move(p), std::move(state)};
}

void polyak_average(Vec& target, const Vec& live, double decay) {
  require(target.size() == live.size(), "target/live parameter lengths differ");
  target = (1.0 - decay) * target + decay * live;
}

}  // namespace mvelab
