#pragma once

// Dense-network numerical core: fully-connected MLPs with hand-written
// backpropagation and an Adam optimizer. Everything is double precision.

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <vector>

namespace mvelab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Activation { identity, tanh, relu };

/// Parameters of a fully-connected network stored as one flat vector.
///
/// Layout, layer by layer: the weight matrix (out x in, column-major)
/// followed by the bias vector. Optimizers and target averaging work on
/// `values` directly; `weight(l)` / `bias(l)` are views into it.
struct MlpParams {
  std::vector<int> layer_sizes;
  Activation hidden_activation = Activation::tanh;
  Activation output_activation = Activation::identity;
  Vec values;

  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  Eigen::Index size() const { return values.size(); }

  Eigen::Index weight_offset(int layer) const;
  Eigen::Index bias_offset(int layer) const;

  Eigen::Map<const Mat> weight(int layer) const;
  Eigen::Map<Mat> weight(int layer);
  Eigen::Map<const Vec> bias(int layer) const;
  Eigen::Map<Vec> bias(int layer);

  bool operator==(const MlpParams&) const = default;
};

/// Sum over layers of (in + 1) * out.
Eigen::Index parameter_count(const std::vector<int>& layer_sizes);

/// Zero-valued parameters with the given shape.
MlpParams zero_params(const std::vector<int>& layer_sizes,
                      Activation hidden = Activation::tanh,
                      Activation output = Activation::identity);

/// Fan-in scaled uniform init: weights ~ U(-a, a) with a = sqrt(3 / fan_in),
/// so their standard deviation is 1/sqrt(fan_in). Biases start at zero.
/// The last layer's weights are further multiplied by `final_layer_scale`.
MlpParams init_params(const std::vector<int>& layer_sizes, std::uint64_t seed,
                      Activation hidden = Activation::tanh,
                      Activation output = Activation::identity,
                      double final_layer_scale = 1.0);

/// Intermediate activations of a batched forward pass. `layers[0]` is the
/// input batch; `layers[l + 1]` is the post-activation output of layer l.
struct ForwardTrace {
  std::vector<Mat> layers;
};

Vec mlp_forward(const MlpParams& params, const Vec& input);

/// Columns of `inputs` are samples. Fills `trace` when one is supplied.
Mat mlp_forward_batch(const MlpParams& params, const Mat& inputs,
                      ForwardTrace* trace = nullptr);

struct MlpGradients {
  Vec param_grad;
  Vec input_grad;
};

/// Gradients of <output, output_grad> with respect to the flat parameters
/// and the input.
MlpGradients mlp_backward(const MlpParams& params, const Vec& input,
                          const Vec& output_grad);

struct BatchGradients {
  Vec param_grad;  ///< summed over the batch
  Mat input_grad;  ///< one column per sample; empty unless requested
};

/// Backward pass over a recorded trace. `output_grads` has one column per sample.
BatchGradients mlp_backward_batch(const MlpParams& params, const ForwardTrace& trace,
                                  const Mat& output_grads, bool want_input_grad);

struct AdamState {
  Vec first_moment;
  Vec second_moment;
  std::int64_t step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamState&) const = default;
};

AdamState make_adam(Eigen::Index n, double learning_rate);

/// In-place Adam descent step with bias correction.
/// Throws DivergedError if `grad` contains NaN or Inf.
void adam_update(Vec& params, const Vec& grad, AdamState& state);

/// Value-returning form of `adam_update`.
std::pair<Vec, AdamState> adam_step(const Vec& params, const Vec& grad, AdamState state);

/// target <- (1 - decay) * target + decay * live
void polyak_average(Vec& target, const Vec& live, double decay);

}  // namespace mvelab
