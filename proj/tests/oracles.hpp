#pragma once

// Test-only reference computations. Nothing here calls into the code paths
// it is used to check.

#include <cmath>
#include <functional>
#include <vector>

#include "mvelab/nn.hpp"

namespace oracle {

/// Straight-line forward pass over the documented flat layout: per layer a
/// column-major (out x in) weight block followed by the bias.
inline std::vector<double> forward(const mvelab::MlpParams& p, std::vector<double> x) {
  std::size_t off = 0;
  const int L = static_cast<int>(p.layer_sizes.size()) - 1;
  for (int l = 0; l < L; ++l) {
    const int in = p.layer_sizes[l];
    const int out = p.layer_sizes[l + 1];
    std::vector<double> y(out, 0.0);
    for (int i = 0; i < out; ++i) {
      double acc = 0.0;
      for (int j = 0; j < in; ++j) acc += p.values[off + j * out + i] * x[j];
      y[i] = acc + p.values[off + in * out + i];
    }
    off += (in + 1) * out;
    const auto act = (l + 1 == L) ? p.output_activation : p.hidden_activation;
    for (double& v : y) {
      if (act == mvelab::Activation::tanh) v = std::tanh(v);
      if (act == mvelab::Activation::relu) v = v > 0 ? v : 0.0;
    }
    x = std::move(y);
  }
  return x;
}

/// Central differences of a scalar function of a vector.
inline mvelab::Vec central_diff(const std::function<double(const mvelab::Vec&)>& f,
                                const mvelab::Vec& x, double h = 1e-5) {
  mvelab::Vec g(x.size());
  mvelab::Vec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + h;
    const double fp = f(xp);
    xp[i] = orig - h;
    const double fm = f(xp);
    xp[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Relative error used by the gradient checks: |a - b| / max(|a|, |b|, floor).
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_err(const mvelab::Vec& a, const mvelab::Vec& b, double floor = 1e-6) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) m = std::max(m, rel_err(a[i], b[i], floor));
  return m;
}

}  // namespace oracle
