#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cxrnet/layers.hpp"

namespace cxrnet {

/// A function of several tensors together with its reverse-mode derivative.
/// `backward` receives the primal inputs and the output cotangent and returns
/// one gradient per input, in input order.
struct Differentiable {
  std::string name;
  std::function<TensorD(const std::vector<TensorD>&)> forward;
  std::function<std::vector<TensorD>(const std::vector<TensorD>&, const TensorD&)> backward;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  /// Coordinates probed per tensor; 0 probes every coordinate, otherwise a
  /// seeded random subsample of this size.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t coordinates_checked = 0;
};

// Compares the analytic backward against central differences of the scalar
// probe L(x) = <f(x), R> for a fixed seeded Gaussian R. The error of one
// input is max_i |analytic_i - numeric_i| / max(max_i |analytic_i|,
// max_i |numeric_i|), i.e. relative to that tensor's gradient scale; the
// result is the worst over all inputs.
GradCheckResult gradient_check(const Differentiable& op, const std::vector<TensorD>& inputs,
                               const GradCheckOptions& options = {});

// Adapters exposing each layer primitive as a Differentiable. Parameters are
// passed as trailing inputs: conv {x, weights[, bias]}, dense {x, weights[,
// bias]}, batchnorm {x, gamma, beta}, loss {logits} (labels fixed).
Differentiable conv2d_op(std::size_t stride, PadSpec pad, bool with_bias);
Differentiable dense_op(bool with_bias);
Differentiable relu_op();
Differentiable maxpool2d_op(std::size_t window, std::size_t stride, std::size_t padding = 0);
Differentiable avgpool2d_op(std::size_t window, std::size_t stride);
Differentiable global_avgpool_op();
Differentiable batchnorm_op(Mode mode, double epsilon = 1e-5);
Differentiable softmax_cross_entropy_op(const TensorD& labels);

}  // namespace cxrnet
