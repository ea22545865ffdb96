#include "cxrnet/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace cxrnet {

GradCheckResult gradient_check(const Differentiable& op, const std::vector<TensorD>& inputs,
                               const GradCheckOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const TensorD out = op.forward(inputs);
  TensorD probe(out.shape());
  for (double& v : probe.values()) v = normal(rng);

  const std::vector<TensorD> analytic = op.backward(inputs, probe);
  if (analytic.size() != inputs.size()) {
    throw std::logic_error(op.name + ": backward returned " + std::to_string(analytic.size()) +
                           " gradients for " + std::to_string(inputs.size()) + " inputs");
  }
  auto objective = [&](const std::vector<TensorD>& xs) {
    const TensorD y = op.forward(xs);
    return y.vector().dot(probe.vector());
  };

  GradCheckResult result;
  std::vector<TensorD> work = inputs;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    if (analytic[t].shape() != inputs[t].shape()) {
      throw ShapeError(op.name + ": gradient " + to_string(analytic[t].shape()) + " vs input " +
                       to_string(inputs[t].shape()));
    }
    std::vector<std::size_t> coords(inputs[t].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coordinates != 0 && coords.size() > options.max_coordinates) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coordinates);
    }
    double max_diff = 0.0;
    double scale = 0.0;
    for (std::size_t i : coords) {
      const double saved = work[t][i];
      work[t][i] = saved + options.epsilon;
      const double plus = objective(work);
      work[t][i] = saved - options.epsilon;
      const double minus = objective(work);
      work[t][i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.epsilon);
      const double a = analytic[t][i];
      max_diff = std::max(max_diff, std::abs(a - numeric));
      scale = std::max({scale, std::abs(a), std::abs(numeric)});
    }
    result.coordinates_checked += coords.size();
    const double err = scale > 0.0 ? max_diff / scale : 0.0;
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_input = t;
    }
  }
  return result;
}

namespace {

LayerParamsD conv_like_params(const std::vector<TensorD>& in, bool with_bias) {
  LayerParamsD p;
  p.weights = in.at(1);
  if (with_bias) p.bias = in.at(2);
  return p;
}

}  // namespace

Differentiable conv2d_op(std::size_t stride, PadSpec pad, bool with_bias) {
  Differentiable op;
  op.name = "conv2d";
  op.forward = [=](const std::vector<TensorD>& in) {
    return conv2d(in.at(0), conv_like_params(in, with_bias), stride, pad);
  };
  op.backward = [=](const std::vector<TensorD>& in, const TensorD& g) {
    auto grads = conv2d_backward(in.at(0), conv_like_params(in, with_bias), stride, pad, g);
    std::vector<TensorD> out{std::move(grads.input), std::move(grads.params.weights)};
    if (with_bias) out.push_back(std::move(grads.params.bias));
    return out;
  };
  return op;
}

Differentiable dense_op(bool with_bias) {
  Differentiable op;
  op.name = "dense";
  op.forward = [=](const std::vector<TensorD>& in) {
    return dense(in.at(0), conv_like_params(in, with_bias));
  };
  op.backward = [=](const std::vector<TensorD>& in, const TensorD& g) {
    auto grads = dense_backward(in.at(0), conv_like_params(in, with_bias), g);
    std::vector<TensorD> out{std::move(grads.input), std::move(grads.params.weights)};
    if (with_bias) out.push_back(std::move(grads.params.bias));
    return out;
  };
  return op;
}

Differentiable relu_op() {
  Differentiable op;
  op.name = "relu";
  op.forward = [](const std::vector<TensorD>& in) { return relu(in.at(0)); };
  op.backward = [](const std::vector<TensorD>& in, const TensorD& g) {
    return std::vector<TensorD>{relu_backward(in.at(0), g)};
  };
  return op;
}

Differentiable maxpool2d_op(std::size_t window, std::size_t stride, std::size_t padding) {
  Differentiable op;
  op.name = "maxpool2d";
  op.forward = [=](const std::vector<TensorD>& in) {
    return maxpool2d(in.at(0), window, stride, padding);
  };
  op.backward = [=](const std::vector<TensorD>& in, const TensorD& g) {
    return std::vector<TensorD>{maxpool2d_backward(in.at(0), window, stride, padding, g)};
  };
  return op;
}

Differentiable avgpool2d_op(std::size_t window, std::size_t stride) {
  Differentiable op;
  op.name = "avgpool2d";
  op.forward = [=](const std::vector<TensorD>& in) { return avgpool2d(in.at(0), window, stride); };
  op.backward = [=](const std::vector<TensorD>& in, const TensorD& g) {
    return std::vector<TensorD>{avgpool2d_backward(in.at(0).shape(), window, stride, g)};
  };
  return op;
}

Differentiable global_avgpool_op() {
  Differentiable op;
  op.name = "global_avgpool";
  op.forward = [](const std::vector<TensorD>& in) { return global_avgpool(in.at(0)); };
  op.backward = [](const std::vector<TensorD>& in, const TensorD& g) {
    return std::vector<TensorD>{global_avgpool_backward(in.at(0).shape(), g)};
  };
  return op;
}

Differentiable batchnorm_op(Mode mode, double epsilon) {
  // Inference mode needs fixed running statistics; they are derived from the
  // input shape so that forward and backward agree.
  auto make_params = [=](const std::vector<TensorD>& in) {
    const std::size_t c = in.at(0).shape().back();
    auto p = LayerParamsD::batch_norm(c);
    p.gamma = in.at(1);
    p.beta = in.at(2);
    p.epsilon = epsilon;
    for (std::size_t ch = 0; ch < c; ++ch) {
      p.running_mean[ch] = 0.1 * static_cast<double>(ch);
      p.running_var[ch] = 0.5 + 0.25 * static_cast<double>(ch);
    }
    return p;
  };
  Differentiable op;
  op.name = mode == Mode::Train ? "batchnorm(train)" : "batchnorm(inference)";
  op.forward = [=](const std::vector<TensorD>& in) {
    auto p = make_params(in);
    return batchnorm(in.at(0), p, mode);
  };
  op.backward = [=](const std::vector<TensorD>& in, const TensorD& g) {
    auto p = make_params(in);
    BatchNormCacheD cache;
    batchnorm(in.at(0), p, mode, &cache);
    auto grads = batchnorm_backward(p, cache, g);
    return std::vector<TensorD>{std::move(grads.input), std::move(grads.params.gamma),
                                std::move(grads.params.beta)};
  };
  return op;
}

Differentiable softmax_cross_entropy_op(const TensorD& labels) {
  Differentiable op;
  op.name = "softmax_cross_entropy";
  op.forward = [labels](const std::vector<TensorD>& in) {
    return TensorD({1}, {softmax_cross_entropy(in.at(0), labels).loss});
  };
  op.backward = [labels](const std::vector<TensorD>& in, const TensorD& g) {
    auto result = softmax_cross_entropy(in.at(0), labels);
    return std::vector<TensorD>{std::move(result.grad_logits) * g[0]};
  };
  return op;
}

}  // namespace cxrnet
