#include "cxrnet/network.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace cxrnet {

namespace {

std::size_t in_channels(const ModelSpec& spec, const LayerNode& node) {
  return spec.layer(node.inputs.front()).output_shape.back();
}

Shape expected_weight_shape(const ModelSpec& spec, const LayerNode& node) {
  if (node.kind == LayerKind::Conv) {
    return {node.kernel, node.kernel, in_channels(spec, node), node.filters};
  }
  return {numel(spec.layer(node.inputs.front()).output_shape), node.filters};
}

template <typename Scalar>
Tensor<Scalar> he_normal(const Shape& shape, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor<Scalar> t(shape);
  for (Scalar& v : t.values()) v = static_cast<Scalar>(normal(rng));
  return t;
}

}  // namespace

template <typename Scalar>
ParamStore<Scalar> initialize_params(const ModelSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamStore<Scalar> store;
  store.layers.resize(spec.layers().size());
  for (std::size_t i = 0; i < spec.layers().size(); ++i) {
    const LayerNode& node = spec.layer(i);
    auto& p = store.layers[i];
    switch (node.kind) {
      case LayerKind::Conv:
      case LayerKind::Dense: {
        const Shape ws = expected_weight_shape(spec, node);
        p.weights = he_normal<Scalar>(ws, numel(ws) / ws.back(), rng);
        if (node.use_bias) p.bias = Tensor<Scalar>({node.filters});
        break;
      }
      case LayerKind::BatchNorm:
        p = LayerParams<Scalar>::batch_norm(node.output_shape.back());
        break;
      default: break;
    }
  }
  return store;
}

template <typename Scalar>
void validate_params(const ModelSpec& spec, const ParamStore<Scalar>& params) {
  if (params.layers.size() != spec.layers().size()) {
    throw std::invalid_argument("parameter store has " + std::to_string(params.layers.size()) +
                                " layers, model '" + spec.name() + "' has " +
                                std::to_string(spec.layers().size()));
  }
  for (std::size_t i = 0; i < spec.layers().size(); ++i) {
    const LayerNode& node = spec.layer(i);
    const auto& p = params.layers[i];
    auto fail = [&](const std::string& what) {
      throw std::invalid_argument("layer '" + node.name + "': " + what);
    };
    switch (node.kind) {
      case LayerKind::Conv:
      case LayerKind::Dense:
        if (p.weights.empty()) fail("uninitialized weights");
        if (p.weights.shape() != expected_weight_shape(spec, node)) {
          fail("weights " + to_string(p.weights.shape()) + ", expected " +
               to_string(expected_weight_shape(spec, node)));
        }
        if (node.use_bias != p.has_bias()) fail("bias presence mismatch");
        break;
      case LayerKind::BatchNorm: {
        const Shape c{node.output_shape.back()};
        if (p.gamma.shape() != c || p.beta.shape() != c || p.running_mean.shape() != c ||
            p.running_var.shape() != c) {
          fail("uninitialized or misshapen batch-norm state");
        }
        break;
      }
      default: break;
    }
  }
}

template <typename Scalar>
Tensor<Scalar> forward(const ModelSpec& spec, ParamStore<Scalar>& params,
                       const Tensor<Scalar>& batch, Mode mode, ForwardTape<Scalar>* tape) {
  validate_params(spec, params);
  const InputShape& in = spec.input_shape();
  if (batch.rank() != 4 || batch.dim(1) != in.height || batch.dim(2) != in.width ||
      batch.dim(3) != in.channels) {
    throw ShapeError("batch " + to_string(batch.shape()) + " does not match model input " +
                     to_string({in.height, in.width, in.channels}));
  }
  const auto& nodes = spec.layers();
  std::vector<std::size_t> last_use(nodes.size(), 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t from : nodes[i].inputs) last_use[from] = i;
  }

  std::vector<Tensor<Scalar>> outputs(nodes.size());
  std::vector<BatchNormCache<Scalar>> caches(tape ? nodes.size() : 0);
  outputs[0] = batch;
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    const LayerNode& node = nodes[i];
    const Tensor<Scalar>& x = outputs[node.inputs.front()];
    auto& p = params.layers[i];
    switch (node.kind) {
      case LayerKind::Conv:
        outputs[i] = conv2d(x, p, node.stride, PadSpec::symmetric(node.padding));
        break;
      case LayerKind::BatchNorm:
        outputs[i] = batchnorm(x, p, mode, tape ? &caches[i] : nullptr);
        break;
      case LayerKind::Relu: outputs[i] = relu(x); break;
      case LayerKind::MaxPool:
        outputs[i] = maxpool2d(x, node.kernel, node.stride, node.padding);
        break;
      case LayerKind::AvgPool: outputs[i] = avgpool2d(x, node.kernel, node.stride); break;
      case LayerKind::GlobalAvgPool: outputs[i] = global_avgpool(x); break;
      case LayerKind::Dense: outputs[i] = dense(x, p); break;
      case LayerKind::Add: {
        Tensor<Scalar> sum = x;
        for (std::size_t k = 1; k < node.inputs.size(); ++k) sum += outputs[node.inputs[k]];
        outputs[i] = std::move(sum);
        break;
      }
      case LayerKind::Concat: {
        std::vector<const Tensor<Scalar>*> parts;
        for (std::size_t from : node.inputs) parts.push_back(&outputs[from]);
        outputs[i] = concat_channels(parts);
        break;
      }
      case LayerKind::Input: throw std::logic_error("input node inside graph");
    }
    if (!tape) {
      for (std::size_t from : node.inputs) {
        if (last_use[from] == i) outputs[from] = Tensor<Scalar>();
      }
    }
  }
  Tensor<Scalar> logits = outputs.back();
  if (tape) {
    tape->mode = mode;
    tape->outputs = std::move(outputs);
    tape->norm_caches = std::move(caches);
  }
  return logits;
}

template <typename Scalar>
Tensor<Scalar> predict(const ModelSpec& spec, const ParamStore<Scalar>& params,
                       const Tensor<Scalar>& batch) {
  // Inference mode reads but never writes the parameter store.
  return forward(spec, const_cast<ParamStore<Scalar>&>(params), batch, Mode::Inference);
}

template <typename Scalar>
GradStore<Scalar> backward(const ModelSpec& spec, const ParamStore<Scalar>& params,
                           const ForwardTape<Scalar>& tape, const Tensor<Scalar>& grad_logits,
                           Tensor<Scalar>* grad_input) {
  const auto& nodes = spec.layers();
  if (tape.outputs.size() != nodes.size()) {
    throw std::invalid_argument("backward: tape does not belong to model '" + spec.name() + "'");
  }
  if (grad_logits.shape() != tape.outputs.back().shape()) {
    throw ShapeError("backward: gradient " + to_string(grad_logits.shape()) + " vs logits " +
                     to_string(tape.outputs.back().shape()));
  }
  GradStore<Scalar> grads(nodes.size());
  std::vector<Tensor<Scalar>> upstream(nodes.size());
  upstream.back() = grad_logits;

  auto accumulate = [&](std::size_t node, Tensor<Scalar> g) {
    if (upstream[node].empty()) {
      upstream[node] = std::move(g);
    } else {
      upstream[node] += g;
    }
  };

  for (std::size_t i = nodes.size() - 1; i >= 1; --i) {
    if (upstream[i].empty()) continue;
    const LayerNode& node = nodes[i];
    const Tensor<Scalar> g = std::move(upstream[i]);
    const std::size_t from = node.inputs.front();
    const Tensor<Scalar>& x = tape.outputs[from];
    const auto& p = params.layers[i];
    switch (node.kind) {
      case LayerKind::Conv: {
        auto lg = conv2d_backward(x, p, node.stride, PadSpec::symmetric(node.padding), g);
        grads[i] = std::move(lg.params);
        accumulate(from, std::move(lg.input));
        break;
      }
      case LayerKind::BatchNorm: {
        auto lg = batchnorm_backward(p, tape.norm_caches[i], g);
        grads[i] = std::move(lg.params);
        accumulate(from, std::move(lg.input));
        break;
      }
      case LayerKind::Relu: accumulate(from, relu_backward(x, g)); break;
      case LayerKind::MaxPool:
        accumulate(from, maxpool2d_backward(x, node.kernel, node.stride, node.padding, g));
        break;
      case LayerKind::AvgPool:
        accumulate(from, avgpool2d_backward(x.shape(), node.kernel, node.stride, g));
        break;
      case LayerKind::GlobalAvgPool:
        accumulate(from, global_avgpool_backward(x.shape(), g));
        break;
      case LayerKind::Dense: {
        auto lg = dense_backward(x, p, g);
        grads[i] = std::move(lg.params);
        accumulate(from, std::move(lg.input));
        break;
      }
      case LayerKind::Add:
        for (std::size_t k : node.inputs) accumulate(k, g);
        break;
      case LayerKind::Concat: {
        std::vector<std::size_t> widths;
        for (std::size_t k : node.inputs) widths.push_back(tape.outputs[k].shape().back());
        auto parts = split_channels(g, widths);
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
          accumulate(node.inputs[k], std::move(parts[k]));
        }
        break;
      }
      case LayerKind::Input: break;
    }
  }
  if (grad_input) *grad_input = std::move(upstream[0]);
  return grads;
}

template <typename Scalar>
std::vector<std::pair<std::string, Tensor<Scalar>*>> trainable_tensors(
    const ModelSpec& spec, ParamStore<Scalar>& params) {
  validate_params(spec, params);
  std::vector<std::pair<std::string, Tensor<Scalar>*>> out;
  for (std::size_t i = 0; i < spec.layers().size(); ++i) {
    auto& p = params.layers[i];
    const std::string& name = spec.layer(i).name;
    if (!p.weights.empty()) out.emplace_back(name + "/weights", &p.weights);
    if (!p.bias.empty()) out.emplace_back(name + "/bias", &p.bias);
    if (!p.gamma.empty()) out.emplace_back(name + "/gamma", &p.gamma);
    if (!p.beta.empty()) out.emplace_back(name + "/beta", &p.beta);
  }
  return out;
}

template <typename Scalar>
std::vector<const Tensor<Scalar>*> gradient_tensors(const ModelSpec& spec,
                                                    const GradStore<Scalar>& grads) {
  if (grads.size() != spec.layers().size()) {
    throw std::invalid_argument("gradient store does not match model '" + spec.name() + "'");
  }
  std::vector<const Tensor<Scalar>*> out;
  for (std::size_t i = 0; i < spec.layers().size(); ++i) {
    const LayerNode& node = spec.layer(i);
    const auto& g = grads[i];
    auto need = [&](const Tensor<Scalar>& t, const char* what) -> const Tensor<Scalar>* {
      if (t.empty()) {
        throw std::invalid_argument("missing gradient for " + node.name + "/" + what);
      }
      return &t;
    };
    switch (node.kind) {
      case LayerKind::Conv:
      case LayerKind::Dense:
        out.push_back(need(g.weights, "weights"));
        if (node.use_bias) out.push_back(need(g.bias, "bias"));
        break;
      case LayerKind::BatchNorm:
        out.push_back(need(g.gamma, "gamma"));
        out.push_back(need(g.beta, "beta"));
        break;
      default: break;
    }
  }
  return out;
}

#define CXRNET_INSTANTIATE_NETWORK(S)                                                            \
  template ParamStore<S> initialize_params<S>(const ModelSpec&, std::uint64_t);                  \
  template void validate_params(const ModelSpec&, const ParamStore<S>&);                         \
  template Tensor<S> forward(const ModelSpec&, ParamStore<S>&, const Tensor<S>&, Mode,           \
                             ForwardTape<S>*);                                                   \
  template Tensor<S> predict(const ModelSpec&, const ParamStore<S>&, const Tensor<S>&);          \
  template GradStore<S> backward(const ModelSpec&, const ParamStore<S>&, const ForwardTape<S>&,  \
                                 const Tensor<S>&, Tensor<S>*);                                  \
  template std::vector<std::pair<std::string, Tensor<S>*>> trainable_tensors(const ModelSpec&,   \
                                                                             ParamStore<S>&);    \
  template std::vector<const Tensor<S>*> gradient_tensors(const ModelSpec&, const GradStore<S>&);

CXRNET_INSTANTIATE_NETWORK(float)
CXRNET_INSTANTIATE_NETWORK(double)

}  // namespace cxrnet
