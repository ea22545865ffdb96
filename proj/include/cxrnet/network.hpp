#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cxrnet/layers.hpp"
#include "cxrnet/model_spec.hpp"

namespace cxrnet {

/// Parameters of every node of a ModelSpec, indexed by node. Nodes without
/// parameters hold an empty LayerParams.
template <typename Scalar>
struct ParamStore {
  std::vector<LayerParams<Scalar>> layers;

  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    out.layers.reserve(layers.size());
    for (const auto& l : layers) out.layers.push_back(l.template cast<Other>());
    return out;
  }
};

/// Gradients for every node, aligned with ParamStore::layers.
template <typename Scalar>
using GradStore = std::vector<ParamGrads<Scalar>>;

// Fan-in scaled normal weights (variance 2 / fan_in), zero bias and beta,
// unit gamma, running statistics (0, 1). Deterministic for a seed.
template <typename Scalar>
ParamStore<Scalar> initialize_params(const ModelSpec& spec, std::uint64_t seed);

/// Throws if `params` does not hold correctly shaped tensors for `spec`.
template <typename Scalar>
void validate_params(const ModelSpec& spec, const ParamStore<Scalar>& params);

/// Node outputs and batch-norm caches recorded by forward() for backward().
template <typename Scalar>
struct ForwardTape {
  Mode mode = Mode::Inference;
  std::vector<Tensor<Scalar>> outputs;
  std::vector<BatchNormCache<Scalar>> norm_caches;
};

// Evaluates the graph on an N x H x W x C batch and returns N x K logits.
// Train mode updates batch-norm running statistics in `params`.
template <typename Scalar>
Tensor<Scalar> forward(const ModelSpec& spec, ParamStore<Scalar>& params,
                       const Tensor<Scalar>& batch, Mode mode,
                       ForwardTape<Scalar>* tape = nullptr);

/// Inference-mode forward pass; never mutates `params`.
template <typename Scalar>
Tensor<Scalar> predict(const ModelSpec& spec, const ParamStore<Scalar>& params,
                       const Tensor<Scalar>& batch);

/// Reverse pass from d(loss)/d(logits). If `grad_input` is non-null it
/// receives the gradient with respect to the batch.
template <typename Scalar>
GradStore<Scalar> backward(const ModelSpec& spec, const ParamStore<Scalar>& params,
                           const ForwardTape<Scalar>& tape, const Tensor<Scalar>& grad_logits,
                           Tensor<Scalar>* grad_input = nullptr);

/// Trainable tensors in a fixed order (node order; weights, bias, gamma,
/// beta), each named "<node>/<member>".
template <typename Scalar>
std::vector<std::pair<std::string, Tensor<Scalar>*>> trainable_tensors(const ModelSpec& spec,
                                                                       ParamStore<Scalar>& params);
/// Gradient tensors in the same order as trainable_tensors().
template <typename Scalar>
std::vector<const Tensor<Scalar>*> gradient_tensors(const ModelSpec& spec,
                                                    const GradStore<Scalar>& grads);

}  // namespace cxrnet
