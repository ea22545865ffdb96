#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cxrnet/tensor.hpp"

namespace cxrnet {

struct AdamHyper {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First and second moment estimates, one pair per parameter tensor.
template <typename Scalar>
struct AdamState {
  std::size_t step = 0;
  std::vector<Tensor<Scalar>> m;
  std::vector<Tensor<Scalar>> v;
  AdamHyper hyper;
};

template <typename Scalar>
AdamState<Scalar> adam_init(const std::vector<const Tensor<Scalar>*>& params,
                            AdamHyper hyper = {});

// One bias-corrected Adam update:
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
//   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
// `names` (optional, same length as params) label parameters in errors.
// Throws NumericFault, before touching any state, if a gradient is not finite.
template <typename Scalar>
void adam_step(const std::vector<Tensor<Scalar>*>& params,
               const std::vector<const Tensor<Scalar>*>& grads, AdamState<Scalar>& state,
               const std::vector<std::string>& names = {});

}  // namespace cxrnet
