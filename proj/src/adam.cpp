#include "cxrnet/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace cxrnet {

template <typename Scalar>
AdamState<Scalar> adam_init(const std::vector<const Tensor<Scalar>*>& params, AdamHyper hyper) {
  AdamState<Scalar> state;
  state.hyper = hyper;
  for (const Tensor<Scalar>* p : params) {
    state.m.emplace_back(p->shape());
    state.v.emplace_back(p->shape());
  }
  return state;
}

template <typename Scalar>
void adam_step(const std::vector<Tensor<Scalar>*>& params,
               const std::vector<const Tensor<Scalar>*>& grads, AdamState<Scalar>& state,
               const std::vector<std::string>& names) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: " + std::to_string(params.size()) + " parameters, " +
                                std::to_string(grads.size()) + " gradients, " +
                                std::to_string(state.m.size()) + " moment slots");
  }
  auto label = [&](std::size_t i) {
    return i < names.size() ? names[i] : "parameter #" + std::to_string(i);
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i]->shape() != params[i]->shape() || state.m[i].shape() != params[i]->shape()) {
      throw ShapeError("adam_step: " + label(i) + " has shape " + to_string(params[i]->shape()) +
                       ", gradient " + to_string(grads[i]->shape()));
    }
    if (!grads[i]->all_finite()) {
      throw NumericFault("adam_step: non-finite gradient for " + label(i));
    }
  }

  ++state.step;
  const AdamHyper& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const auto b1 = static_cast<Scalar>(h.beta1);
  const auto b2 = static_cast<Scalar>(h.beta2);
  const auto correction1 = static_cast<Scalar>(1.0 - std::pow(h.beta1, t));
  const auto correction2 = static_cast<Scalar>(1.0 - std::pow(h.beta2, t));
  const auto lr = static_cast<Scalar>(h.learning_rate);
  const auto eps = static_cast<Scalar>(h.epsilon);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto m = state.m[i].vector().array();
    auto v = state.v[i].vector().array();
    const auto g = grads[i]->vector().array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    params[i]->vector().array() -= lr * (m / correction1) / ((v / correction2).sqrt() + eps);
  }
}

template AdamState<float> adam_init(const std::vector<const Tensor<float>*>&, AdamHyper);
template AdamState<double> adam_init(const std::vector<const Tensor<double>*>&, AdamHyper);
template void adam_step(const std::vector<Tensor<float>*>&, const std::vector<const Tensor<float>*>&,
                        AdamState<float>&, const std::vector<std::string>&);
template void adam_step(const std::vector<Tensor<double>*>&,
                        const std::vector<const Tensor<double>*>&, AdamState<double>&,
                        const std::vector<std::string>&);

}  // namespace cxrnet
