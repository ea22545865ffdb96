#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cxrnet/tensor.hpp"

namespace cxrnet {

/// Spatial zero padding for convolutions: either "same" (resolves to
/// (kernel - 1) / 2 on every side) or an explicit symmetric amount.
class PadSpec {
 public:
  static PadSpec same() { return PadSpec(true, 0); }
  static PadSpec symmetric(std::size_t amount) { return PadSpec(false, amount); }

  std::size_t resolve(std::size_t kernel) const { return same_ ? (kernel - 1) / 2 : amount_; }
  bool is_same() const noexcept { return same_; }
  std::size_t amount() const noexcept { return amount_; }

  friend bool operator==(const PadSpec&, const PadSpec&) = default;

 private:
  PadSpec(bool same, std::size_t amount) : same_(same), amount_(amount) {}
  bool same_ = false;
  std::size_t amount_ = 0;
};

enum class Mode { Train, Inference };

/// Trainable state of one layer. Unused members stay empty: a conv without
/// bias has an empty `bias`, only batch normalization fills the per-channel
/// vectors.
template <typename Scalar>
struct LayerParams {
  Tensor<Scalar> weights;
  Tensor<Scalar> bias;
  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;
  Tensor<Scalar> running_mean;
  Tensor<Scalar> running_var;
  Scalar epsilon = Scalar(1e-5);
  /// Weight of the new batch statistic in the running-average update.
  Scalar momentum = Scalar(0.1);

  bool has_bias() const noexcept { return !bias.empty(); }

  /// Per-channel batch normalization state of the given width.
  static LayerParams batch_norm(std::size_t channels) {
    LayerParams p;
    p.gamma = Tensor<Scalar>({channels}, Scalar(1));
    p.beta = Tensor<Scalar>({channels}, Scalar(0));
    p.running_mean = Tensor<Scalar>({channels}, Scalar(0));
    p.running_var = Tensor<Scalar>({channels}, Scalar(1));
    return p;
  }

  template <typename Other>
  LayerParams<Other> cast() const {
    LayerParams<Other> out;
    out.weights = weights.template cast<Other>();
    out.bias = bias.template cast<Other>();
    out.gamma = gamma.template cast<Other>();
    out.beta = beta.template cast<Other>();
    out.running_mean = running_mean.template cast<Other>();
    out.running_var = running_var.template cast<Other>();
    out.epsilon = static_cast<Other>(epsilon);
    out.momentum = static_cast<Other>(momentum);
    return out;
  }
};

/// Gradients with respect to the trainable members of LayerParams. Members
/// that the layer does not own stay empty.
template <typename Scalar>
struct ParamGrads {
  Tensor<Scalar> weights;
  Tensor<Scalar> bias;
  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;
};

using LayerParamsF = LayerParams<float>;
using LayerParamsD = LayerParams<double>;

template <typename Scalar>
struct LayerGrads {
  Tensor<Scalar> input;
  ParamGrads<Scalar> params;
};

std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride,
                               std::size_t padding);

// Convolution. Input N x H x W x Cin, weights kh x kw x Cin x Cout, optional
// bias Cout.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const LayerParams<Scalar>& params,
                      std::size_t stride, PadSpec pad);
template <typename Scalar>
LayerGrads<Scalar> conv2d_backward(const Tensor<Scalar>& input, const LayerParams<Scalar>& params,
                                   std::size_t stride, PadSpec pad,
                                   const Tensor<Scalar>& grad_out);

// Max pooling. Padded cells never win the max. Ties route the gradient to the
// first maximal element in row-major window order.
template <typename Scalar>
Tensor<Scalar> maxpool2d(const Tensor<Scalar>& input, std::size_t window, std::size_t stride,
                         std::size_t padding = 0);
template <typename Scalar>
Tensor<Scalar> maxpool2d_backward(const Tensor<Scalar>& input, std::size_t window,
                                  std::size_t stride, std::size_t padding,
                                  const Tensor<Scalar>& grad_out);

template <typename Scalar>
Tensor<Scalar> avgpool2d(const Tensor<Scalar>& input, std::size_t window, std::size_t stride);
template <typename Scalar>
Tensor<Scalar> avgpool2d_backward(const Shape& input_shape, std::size_t window,
                                  std::size_t stride, const Tensor<Scalar>& grad_out);

/// Mean over all spatial positions per channel: N x H x W x C -> N x 1 x 1 x C.
template <typename Scalar>
Tensor<Scalar> global_avgpool(const Tensor<Scalar>& input);
template <typename Scalar>
Tensor<Scalar> global_avgpool_backward(const Shape& input_shape, const Tensor<Scalar>& grad_out);

/// Values kept from a batch-norm forward pass for the backward pass.
template <typename Scalar>
struct BatchNormCache {
  Mode mode = Mode::Inference;
  Tensor<Scalar> normalized;
  std::vector<Scalar> inv_std;
};

using BatchNormCacheD = BatchNormCache<double>;

// Batch normalization over every axis except the last (channel) axis. Train
// mode normalizes with the biased batch variance and folds the unbiased
// variance into the running statistics; it needs at least two samples.
template <typename Scalar>
Tensor<Scalar> batchnorm(const Tensor<Scalar>& input, LayerParams<Scalar>& params, Mode mode,
                         BatchNormCache<Scalar>* cache = nullptr);
template <typename Scalar>
LayerGrads<Scalar> batchnorm_backward(const LayerParams<Scalar>& params,
                                      const BatchNormCache<Scalar>& cache,
                                      const Tensor<Scalar>& grad_out);

// Fully connected layer on the flattened trailing axes: N x F -> N x K with
// weights F x K and bias K.
template <typename Scalar>
Tensor<Scalar> dense(const Tensor<Scalar>& input, const LayerParams<Scalar>& params);
template <typename Scalar>
LayerGrads<Scalar> dense_backward(const Tensor<Scalar>& input, const LayerParams<Scalar>& params,
                                  const Tensor<Scalar>& grad_out);

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& input);
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& grad_out);

/// Concatenation along the last (channel) axis.
template <typename Scalar>
Tensor<Scalar> concat_channels(const std::vector<const Tensor<Scalar>*>& parts);
/// Inverse of concat_channels for gradients: slices `grad` into pieces with
/// the given channel widths.
template <typename Scalar>
std::vector<Tensor<Scalar>> split_channels(const Tensor<Scalar>& grad,
                                           const std::vector<std::size_t>& widths);

/// Row-wise softmax of an N x K tensor.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& logits);

template <typename Scalar>
struct LossAndGrad {
  double loss = 0.0;
  Tensor<Scalar> grad_logits;
};

/// Mean cross-entropy of softmax(logits) against one-hot labels, with the
/// gradient (softmax - onehot) / N.
template <typename Scalar>
LossAndGrad<Scalar> softmax_cross_entropy(const Tensor<Scalar>& logits,
                                          const Tensor<Scalar>& labels);

/// Index of the largest entry in each row of an N x K tensor.
template <typename Scalar>
std::vector<std::size_t> argmax_rows(const Tensor<Scalar>& logits);

}  // namespace cxrnet
