#include "cxrnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cxrnet {

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  if (stride == 0) throw std::invalid_argument("stride must be >= 1");
  if (kernel > extent + 2 * padding) {
    throw ShapeError("window " + std::to_string(kernel) + " exceeds padded extent " +
                     std::to_string(extent + 2 * padding));
  }
  return (extent + 2 * padding - kernel) / stride + 1;
}

namespace {

void require_rank4(const Shape& shape, const char* op) {
  if (shape.size() != 4) {
    throw ShapeError(std::string(op) + " expects an N x H x W x C input, got " + to_string(shape));
  }
}

// Geometry shared by conv forward and backward.
struct ConvGeometry {
  std::size_t n, h, w, cin, kh, kw, cout, stride, pad, ho, wo;

  std::size_t patch() const { return kh * kw * cin; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

template <typename Scalar>
ConvGeometry conv_geometry(const Tensor<Scalar>& input, const LayerParams<Scalar>& params,
                           std::size_t stride, PadSpec pad) {
  require_rank4(input.shape(), "conv2d");
  const Shape& ws = params.weights.shape();
  if (ws.size() != 4 || ws[2] != input.dim(3)) {
    throw ShapeError("conv2d: input " + to_string(input.shape()) + " incompatible with kernel " +
                     to_string(ws));
  }
  if (params.has_bias() && params.bias.shape() != Shape{ws[3]}) {
    throw ShapeError("conv2d: bias " + to_string(params.bias.shape()) + " vs kernel " +
                     to_string(ws));
  }
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be >= 1");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), ws[0], ws[1], ws[3],
                 stride, 0, 0, 0};
  g.pad = pad.resolve(std::max(g.kh, g.kw));
  g.ho = conv_output_extent(g.h, g.kh, stride, g.pad);
  g.wo = conv_output_extent(g.w, g.kw, stride, g.pad);
  return g;
}

// Samples per GEMM chunk, bounding the im2col buffer.
std::size_t chunk_samples(const ConvGeometry& g) {
  constexpr std::size_t kTargetRows = 16384;
  return std::max<std::size_t>(1, kTargetRows / (g.ho * g.wo));
}

template <typename Scalar>
void im2col(const Tensor<Scalar>& input, const ConvGeometry& g, std::size_t first,
            std::size_t count,
            Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& cols) {
  cols.setZero(static_cast<Eigen::Index>(count * g.ho * g.wo),
               static_cast<Eigen::Index>(g.patch()));
  const Scalar* src = input.data();
  for (std::size_t n = 0; n < count; ++n) {
    for (std::size_t oy = 0; oy < g.ho; ++oy) {
      for (std::size_t ox = 0; ox < g.wo; ++ox) {
        Scalar* row = cols.data() + ((n * g.ho + oy) * g.wo + ox) * g.patch();
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            const Scalar* pix =
                src + (((first + n) * g.h + static_cast<std::size_t>(iy)) * g.w +
                       static_cast<std::size_t>(ix)) * g.cin;
            std::copy(pix, pix + g.cin, row + (ky * g.kw + kx) * g.cin);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& cols,
                const ConvGeometry& g, std::size_t first, std::size_t count,
                Tensor<Scalar>& grad_input) {
  Scalar* dst = grad_input.data();
  for (std::size_t n = 0; n < count; ++n) {
    for (std::size_t oy = 0; oy < g.ho; ++oy) {
      for (std::size_t ox = 0; ox < g.wo; ++ox) {
        const Scalar* row = cols.data() + ((n * g.ho + oy) * g.wo + ox) * g.patch();
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            Scalar* pix = dst + (((first + n) * g.h + static_cast<std::size_t>(iy)) * g.w +
                                 static_cast<std::size_t>(ix)) * g.cin;
            const Scalar* part = row + (ky * g.kw + kx) * g.cin;
            for (std::size_t c = 0; c < g.cin; ++c) pix[c] += part[c];
          }
        }
      }
    }
  }
}

void require_window(const Shape& shape, std::size_t window, std::size_t stride,
                    std::size_t padding, const char* op) {
  require_rank4(shape, op);
  if (window == 0 || stride == 0) {
    throw std::invalid_argument(std::string(op) + ": window and stride must be >= 1");
  }
  if (window > shape[1] + 2 * padding || window > shape[2] + 2 * padding) {
    throw ShapeError(std::string(op) + ": window " + std::to_string(window) +
                     " larger than input " + to_string(shape));
  }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const LayerParams<Scalar>& params,
                      std::size_t stride, PadSpec pad) {
  using Matrix = typename Tensor<Scalar>::Matrix;
  const ConvGeometry g = conv_geometry(input, params, stride, pad);
  Tensor<Scalar> out({g.n, g.ho, g.wo, g.cout});
  const auto weights = params.weights.matrix(g.patch(), g.cout);
  auto result = out.matrix(g.n * g.ho * g.wo, g.cout);
  if (g.pointwise()) {
    result.noalias() = input.matrix(g.n * g.h * g.w, g.cin) * weights;
  } else {
    Matrix cols;
    const std::size_t step = chunk_samples(g);
    for (std::size_t first = 0; first < g.n; first += step) {
      const std::size_t count = std::min(step, g.n - first);
      im2col(input, g, first, count, cols);
      result.middleRows(static_cast<Eigen::Index>(first * g.ho * g.wo), cols.rows()).noalias() =
          cols * weights;
    }
  }
  if (params.has_bias()) result.rowwise() += params.bias.vector().transpose();
  require_finite(out, "conv2d");
  return out;
}

template <typename Scalar>
LayerGrads<Scalar> conv2d_backward(const Tensor<Scalar>& input, const LayerParams<Scalar>& params,
                                   std::size_t stride, PadSpec pad,
                                   const Tensor<Scalar>& grad_out) {
  using Matrix = typename Tensor<Scalar>::Matrix;
  const ConvGeometry g = conv_geometry(input, params, stride, pad);
  if (grad_out.shape() != Shape{g.n, g.ho, g.wo, g.cout}) {
    throw ShapeError("conv2d_backward: gradient " + to_string(grad_out.shape()) +
                     " vs output " + to_string({g.n, g.ho, g.wo, g.cout}));
  }
  LayerGrads<Scalar> grads;
  grads.input = Tensor<Scalar>(input.shape());
  grads.params.weights = Tensor<Scalar>(params.weights.shape());
  const auto weights = params.weights.matrix(g.patch(), g.cout);
  auto grad_weights = grads.params.weights.matrix(g.patch(), g.cout);
  const auto gout = grad_out.matrix(g.n * g.ho * g.wo, g.cout);

  if (g.pointwise()) {
    const auto x = input.matrix(g.n * g.h * g.w, g.cin);
    grad_weights.noalias() = x.transpose() * gout;
    grads.input.matrix(g.n * g.h * g.w, g.cin).noalias() = gout * weights.transpose();
  } else {
    Matrix cols;
    Matrix grad_cols;
    const std::size_t step = chunk_samples(g);
    for (std::size_t first = 0; first < g.n; first += step) {
      const std::size_t count = std::min(step, g.n - first);
      im2col(input, g, first, count, cols);
      const auto gchunk =
          gout.middleRows(static_cast<Eigen::Index>(first * g.ho * g.wo), cols.rows());
      grad_weights.noalias() += cols.transpose() * gchunk;
      grad_cols.noalias() = gchunk * weights.transpose();
      col2im_add(grad_cols, g, first, count, grads.input);
    }
  }
  if (params.has_bias()) {
    grads.params.bias = Tensor<Scalar>({g.cout});
    grads.params.bias.vector() = gout.colwise().sum().transpose();
  }
  require_finite(grads.input, "conv2d_backward");
  require_finite(grads.params.weights, "conv2d_backward");
  return grads;
}

template <typename Scalar>
Tensor<Scalar> maxpool2d(const Tensor<Scalar>& input, std::size_t window, std::size_t stride,
                         std::size_t padding) {
  require_window(input.shape(), window, stride, padding, "maxpool2d");
  const std::size_t n = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
  const std::size_t ho = conv_output_extent(h, window, stride, padding);
  const std::size_t wo = conv_output_extent(w, window, stride, padding);
  Tensor<Scalar> out({n, ho, wo, c}, -std::numeric_limits<Scalar>::infinity());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        Scalar* dst = &out.at(b, oy, ox, 0);
        for (std::size_t ky = 0; ky < window; ++ky) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t kx = 0; kx < window; ++kx) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            const Scalar* src = &input.at(b, static_cast<std::size_t>(iy),
                                          static_cast<std::size_t>(ix), 0);
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = std::max(dst[ch], src[ch]);
          }
        }
      }
    }
  }
  require_finite(out, "maxpool2d");
  return out;
}

template <typename Scalar>
Tensor<Scalar> maxpool2d_backward(const Tensor<Scalar>& input, std::size_t window,
                                  std::size_t stride, std::size_t padding,
                                  const Tensor<Scalar>& grad_out) {
  require_window(input.shape(), window, stride, padding, "maxpool2d_backward");
  const std::size_t n = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
  const std::size_t ho = conv_output_extent(h, window, stride, padding);
  const std::size_t wo = conv_output_extent(w, window, stride, padding);
  if (grad_out.shape() != Shape{n, ho, wo, c}) {
    throw ShapeError("maxpool2d_backward: gradient " + to_string(grad_out.shape()) +
                     " vs output " + to_string({n, ho, wo, c}));
  }
  Tensor<Scalar> grad(input.shape());
  std::vector<const Scalar*> best(c);
  std::vector<std::size_t> best_index(c);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::fill(best.begin(), best.end(), nullptr);
        for (std::size_t ky = 0; ky < window; ++ky) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t kx = 0; kx < window; ++kx) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            const std::size_t offset =
                ((b * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * c;
            const Scalar* src = input.data() + offset;
            for (std::size_t ch = 0; ch < c; ++ch) {
              // Strict comparison keeps the first maximum in row-major order.
              if (best[ch] == nullptr || src[ch] > *best[ch]) {
                best[ch] = src + ch;
                best_index[ch] = offset + ch;
              }
            }
          }
        }
        const Scalar* g = &grad_out.at(b, oy, ox, 0);
        for (std::size_t ch = 0; ch < c; ++ch) grad[best_index[ch]] += g[ch];
      }
    }
  }
  return grad;
}

template <typename Scalar>
Tensor<Scalar> avgpool2d(const Tensor<Scalar>& input, std::size_t window, std::size_t stride) {
  require_window(input.shape(), window, stride, 0, "avgpool2d");
  const std::size_t n = input.dim(0), c = input.dim(3);
  const std::size_t ho = conv_output_extent(input.dim(1), window, stride, 0);
  const std::size_t wo = conv_output_extent(input.dim(2), window, stride, 0);
  const Scalar scale = Scalar(1) / static_cast<Scalar>(window * window);
  Tensor<Scalar> out({n, ho, wo, c});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        Scalar* dst = &out.at(b, oy, ox, 0);
        for (std::size_t ky = 0; ky < window; ++ky) {
          for (std::size_t kx = 0; kx < window; ++kx) {
            const Scalar* src = &input.at(b, oy * stride + ky, ox * stride + kx, 0);
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
          }
        }
        for (std::size_t ch = 0; ch < c; ++ch) dst[ch] *= scale;
      }
    }
  }
  require_finite(out, "avgpool2d");
  return out;
}

template <typename Scalar>
Tensor<Scalar> avgpool2d_backward(const Shape& input_shape, std::size_t window,
                                  std::size_t stride, const Tensor<Scalar>& grad_out) {
  require_window(input_shape, window, stride, 0, "avgpool2d_backward");
  const std::size_t n = input_shape[0], c = input_shape[3];
  const std::size_t ho = conv_output_extent(input_shape[1], window, stride, 0);
  const std::size_t wo = conv_output_extent(input_shape[2], window, stride, 0);
  if (grad_out.shape() != Shape{n, ho, wo, c}) {
    throw ShapeError("avgpool2d_backward: gradient " + to_string(grad_out.shape()) +
                     " vs output " + to_string({n, ho, wo, c}));
  }
  const Scalar scale = Scalar(1) / static_cast<Scalar>(window * window);
  Tensor<Scalar> grad(input_shape);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const Scalar* g = &grad_out.at(b, oy, ox, 0);
        for (std::size_t ky = 0; ky < window; ++ky) {
          for (std::size_t kx = 0; kx < window; ++kx) {
            Scalar* dst = &grad.at(b, oy * stride + ky, ox * stride + kx, 0);
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += g[ch] * scale;
          }
        }
      }
    }
  }
  return grad;
}

template <typename Scalar>
Tensor<Scalar> global_avgpool(const Tensor<Scalar>& input) {
  require_rank4(input.shape(), "global_avgpool");
  const std::size_t n = input.dim(0), plane = input.dim(1) * input.dim(2), c = input.dim(3);
  Tensor<Scalar> out({n, 1, 1, c});
  for (std::size_t b = 0; b < n; ++b) {
    const auto x = Eigen::Map<const typename Tensor<Scalar>::Matrix>(
        input.data() + b * plane * c, static_cast<Eigen::Index>(plane),
        static_cast<Eigen::Index>(c));
    out.matrix(n, c).row(static_cast<Eigen::Index>(b)) =
        x.colwise().sum() / static_cast<Scalar>(plane);
  }
  require_finite(out, "global_avgpool");
  return out;
}

template <typename Scalar>
Tensor<Scalar> global_avgpool_backward(const Shape& input_shape, const Tensor<Scalar>& grad_out) {
  require_rank4(input_shape, "global_avgpool_backward");
  const std::size_t n = input_shape[0], plane = input_shape[1] * input_shape[2],
                    c = input_shape[3];
  if (grad_out.size() != n * c) {
    throw ShapeError("global_avgpool_backward: gradient " + to_string(grad_out.shape()) +
                     " vs input " + to_string(input_shape));
  }
  Tensor<Scalar> grad(input_shape);
  const Scalar scale = Scalar(1) / static_cast<Scalar>(plane);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        grad[(b * plane + p) * c + ch] = grad_out[b * c + ch] * scale;
      }
    }
  }
  return grad;
}

template <typename Scalar>
Tensor<Scalar> batchnorm(const Tensor<Scalar>& input, LayerParams<Scalar>& params, Mode mode,
                         BatchNormCache<Scalar>* cache) {
  if (input.rank() < 2) {
    throw ShapeError("batchnorm expects at least rank 2, got " + to_string(input.shape()));
  }
  const std::size_t c = input.shape().back();
  const std::size_t rows = input.size() / c;
  for (const Tensor<Scalar>* v : {&params.gamma, &params.beta, &params.running_mean,
                                  &params.running_var}) {
    if (v->shape() != Shape{c}) {
      throw ShapeError("batchnorm: parameter vector " + to_string(v->shape()) +
                       " does not match input " + to_string(input.shape()));
    }
  }
  const auto x = input.matrix(rows, c);
  Eigen::Array<Scalar, 1, Eigen::Dynamic> mean(static_cast<Eigen::Index>(c));
  Eigen::Array<Scalar, 1, Eigen::Dynamic> inv_std(static_cast<Eigen::Index>(c));

  if (mode == Mode::Train) {
    if (input.dim(0) < 2) {
      throw std::invalid_argument("batchnorm: train mode needs a batch of at least 2, got " +
                                  to_string(input.shape()));
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      const auto col = x.col(static_cast<Eigen::Index>(ch)).template cast<double>();
      const double m = col.mean();
      const double var = (col.array() - m).square().sum() / static_cast<double>(rows);
      mean[static_cast<Eigen::Index>(ch)] = static_cast<Scalar>(m);
      inv_std[static_cast<Eigen::Index>(ch)] =
          static_cast<Scalar>(1.0 / std::sqrt(var + static_cast<double>(params.epsilon)));
      const double unbiased = rows > 1 ? var * static_cast<double>(rows) / (rows - 1) : var;
      params.running_mean[ch] = static_cast<Scalar>(
          (1 - params.momentum) * params.running_mean[ch] + params.momentum * m);
      params.running_var[ch] = static_cast<Scalar>(
          (1 - params.momentum) * params.running_var[ch] + params.momentum * unbiased);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      if (!(params.running_var[ch] > Scalar(0))) {
        throw NumericFault("batchnorm: running variance must be strictly positive");
      }
      mean[static_cast<Eigen::Index>(ch)] = params.running_mean[ch];
      inv_std[static_cast<Eigen::Index>(ch)] =
          Scalar(1) / std::sqrt(params.running_var[ch] + params.epsilon);
    }
  }

  Tensor<Scalar> normalized(input.shape());
  normalized.matrix(rows, c).array() = (x.array().rowwise() - mean).rowwise() * inv_std;
  Tensor<Scalar> out(input.shape());
  out.matrix(rows, c).array() =
      (normalized.matrix(rows, c).array().rowwise() * params.gamma.vector().array().transpose())
          .rowwise() +
      params.beta.vector().array().transpose();
  require_finite(out, "batchnorm");
  if (cache) {
    cache->mode = mode;
    cache->normalized = std::move(normalized);
    cache->inv_std.assign(inv_std.data(), inv_std.data() + c);
  }
  return out;
}

template <typename Scalar>
LayerGrads<Scalar> batchnorm_backward(const LayerParams<Scalar>& params,
                                      const BatchNormCache<Scalar>& cache,
                                      const Tensor<Scalar>& grad_out) {
  if (grad_out.shape() != cache.normalized.shape()) {
    throw ShapeError("batchnorm_backward: gradient " + to_string(grad_out.shape()) +
                     " vs forward " + to_string(cache.normalized.shape()));
  }
  const std::size_t c = grad_out.shape().back();
  const std::size_t rows = grad_out.size() / c;
  const auto g = grad_out.matrix(rows, c);
  const auto xhat = cache.normalized.matrix(rows, c);

  LayerGrads<Scalar> grads;
  grads.params.beta = Tensor<Scalar>({c});
  grads.params.gamma = Tensor<Scalar>({c});
  grads.params.beta.vector() = g.colwise().sum().transpose();
  grads.params.gamma.vector() = g.cwiseProduct(xhat).colwise().sum().transpose();

  grads.input = Tensor<Scalar>(grad_out.shape());
  auto gin = grads.input.matrix(rows, c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const auto j = static_cast<Eigen::Index>(ch);
    const Scalar scale = params.gamma[ch] * cache.inv_std[ch];
    if (cache.mode == Mode::Inference) {
      gin.col(j) = g.col(j) * scale;
      continue;
    }
    const Scalar mean_g = grads.params.beta[ch] / static_cast<Scalar>(rows);
    const Scalar mean_gx = grads.params.gamma[ch] / static_cast<Scalar>(rows);
    gin.col(j) = scale * (g.col(j).array() - mean_g - xhat.col(j).array() * mean_gx).matrix();
  }
  require_finite(grads.input, "batchnorm_backward");
  return grads;
}

namespace {

template <typename Scalar>
std::size_t dense_features(const Tensor<Scalar>& input, const LayerParams<Scalar>& params) {
  if (input.rank() < 2) {
    throw ShapeError("dense expects a batched input, got " + to_string(input.shape()));
  }
  const std::size_t features = input.size() / input.dim(0);
  const Shape& ws = params.weights.shape();
  if (ws.size() != 2 || ws[0] != features) {
    throw ShapeError("dense: input " + to_string(input.shape()) + " incompatible with weights " +
                     to_string(ws));
  }
  if (params.has_bias() && params.bias.shape() != Shape{ws[1]}) {
    throw ShapeError("dense: bias " + to_string(params.bias.shape()) + " vs weights " +
                     to_string(ws));
  }
  return features;
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> dense(const Tensor<Scalar>& input, const LayerParams<Scalar>& params) {
  const std::size_t features = dense_features(input, params);
  const std::size_t n = input.dim(0), k = params.weights.dim(1);
  Tensor<Scalar> out({n, k});
  auto y = out.matrix(n, k);
  y.noalias() = input.matrix(n, features) * params.weights.matrix(features, k);
  if (params.has_bias()) y.rowwise() += params.bias.vector().transpose();
  require_finite(out, "dense");
  return out;
}

template <typename Scalar>
LayerGrads<Scalar> dense_backward(const Tensor<Scalar>& input, const LayerParams<Scalar>& params,
                                  const Tensor<Scalar>& grad_out) {
  const std::size_t features = dense_features(input, params);
  const std::size_t n = input.dim(0), k = params.weights.dim(1);
  if (grad_out.shape() != Shape{n, k}) {
    throw ShapeError("dense_backward: gradient " + to_string(grad_out.shape()) + " vs output " +
                     to_string({n, k}));
  }
  const auto g = grad_out.matrix(n, k);
  LayerGrads<Scalar> grads;
  grads.input = Tensor<Scalar>(input.shape());
  grads.input.matrix(n, features).noalias() = g * params.weights.matrix(features, k).transpose();
  grads.params.weights = Tensor<Scalar>(params.weights.shape());
  grads.params.weights.matrix(features, k).noalias() = input.matrix(n, features).transpose() * g;
  if (params.has_bias()) {
    grads.params.bias = Tensor<Scalar>({k});
    grads.params.bias.vector() = g.colwise().sum().transpose();
  }
  return grads;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& input) {
  Tensor<Scalar> out(input.shape());
  out.vector() = input.vector().cwiseMax(Scalar(0));
  return out;
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& grad_out) {
  if (grad_out.shape() != input.shape()) {
    throw ShapeError("relu_backward: gradient " + to_string(grad_out.shape()) + " vs input " +
                     to_string(input.shape()));
  }
  Tensor<Scalar> grad(input.shape());
  grad.vector() =
      (input.vector().array() > Scalar(0)).select(grad_out.vector(), Scalar(0)).matrix();
  return grad;
}

template <typename Scalar>
Tensor<Scalar> concat_channels(const std::vector<const Tensor<Scalar>*>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  Shape shape = parts.front()->shape();
  const std::size_t rows = parts.front()->size() / shape.back();
  std::size_t total = 0;
  for (const auto* p : parts) {
    Shape lead(p->shape().begin(), p->shape().end() - 1);
    if (p->rank() != shape.size() || !std::equal(lead.begin(), lead.end(), shape.begin())) {
      throw ShapeError("concat_channels: " + to_string(p->shape()) + " vs " +
                       to_string(parts.front()->shape()));
    }
    total += p->shape().back();
  }
  shape.back() = total;
  Tensor<Scalar> out(shape);
  std::size_t offset = 0;
  for (const auto* p : parts) {
    const std::size_t width = p->shape().back();
    out.matrix(rows, total).middleCols(static_cast<Eigen::Index>(offset),
                                       static_cast<Eigen::Index>(width)) = p->matrix(rows, width);
    offset += width;
  }
  return out;
}

template <typename Scalar>
std::vector<Tensor<Scalar>> split_channels(const Tensor<Scalar>& grad,
                                           const std::vector<std::size_t>& widths) {
  const std::size_t total = grad.shape().back();
  const std::size_t rows = grad.size() / total;
  std::size_t sum = 0;
  for (std::size_t w : widths) sum += w;
  if (sum != total) {
    throw ShapeError("split_channels: widths sum to " + std::to_string(sum) + ", tensor is " +
                     to_string(grad.shape()));
  }
  std::vector<Tensor<Scalar>> out;
  std::size_t offset = 0;
  for (std::size_t w : widths) {
    Shape shape = grad.shape();
    shape.back() = w;
    Tensor<Scalar> part(shape);
    part.matrix(rows, w) = grad.matrix(rows, total).middleCols(static_cast<Eigen::Index>(offset),
                                                               static_cast<Eigen::Index>(w));
    offset += w;
    out.push_back(std::move(part));
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& logits) {
  if (logits.rank() != 2) {
    throw ShapeError("softmax expects N x K logits, got " + to_string(logits.shape()));
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor<Scalar> out(logits.shape());
  auto p = out.matrix(n, k);
  p = logits.matrix(n, k);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    p.row(i).array() -= p.row(i).maxCoeff();
    p.row(i) = p.row(i).array().exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return out;
}

template <typename Scalar>
LossAndGrad<Scalar> softmax_cross_entropy(const Tensor<Scalar>& logits,
                                          const Tensor<Scalar>& labels) {
  if (logits.rank() != 2 || labels.shape() != logits.shape()) {
    throw ShapeError("softmax_cross_entropy: logits " + to_string(logits.shape()) + " vs labels " +
                     to_string(labels.shape()));
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t ones = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const Scalar v = labels[i * k + j];
      if (v == Scalar(1)) {
        ++ones;
      } else if (v != Scalar(0)) {
        ones = 2;
        break;
      }
    }
    if (ones != 1) {
      throw std::invalid_argument("softmax_cross_entropy: label row " + std::to_string(i) +
                                  " is not one-hot");
    }
  }
  const auto z = logits.matrix(n, k);
  const auto y = labels.matrix(n, k);
  LossAndGrad<Scalar> result;
  result.grad_logits = softmax(logits);
  auto g = result.grad_logits.matrix(n, k);
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double top = static_cast<double>(z.row(i).maxCoeff());
    double sum = 0.0;
    for (Eigen::Index j = 0; j < z.cols(); ++j) sum += std::exp(static_cast<double>(z(i, j)) - top);
    const double log_norm = top + std::log(sum);
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      if (y(i, j) == Scalar(1)) total += log_norm - static_cast<double>(z(i, j));
    }
  }
  result.loss = total / static_cast<double>(n);
  g = (g - y) / static_cast<Scalar>(n);
  if (!std::isfinite(result.loss)) throw NumericFault("softmax_cross_entropy: non-finite loss");
  return result;
}

template <typename Scalar>
std::vector<std::size_t> argmax_rows(const Tensor<Scalar>& logits) {
  if (logits.rank() != 2) {
    throw ShapeError("argmax_rows expects N x K, got " + to_string(logits.shape()));
  }
  const auto z = logits.matrix(logits.dim(0), logits.dim(1));
  std::vector<std::size_t> out(logits.dim(0));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index best = 0;
    z.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return out;
}

#define CXRNET_INSTANTIATE_LAYERS(S)                                                              \
  template Tensor<S> conv2d(const Tensor<S>&, const LayerParams<S>&, std::size_t, PadSpec);       \
  template LayerGrads<S> conv2d_backward(const Tensor<S>&, const LayerParams<S>&, std::size_t,    \
                                         PadSpec, const Tensor<S>&);                              \
  template Tensor<S> maxpool2d(const Tensor<S>&, std::size_t, std::size_t, std::size_t);          \
  template Tensor<S> maxpool2d_backward(const Tensor<S>&, std::size_t, std::size_t, std::size_t,  \
                                        const Tensor<S>&);                                        \
  template Tensor<S> avgpool2d(const Tensor<S>&, std::size_t, std::size_t);                       \
  template Tensor<S> avgpool2d_backward(const Shape&, std::size_t, std::size_t,                   \
                                        const Tensor<S>&);                                        \
  template Tensor<S> global_avgpool(const Tensor<S>&);                                            \
  template Tensor<S> global_avgpool_backward(const Shape&, const Tensor<S>&);                     \
  template Tensor<S> batchnorm(const Tensor<S>&, LayerParams<S>&, Mode, BatchNormCache<S>*);      \
  template LayerGrads<S> batchnorm_backward(const LayerParams<S>&, const BatchNormCache<S>&,      \
                                            const Tensor<S>&);                                    \
  template Tensor<S> dense(const Tensor<S>&, const LayerParams<S>&);                              \
  template LayerGrads<S> dense_backward(const Tensor<S>&, const LayerParams<S>&,                  \
                                        const Tensor<S>&);                                        \
  template Tensor<S> relu(const Tensor<S>&);                                                      \
  template Tensor<S> relu_backward(const Tensor<S>&, const Tensor<S>&);                           \
  template Tensor<S> concat_channels(const std::vector<const Tensor<S>*>&);                       \
  template std::vector<Tensor<S>> split_channels(const Tensor<S>&,                                \
                                                 const std::vector<std::size_t>&);                \
  template Tensor<S> softmax(const Tensor<S>&);                                                   \
  template LossAndGrad<S> softmax_cross_entropy(const Tensor<S>&, const Tensor<S>&);              \
  template std::vector<std::size_t> argmax_rows(const Tensor<S>&);

CXRNET_INSTANTIATE_LAYERS(float)
CXRNET_INSTANTIATE_LAYERS(double)

}  // namespace cxrnet
