#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/StdVector>

namespace cxrnet {

/// Raised when operand shapes are incompatible. The message names every
/// offending shape.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produces NaN or Inf.
class NumericFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape);

/// Dense row-major tensor. Images use batch x height x width x channels.
template <typename Scalar>
class Tensor {
 public:
  using value_type = Scalar;
  using Storage = std::vector<Scalar, Eigen::aligned_allocator<Scalar>>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;
  using VectorMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;
  using ConstVectorMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;

  Tensor() = default;

  explicit Tensor(Shape shape, Scalar fill = Scalar(0))
      : shape_(std::move(shape)), data_(numel(shape_), fill) {
    validate_shape();
  }

  Tensor(Shape shape, const std::vector<Scalar>& data)
      : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    validate_shape();
    if (data_.size() != numel(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
    }
  }

  Tensor(std::initializer_list<std::size_t> shape, std::initializer_list<Scalar> values)
      : Tensor(Shape(shape), std::vector<Scalar>(values)) {}

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape()); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Scalar* data() noexcept { return data_.data(); }
  const Scalar* data() const noexcept { return data_.data(); }
  std::span<Scalar> values() noexcept { return data_; }
  std::span<const Scalar> values() const noexcept { return data_; }

  Scalar& operator[](std::size_t i) noexcept { return data_[i]; }
  const Scalar& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// NHWC element access for rank-4 tensors.
  Scalar& at(std::size_t n, std::size_t h, std::size_t w, std::size_t c) {
    return data_[((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c];
  }
  const Scalar& at(std::size_t n, std::size_t h, std::size_t w, std::size_t c) const {
    return data_[((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c];
  }

  /// View as a (rows x cols) row-major matrix; rows * cols must equal size().
  MatrixMap matrix(std::size_t rows, std::size_t cols) {
    check_view(rows, cols);
    return MatrixMap(data_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }
  ConstMatrixMap matrix(std::size_t rows, std::size_t cols) const {
    check_view(rows, cols);
    return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows),
                          static_cast<Eigen::Index>(cols));
  }
  VectorMap vector() { return VectorMap(data_.data(), static_cast<Eigen::Index>(data_.size())); }
  ConstVectorMap vector() const {
    return ConstVectorMap(data_.data(), static_cast<Eigen::Index>(data_.size()));
  }

  Tensor reshaped(Shape shape) const& {
    Tensor out = *this;
    out.reshape(std::move(shape));
    return out;
  }
  Tensor reshaped(Shape shape) && {
    reshape(std::move(shape));
    return std::move(*this);
  }
  void reshape(Shape shape) {
    if (numel(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    shape_ = std::move(shape);
  }

  void fill(Scalar value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const noexcept {
    for (Scalar v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, std::vector<Other>(data_.begin(), data_.end()));
  }

  Tensor& operator+=(const Tensor& rhs) {
    require_same_shape(rhs, "+=");
    vector() += rhs.vector();
    return *this;
  }
  Tensor& operator-=(const Tensor& rhs) {
    require_same_shape(rhs, "-=");
    vector() -= rhs.vector();
    return *this;
  }
  Tensor& operator*=(Scalar s) {
    vector() *= s;
    return *this;
  }

  friend Tensor operator+(Tensor lhs, const Tensor& rhs) { return lhs += rhs; }
  friend Tensor operator-(Tensor lhs, const Tensor& rhs) { return lhs -= rhs; }
  friend Tensor operator*(Tensor lhs, Scalar s) { return lhs *= s; }
  friend Tensor operator*(Scalar s, Tensor rhs) { return rhs *= s; }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate_shape() const {
    for (std::size_t d : shape_) {
      if (d == 0) throw ShapeError("tensor shape " + to_string(shape_) + " has a zero extent");
    }
  }
  void check_view(std::size_t rows, std::size_t cols) const {
    if (rows * cols != data_.size()) {
      throw ShapeError("cannot view " + to_string(shape_) + " as " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    }
  }
  void require_same_shape(const Tensor& rhs, const char* op) const {
    if (rhs.shape_ != shape_) {
      throw ShapeError(std::string("operator") + op + ": shape " + to_string(shape_) + " vs " +
                       to_string(rhs.shape_));
    }
  }

  Shape shape_;
  // Aligned so that vectorized loops split a buffer the same way on every
  // run; otherwise the rounding of the unaligned head depends on malloc.
  Storage data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Throws NumericFault naming `what` when any entry of `t` is not finite.
template <typename Scalar>
void require_finite(const Tensor<Scalar>& t, const std::string& what) {
  if (!t.all_finite()) throw NumericFault(what + " produced a non-finite value");
}

}  // namespace cxrnet
