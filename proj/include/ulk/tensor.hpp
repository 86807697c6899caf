#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "ulk/error.hpp"

namespace ulk {

using Index = std::int64_t;

/// Ordered list of positive extents; row-major, last dim fastest.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<Index> dims) : Shape(std::vector<Index>(dims)) {}
  explicit Shape(std::vector<Index> dims) : dims_(std::move(dims)) {
    Index count = 1;
    for (Index d : dims_) {
      if (d < 1) throw ShapeError("shape extents must be >= 1, got " + to_string());
      if (count > std::numeric_limits<Index>::max() / d) throw ShapeError("shape element count overflows");
      count *= d;
    }
    numel_ = dims_.empty() ? 0 : count;
  }

  std::size_t rank() const noexcept { return dims_.size(); }
  Index numel() const noexcept { return numel_; }
  Index operator[](std::size_t i) const { return dims_.at(i); }
  const std::vector<Index>& dims() const noexcept { return dims_; }

  bool operator==(const Shape& other) const = default;

  std::string to_string() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
    os << ']';
    return os.str();
  }

 private:
  std::vector<Index> dims_;
  Index numel_ = 0;
};

/// Dense row-major tensor of Scalar values.
///
/// Owns its storage; copies are deep, so two tensors never alias. Element
/// access through operator() takes one index per dimension.
template <typename Scalar>
class Tensor {
 public:
  using value_type = Scalar;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_.numel()), Scalar(0)) {}
  Tensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<Index>(data_.size()) != shape_.numel())
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " + shape_.to_string());
  }

  static Tensor constant(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.rank(); }
  Index dim(std::size_t i) const { return shape_[i]; }
  Index size() const noexcept { return static_cast<Index>(data_.size()); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const Scalar> data() const noexcept { return data_; }
  std::span<Scalar> data() noexcept { return data_; }
  const std::vector<Scalar>& vector() const noexcept { return data_; }

  Scalar* ptr() noexcept { return data_.data(); }
  const Scalar* ptr() const noexcept { return data_.data(); }

  Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> array() { return {data_.data(), size()}; }
  Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> array() const { return {data_.data(), size()}; }

  template <typename... Idx>
  Scalar& operator()(Idx... idx) {
    return data_[static_cast<std::size_t>(offset(idx...))];
  }
  template <typename... Idx>
  const Scalar& operator()(Idx... idx) const {
    return data_[static_cast<std::size_t>(offset(idx...))];
  }

  template <typename Other>
  Tensor<Other> cast() const {
    std::vector<Other> out(data_.begin(), data_.end());
    return Tensor<Other>(shape_, std::move(out));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  template <typename... Idx>
  Index offset(Idx... idx) const {
    static_assert(sizeof...(Idx) >= 1);
    const Index indices[] = {static_cast<Index>(idx)...};
    const auto& dims = shape_.dims();
    Index off = 0;
    for (std::size_t i = 0; i < sizeof...(Idx); ++i) off = off * dims[i] + indices[i];
    return off;
  }

  Shape shape_;
  std::vector<Scalar> data_;
};

/// Reinterprets the data under a new shape; flat order is unchanged.
template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& t, Shape new_shape) {
  if (new_shape.numel() != t.shape().numel())
    throw ShapeError("cannot reshape " + t.shape().to_string() + " (" + std::to_string(t.shape().numel()) +
                     " elements) to " + new_shape.to_string() + " (" + std::to_string(new_shape.numel()) +
                     " elements)");
  return Tensor<Scalar>(std::move(new_shape), t.vector());
}

/// Centers a [C_out, C_in/g, k, k] kernel inside a target x target window.
template <typename Scalar>
Tensor<Scalar> pad2d_center(const Tensor<Scalar>& t, Index target) {
  if (t.rank() != 4) throw ShapeError("pad2d_center expects a 4-D kernel, got " + t.shape().to_string());
  const Index k = t.dim(2);
  if (t.dim(3) != k) throw ShapeError("pad2d_center expects a square kernel, got " + t.shape().to_string());
  if (k % 2 == 0 || target % 2 == 0)
    throw ConfigError("pad2d_center requires odd sizes, got k=" + std::to_string(k) + " target=" + std::to_string(target));
  if (k > target)
    throw ConfigError("kernel size " + std::to_string(k) + " exceeds target " + std::to_string(target));
  const Index off = (target - k) / 2;
  Tensor<Scalar> out(Shape{t.dim(0), t.dim(1), target, target});
  for (Index o = 0; o < t.dim(0); ++o)
    for (Index i = 0; i < t.dim(1); ++i)
      for (Index y = 0; y < k; ++y)
        for (Index x = 0; x < k; ++x) out(o, i, y + off, x + off) = t(o, i, y, x);
  return out;
}

/// Inverse of pad2d_center: extracts the central k x k window.
template <typename Scalar>
Tensor<Scalar> crop2d_center(const Tensor<Scalar>& t, Index k) {
  if (t.rank() != 4) throw ShapeError("crop2d_center expects a 4-D kernel, got " + t.shape().to_string());
  const Index size = t.dim(2);
  if (k > size || (size - k) % 2 != 0) throw ConfigError("cannot crop " + t.shape().to_string() + " to " + std::to_string(k));
  const Index off = (size - k) / 2;
  Tensor<Scalar> out(Shape{t.dim(0), t.dim(1), k, k});
  for (Index o = 0; o < t.dim(0); ++o)
    for (Index i = 0; i < t.dim(1); ++i)
      for (Index y = 0; y < k; ++y)
        for (Index x = 0; x < k; ++x) out(o, i, y, x) = t(o, i, y + off, x + off);
  return out;
}

/// Per-(batch, channel) mean over the spatial plane of a [B, C, H, W] tensor.
template <typename Scalar>
Tensor<Scalar> reduce_spatial_mean(const Tensor<Scalar>& t) {
  if (t.rank() != 4) throw ShapeError("reduce_spatial_mean expects a 4-D tensor, got " + t.shape().to_string());
  const Index planes = t.dim(0) * t.dim(1);
  const Index hw = t.dim(2) * t.dim(3);
  Tensor<Scalar> out(Shape{t.dim(0), t.dim(1)});
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> in(t.ptr(), hw, planes);
  Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(out.ptr(), planes) = in.colwise().mean();
  return out;
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) throw ShapeError("add: " + a.shape().to_string() + " vs " + b.shape().to_string());
  Tensor<Scalar> out(a.shape());
  out.array() = a.array() + b.array();
  return out;
}

template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) throw ShapeError("sub: " + a.shape().to_string() + " vs " + b.shape().to_string());
  Tensor<Scalar> out(a.shape());
  out.array() = a.array() - b.array();
  return out;
}

template <typename Scalar>
Tensor<Scalar> operator*(Scalar s, const Tensor<Scalar>& a) {
  Tensor<Scalar> out(a.shape());
  out.array() = s * a.array();
  return out;
}

/// max|a - b| / max|b|; zero when both are zero.
template <typename Scalar>
double max_relative_error(const Tensor<Scalar>& actual, const Tensor<Scalar>& expected) {
  if (actual.shape() != expected.shape())
    throw ShapeError("compare: " + actual.shape().to_string() + " vs " + expected.shape().to_string());
  if (expected.empty()) return 0.0;
  const double diff = static_cast<double>((actual.array() - expected.array()).abs().maxCoeff());
  const double scale = static_cast<double>(expected.array().abs().maxCoeff());
  if (scale == 0.0) return diff;
  return diff / scale;
}

}  // namespace ulk
