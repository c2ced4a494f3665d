#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>

#include "asymvq/errors.hpp"

namespace asymvq {

/// NCHW extents. Non-image quantities use trailing unit dimensions (a K x n_z codebook is {K, n_z, 1, 1}).
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  [[nodiscard]] Eigen::Index size() const {
    return static_cast<Eigen::Index>(n) * c * h * w;
  }
  [[nodiscard]] Eigen::Index plane() const { return static_cast<Eigen::Index>(h) * w; }
  [[nodiscard]] std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w);
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense 4-D array in NCHW order backed by an Eigen column array.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(shape), data_(Array::Zero(shape.size())) {}
  Tensor(Shape shape, Scalar fill) : shape_(shape), data_(Array::Constant(shape.size(), fill)) {}
  Tensor(Shape shape, Array data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) throw ShapeError("tensor data size does not match shape " + shape.str());
  }

  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor ones(Shape s) { return Tensor(s, Scalar(1)); }

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] int n() const { return shape_.n; }
  [[nodiscard]] int c() const { return shape_.c; }
  [[nodiscard]] int h() const { return shape_.h; }
  [[nodiscard]] int w() const { return shape_.w; }
  [[nodiscard]] Eigen::Index size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.size() == 0; }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  [[nodiscard]] Eigen::Index offset(int n, int c, int h, int w) const {
    return ((static_cast<Eigen::Index>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  Scalar& operator()(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  Scalar operator()(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  /// Batch item `n` viewed as a (C, H*W) matrix.
  MatrixMap item(int n) {
    return MatrixMap(data_.data() + offset(n, 0, 0, 0), shape_.c, shape_.plane());
  }
  ConstMatrixMap item(int n) const {
    return ConstMatrixMap(data_.data() + offset(n, 0, 0, 0), shape_.c, shape_.plane());
  }

  /// Same storage, new extents; element count must agree.
  [[nodiscard]] Tensor reshaped(Shape s) const {
    if (s.size() != size()) throw ShapeError("cannot reshape " + shape_.str() + " to " + s.str());
    return Tensor(s, data_);
  }

  template <typename Other>
  [[nodiscard]] Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  [[nodiscard]] bool all_finite() const { return data_.isFinite().all(); }

 private:
  Shape shape_{0, 0, 0, 0};
  Array data_;
};

template <typename Scalar>
bool bit_equal(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (!(a.shape() == b.shape())) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (a.array()[i] != b.array()[i]) return false;
  return true;
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) throw ShapeError(std::string(what) + ": shape " + a.str() + " vs " + b.str());
}

/// FNV-1a over the raw bytes.
template <typename Scalar>
std::uint64_t checksum(const Tensor<Scalar>& t, std::uint64_t seed = 1469598103934665603ULL) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
  const auto count = static_cast<std::size_t>(t.size()) * sizeof(Scalar);
  for (std::size_t i = 0; i < count; ++i) {
    seed ^= bytes[i];
    seed *= 1099511628211ULL;
  }
  return seed;
}

}  // namespace asymvq
