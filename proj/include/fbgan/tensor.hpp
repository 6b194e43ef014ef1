#pragma once

#include "fbgan/error.hpp"

#include <Eigen/Core>

#include <array>
#include <string>

namespace fbgan {

using Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

struct Shape4 {
  Index n = 0, c = 0, h = 0, w = 0;
  Index numel() const { return n * c * h * w; }
  friend bool operator==(const Shape4&, const Shape4&) = default;
};

inline std::string to_string(const Shape4& s) {
  return std::to_string(s.n) + "x" + std::to_string(s.c) + "x" + std::to_string(s.h) + "x" +
         std::to_string(s.w);
}

/// Dense NCHW batch backed by one contiguous Eigen vector. Each (n, c) plane
/// is contiguous and row-major, and each sample is a row-major C×(H·W) block.
template <typename Scalar>
class Tensor {
 public:
  using Storage = VectorX<Scalar>;
  using SampleMap = Eigen::Map<RowMatrixX<Scalar>>;
  using ConstSampleMap = Eigen::Map<const RowMatrixX<Scalar>>;
  using PlaneMap = Eigen::Map<RowMatrixX<Scalar>>;
  using ConstPlaneMap = Eigen::Map<const RowMatrixX<Scalar>>;

  Tensor() = default;
  explicit Tensor(Shape4 s) : shape_(s), data_(Storage::Zero(s.numel())) {}
  Tensor(Index n, Index c, Index h, Index w) : Tensor(Shape4{n, c, h, w}) {}
  Tensor(Shape4 s, Scalar value) : shape_(s), data_(Storage::Constant(s.numel(), value)) {}

  const Shape4& shape() const { return shape_; }
  Index batch() const { return shape_.n; }
  Index channels() const { return shape_.c; }
  Index rows() const { return shape_.h; }
  Index cols() const { return shape_.w; }
  Index plane_size() const { return shape_.h * shape_.w; }
  Index sample_size() const { return shape_.c * plane_size(); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Storage& data() { return data_; }
  const Storage& data() const { return data_; }
  auto array() { return data_.array(); }
  auto array() const { return data_.array(); }

  Scalar& operator()(Index n, Index c, Index y, Index x) {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  Scalar operator()(Index n, Index c, Index y, Index x) const {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }

  SampleMap sample(Index n) { return {data_.data() + n * sample_size(), shape_.c, plane_size()}; }
  ConstSampleMap sample(Index n) const {
    return {data_.data() + n * sample_size(), shape_.c, plane_size()};
  }
  PlaneMap plane(Index n, Index c) {
    return {data_.data() + (n * shape_.c + c) * plane_size(), shape_.h, shape_.w};
  }
  ConstPlaneMap plane(Index n, Index c) const {
    return {data_.data() + (n * shape_.c + c) * plane_size(), shape_.h, shape_.w};
  }

  void set_zero() { data_.setZero(); }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    out.data() = data_.template cast<Other>();
    return out;
  }

 private:
  Shape4 shape_;
  Storage data_;
};

/// Channel-wise concatenation; spatial dims and batch must agree.
template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.batch() != b.batch() || a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("concat of " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  Tensor<Scalar> out(a.batch(), a.channels() + b.channels(), a.rows(), a.cols());
  for (Index n = 0; n < a.batch(); ++n) {
    out.sample(n).topRows(a.channels()) = a.sample(n);
    out.sample(n).bottomRows(b.channels()) = b.sample(n);
  }
  return out;
}

/// Channels [first, first + count) of every sample.
template <typename Scalar>
Tensor<Scalar> slice_channels(const Tensor<Scalar>& t, Index first, Index count) {
  Tensor<Scalar> out(t.batch(), count, t.rows(), t.cols());
  for (Index n = 0; n < t.batch(); ++n) out.sample(n) = t.sample(n).middleRows(first, count);
  return out;
}

}  // namespace fbgan
