#pragma once

// Layer primitives with explicit forward caches and backward passes. Every
// layer is stateless apart from its parameters, so one layer can be applied
// several times per step with independent caches.

#include "fbgan/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace fbgan {

/// A named parameter block and its gradient accumulator.
template <typename Scalar>
struct ParamRef {
  std::string name;
  MatrixX<Scalar>* value;
  MatrixX<Scalar>* grad;
};

struct BackwardFlags {
  bool input_grad = true;     // produce d(loss)/d(input)
  bool param_grads = true;    // accumulate into the parameter gradients
};

/// He-style normal initialization for a leaky-ReLU fan-in.
template <typename Scalar>
void init_normal(MatrixX<Scalar>& w, Index fan_in, std::mt19937_64& rng, double scale = 1.0) {
  const double slope = 0.2;
  const double sd = scale * std::sqrt(2.0 / ((1.0 + slope * slope) * static_cast<double>(fan_in)));
  std::normal_distribution<double> dist(0.0, sd);
  for (Index j = 0; j < w.cols(); ++j) {
    for (Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(dist(rng));
  }
}

// ---------------------------------------------------------------- convolution

template <typename Scalar>
struct ConvCache {
  Shape4 in_shape;
  RowMatrixX<Scalar> cols;  // (in·k·k) × (n·h·w), samples side by side
};

/// Same-padded 2D convolution with odd square kernels and unit stride,
/// computed as one GEMM over the im2col matrix of the whole batch.
template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(Index in_channels, Index out_channels, Index kernel)
      : in_(in_channels), out_(out_channels), k_(kernel),
        weight_(MatrixX<Scalar>::Zero(out_channels, in_channels * kernel * kernel)),
        bias_(MatrixX<Scalar>::Zero(out_channels, 1)),
        grad_weight_(MatrixX<Scalar>::Zero(out_channels, in_channels * kernel * kernel)),
        grad_bias_(MatrixX<Scalar>::Zero(out_channels, 1)) {
    if (kernel % 2 != 1) throw ShapeError("convolution kernels must be odd");
  }

  Index in_channels() const { return in_; }
  Index out_channels() const { return out_; }

  void init(std::mt19937_64& rng, double scale = 1.0) {
    init_normal(weight_, in_ * k_ * k_, rng, scale);
    bias_.setZero();
  }

  void collect(const std::string& prefix, std::vector<ParamRef<Scalar>>& out) {
    out.push_back({prefix + ".weight", &weight_, &grad_weight_});
    out.push_back({prefix + ".bias", &bias_, &grad_bias_});
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, ConvCache<Scalar>* cache) const {
    if (x.channels() != in_) {
      throw ShapeError("conv expects " + std::to_string(in_) + " channels, got " +
                       std::to_string(x.channels()));
    }
    RowMatrixX<Scalar> scratch;
    RowMatrixX<Scalar>& col = cache ? cache->cols : scratch;
    if (cache) cache->in_shape = x.shape();
    im2col(x, col);
    RowMatrixX<Scalar> prod(out_, col.cols());
    prod.noalias() = weight_ * col;
    prod.colwise() += bias_.col(0);
    return unfold_batch(prod, x.batch(), x.rows(), x.cols());
  }

  Tensor<Scalar> backward(const ConvCache<Scalar>& cache, const Tensor<Scalar>& gy,
                          BackwardFlags flags) {
    const RowMatrixX<Scalar> g = fold_batch(gy);
    if (flags.param_grads) {
      grad_weight_.noalias() += g * cache.cols.transpose();
      grad_bias_.col(0) += g.rowwise().sum();
    }
    if (!flags.input_grad) return {};
    Tensor<Scalar> gx(cache.in_shape);
    if (k_ == 1) {
      RowMatrixX<Scalar> dcol(in_, g.cols());
      dcol.noalias() = weight_.transpose() * g;
      return unfold_batch(dcol, gx.batch(), gx.rows(), gx.cols());
    }
    RowMatrixX<Scalar> dcol(weight_.cols(), g.cols());
    dcol.noalias() = weight_.transpose() * g;
    col2im(dcol, gx);
    return gx;
  }

  MatrixX<Scalar>& weight() { return weight_; }
  MatrixX<Scalar>& bias() { return bias_; }

 private:
  /// NCHW -> C × (N·H·W).
  static RowMatrixX<Scalar> fold_batch(const Tensor<Scalar>& t) {
    const Index hw = t.plane_size();
    RowMatrixX<Scalar> m(t.channels(), t.batch() * hw);
    for (Index n = 0; n < t.batch(); ++n) m.middleCols(n * hw, hw) = t.sample(n);
    return m;
  }

  static Tensor<Scalar> unfold_batch(const RowMatrixX<Scalar>& m, Index n, Index h, Index w) {
    Tensor<Scalar> t(n, m.rows(), h, w);
    const Index hw = h * w;
    for (Index i = 0; i < n; ++i) t.sample(i) = m.middleCols(i * hw, hw);
    return t;
  }

  void im2col(const Tensor<Scalar>& x, RowMatrixX<Scalar>& col) const {
    const Index h = x.rows(), w = x.cols(), hw = h * w, nb = x.batch(), p = k_ / 2;
    if (k_ == 1) {
      col = fold_batch(x);
      return;
    }
    col.resize(in_ * k_ * k_, nb * hw);
    for (Index n = 0; n < nb; ++n) {
      for (Index c = 0; c < in_; ++c) {
        const Scalar* src = x.data().data() + (n * in_ + c) * hw;
        for (Index ky = 0; ky < k_; ++ky) {
          for (Index kx = 0; kx < k_; ++kx) {
            Scalar* dst = col.data() + ((c * k_ + ky) * k_ + kx) * col.cols() + n * hw;
            const Index dx = kx - p;
            const Index x0 = std::max<Index>(0, -dx), x1 = std::min<Index>(w, w - dx);
            for (Index oy = 0; oy < h; ++oy) {
              Scalar* row = dst + oy * w;
              const Index iy = oy + ky - p;
              if (iy < 0 || iy >= h) {
                std::fill(row, row + w, Scalar(0));
                continue;
              }
              std::fill(row, row + x0, Scalar(0));
              std::copy(src + iy * w + x0 + dx, src + iy * w + x1 + dx, row + x0);
              std::fill(row + x1, row + w, Scalar(0));
            }
          }
        }
      }
    }
  }

  void col2im(const RowMatrixX<Scalar>& dcol, Tensor<Scalar>& gx) const {
    const Index h = gx.rows(), w = gx.cols(), hw = h * w, p = k_ / 2;
    using Seg = Eigen::Map<VectorX<Scalar>>;
    using ConstSeg = Eigen::Map<const VectorX<Scalar>>;
    for (Index n = 0; n < gx.batch(); ++n) {
      for (Index c = 0; c < in_; ++c) {
        Scalar* dst = gx.data().data() + (n * in_ + c) * hw;
        for (Index ky = 0; ky < k_; ++ky) {
          for (Index kx = 0; kx < k_; ++kx) {
            const Scalar* src = dcol.data() + ((c * k_ + ky) * k_ + kx) * dcol.cols() + n * hw;
            const Index dx = kx - p;
            const Index x0 = std::max<Index>(0, -dx), x1 = std::min<Index>(w, w - dx);
            for (Index oy = 0; oy < h; ++oy) {
              const Index iy = oy + ky - p;
              if (iy < 0 || iy >= h) continue;
              Seg(dst + iy * w + x0 + dx, x1 - x0) += ConstSeg(src + oy * w + x0, x1 - x0);
            }
          }
        }
      }
    }
  }

  Index in_ = 0, out_ = 0, k_ = 1;
  MatrixX<Scalar> weight_, bias_, grad_weight_, grad_bias_;
};

// ------------------------------------------------------------------- linear

template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(Index in_features, Index out_features)
      : weight_(MatrixX<Scalar>::Zero(out_features, in_features)),
        bias_(MatrixX<Scalar>::Zero(out_features, 1)),
        grad_weight_(MatrixX<Scalar>::Zero(out_features, in_features)),
        grad_bias_(MatrixX<Scalar>::Zero(out_features, 1)) {}

  void init(std::mt19937_64& rng, double scale = 1.0) {
    init_normal(weight_, weight_.cols(), rng, scale);
    bias_.setZero();
  }

  void collect(const std::string& prefix, std::vector<ParamRef<Scalar>>& out) {
    out.push_back({prefix + ".weight", &weight_, &grad_weight_});
    out.push_back({prefix + ".bias", &bias_, &grad_bias_});
  }

  /// x is features × batch.
  MatrixX<Scalar> forward(const MatrixX<Scalar>& x) const {
    MatrixX<Scalar> y = weight_ * x;
    y.colwise() += bias_.col(0);
    return y;
  }

  MatrixX<Scalar> backward(const MatrixX<Scalar>& x, const MatrixX<Scalar>& gy,
                           BackwardFlags flags) {
    if (flags.param_grads) {
      grad_weight_.noalias() += gy * x.transpose();
      grad_bias_.col(0) += gy.rowwise().sum();
    }
    if (!flags.input_grad) return {};
    return weight_.transpose() * gy;
  }

 private:
  MatrixX<Scalar> weight_, bias_, grad_weight_, grad_bias_;
};

// ------------------------------------------------------------ elementwise ops

template <typename Scalar>
Tensor<Scalar> leaky_relu(const Tensor<Scalar>& x, Scalar slope) {
  Tensor<Scalar> y(x.shape());
  y.array() = (x.array() > Scalar(0)).select(x.array(), slope * x.array());
  return y;
}

/// `pre` is the activation's input.
template <typename Scalar>
Tensor<Scalar> leaky_relu_backward(const Tensor<Scalar>& pre, const Tensor<Scalar>& gy,
                                   Scalar slope) {
  Tensor<Scalar> gx(gy.shape());
  gx.array() = (pre.array() > Scalar(0)).select(gy.array(), slope * gy.array());
  return gx;
}

template <typename Scalar>
ArrayX<Scalar> sigmoid(const ArrayX<Scalar>& x) {
  return (Scalar(1) + (-x).exp()).inverse();
}

/// `s` is the sigmoid output.
template <typename Scalar>
ArrayX<Scalar> sigmoid_backward(const ArrayX<Scalar>& s, const ArrayX<Scalar>& gy) {
  return gy * s * (Scalar(1) - s);
}

// -------------------------------------------------------- instance norm

template <typename Scalar>
struct NormCache {
  Tensor<Scalar> normalized;
  ArrayX<Scalar> inv_std;  // per (n, c)
};

/// Per-sample, per-channel normalization without affine parameters.
template <typename Scalar>
Tensor<Scalar> instance_norm(const Tensor<Scalar>& x, NormCache<Scalar>* cache,
                             Scalar eps = Scalar(1e-5)) {
  Tensor<Scalar> y(x.shape());
  const Index planes = x.batch() * x.channels();
  const Index m = x.plane_size();
  ArrayX<Scalar> inv_std(planes);
  for (Index p = 0; p < planes; ++p) {
    const auto in = x.data().segment(p * m, m).array();
    const Scalar mean = in.mean();
    const Scalar var = (in - mean).square().mean();
    inv_std[p] = Scalar(1) / std::sqrt(var + eps);
    y.data().segment(p * m, m).array() = (in - mean) * inv_std[p];
  }
  if (cache) {
    cache->normalized = y;
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> instance_norm_backward(const NormCache<Scalar>& cache, const Tensor<Scalar>& gy) {
  Tensor<Scalar> gx(gy.shape());
  const Index planes = gy.batch() * gy.channels();
  const Index m = gy.plane_size();
  for (Index p = 0; p < planes; ++p) {
    const auto g = gy.data().segment(p * m, m).array();
    const auto xh = cache.normalized.data().segment(p * m, m).array();
    const Scalar g_mean = g.mean();
    const Scalar gx_mean = (g * xh).mean();
    gx.data().segment(p * m, m).array() = cache.inv_std[p] * (g - g_mean - xh * gx_mean);
  }
  return gx;
}

// ------------------------------------------------------- resampling

template <typename Scalar>
Tensor<Scalar> avg_pool2(const Tensor<Scalar>& x) {
  if (x.rows() % 2 != 0 || x.cols() % 2 != 0) {
    throw ShapeError("avg_pool2 needs even spatial dims, got " + to_string(x.shape()));
  }
  Tensor<Scalar> y(x.batch(), x.channels(), x.rows() / 2, x.cols() / 2);
  for (Index n = 0; n < x.batch(); ++n) {
    for (Index c = 0; c < x.channels(); ++c) {
      const auto in = x.plane(n, c);
      auto out = y.plane(n, c);
      for (Index i = 0; i < out.rows(); ++i) {
        for (Index j = 0; j < out.cols(); ++j) {
          out(i, j) = Scalar(0.25) * (in(2 * i, 2 * j) + in(2 * i, 2 * j + 1) +
                                      in(2 * i + 1, 2 * j) + in(2 * i + 1, 2 * j + 1));
        }
      }
    }
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> avg_pool2_backward(const Tensor<Scalar>& gy) {
  Tensor<Scalar> gx(gy.batch(), gy.channels(), gy.rows() * 2, gy.cols() * 2);
  for (Index n = 0; n < gy.batch(); ++n) {
    for (Index c = 0; c < gy.channels(); ++c) {
      const auto g = gy.plane(n, c);
      auto out = gx.plane(n, c);
      for (Index i = 0; i < out.rows(); ++i) {
        for (Index j = 0; j < out.cols(); ++j) out(i, j) = Scalar(0.25) * g(i / 2, j / 2);
      }
    }
  }
  return gx;
}

template <typename Scalar>
Tensor<Scalar> upsample2(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.batch(), x.channels(), x.rows() * 2, x.cols() * 2);
  for (Index n = 0; n < x.batch(); ++n) {
    for (Index c = 0; c < x.channels(); ++c) {
      const auto in = x.plane(n, c);
      auto out = y.plane(n, c);
      for (Index i = 0; i < out.rows(); ++i) {
        for (Index j = 0; j < out.cols(); ++j) out(i, j) = in(i / 2, j / 2);
      }
    }
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> upsample2_backward(const Tensor<Scalar>& gy) {
  Tensor<Scalar> gx(gy.batch(), gy.channels(), gy.rows() / 2, gy.cols() / 2);
  for (Index n = 0; n < gy.batch(); ++n) {
    for (Index c = 0; c < gy.channels(); ++c) {
      const auto g = gy.plane(n, c);
      auto out = gx.plane(n, c);
      for (Index i = 0; i < out.rows(); ++i) {
        for (Index j = 0; j < out.cols(); ++j) {
          out(i, j) = g(2 * i, 2 * j) + g(2 * i, 2 * j + 1) + g(2 * i + 1, 2 * j) +
                      g(2 * i + 1, 2 * j + 1);
        }
      }
    }
  }
  return gx;
}

/// Spatial mean, returned as channels × batch.
template <typename Scalar>
MatrixX<Scalar> spatial_mean(const Tensor<Scalar>& x) {
  MatrixX<Scalar> y(x.channels(), x.batch());
  for (Index n = 0; n < x.batch(); ++n) y.col(n) = x.sample(n).rowwise().mean();
  return y;
}

template <typename Scalar>
Tensor<Scalar> spatial_mean_backward(const MatrixX<Scalar>& gy, Shape4 in_shape) {
  Tensor<Scalar> gx(in_shape);
  const Scalar inv = Scalar(1) / static_cast<Scalar>(gx.plane_size());
  for (Index n = 0; n < gx.batch(); ++n) {
    gx.sample(n).colwise() = gy.col(n) * inv;
  }
  return gx;
}

/// Appends one byte per unit recording which side of a kink it sits on.
template <typename Scalar>
void append_signs(const Tensor<Scalar>& pre, std::vector<std::uint8_t>& out) {
  for (Index i = 0; i < pre.size(); ++i) out.push_back(pre.data()[i] > Scalar(0) ? 1 : 0);
}

}  // namespace fbgan
