#pragma once

#include "fbgan/layers.hpp"

#include <cmath>
#include <vector>

namespace fbgan {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment optimizer over a fixed list of parameter blocks.
template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<ParamRef<Scalar>> params, AdamConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
      m_.push_back(MatrixX<Scalar>::Zero(p.value->rows(), p.value->cols()));
      v_.push_back(MatrixX<Scalar>::Zero(p.value->rows(), p.value->cols()));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.grad->setZero();
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const Scalar b1 = static_cast<Scalar>(cfg_.beta1), b2 = static_cast<Scalar>(cfg_.beta2);
    const Scalar step = static_cast<Scalar>(cfg_.lr / c1);
    const Scalar inv_c2 = static_cast<Scalar>(1.0 / c2);
    const Scalar eps = static_cast<Scalar>(cfg_.eps);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto g = params_[i].grad->array();
      m_[i].array() = b1 * m_[i].array() + (Scalar(1) - b1) * g;
      v_[i].array() = b2 * v_[i].array() + (Scalar(1) - b2) * g.square();
      params_[i].value->array() -= step * m_[i].array() / ((v_[i].array() * inv_c2).sqrt() + eps);
    }
  }

  std::vector<ParamRef<Scalar>>& params() { return params_; }
  const std::vector<ParamRef<Scalar>>& params() const { return params_; }
  std::vector<MatrixX<Scalar>>& first_moments() { return m_; }
  const std::vector<MatrixX<Scalar>>& first_moments() const { return m_; }
  std::vector<MatrixX<Scalar>>& second_moments() { return v_; }
  const std::vector<MatrixX<Scalar>>& second_moments() const { return v_; }
  long long steps() const { return t_; }
  void set_steps(long long t) { t_ = t; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<ParamRef<Scalar>> params_;
  std::vector<MatrixX<Scalar>> m_, v_;
  AdamConfig cfg_;
  long long t_ = 0;
};

}  // namespace fbgan
