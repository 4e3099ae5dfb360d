#pragma once

#include <cmath>
#include <vector>

#include "panolight/nn/autograd.hpp"

namespace panolight::nn {

struct AdamOptions {
  double lr = 0.0025;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
};

/// Adam with bias correction. Parameters without an accumulated gradient are
/// left untouched and do not advance their moments.
template <typename Scalar>
class Adam {
 public:
  Adam(std::vector<Var<Scalar>> params, AdamOptions options)
      : params_(std::move(params)), options_(options) {
    for (const auto& p : params_) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(options_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(options_.beta2, double(t_));
    const Scalar b1 = Scalar(options_.beta1), b2 = Scalar(options_.beta2);
    const Scalar step = Scalar(options_.lr * std::sqrt(c2) / c1);
    const Scalar eps = Scalar(options_.eps * std::sqrt(c2));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Var<Scalar>& p = params_[i];
      if (!p.has_grad()) continue;
      const auto& g = p.grad().data;
      m_[i].data = b1 * m_[i].data + (1 - b1) * g;
      v_[i].data = b2 * v_[i].data + (1 - b2) * g.square();
      p.mutable_value().data -= step * m_[i].data / (v_[i].data.sqrt() + eps);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  const std::vector<Var<Scalar>>& params() const { return params_; }
  std::vector<Tensor<Scalar>>& first_moments() { return m_; }
  std::vector<Tensor<Scalar>>& second_moments() { return v_; }
  long long steps() const { return t_; }
  void set_steps(long long t) { t_ = t; }
  const AdamOptions& options() const { return options_; }
  void set_lr(double lr) { options_.lr = lr; }

 private:
  std::vector<Var<Scalar>> params_;
  AdamOptions options_;
  std::vector<Tensor<Scalar>> m_;
  std::vector<Tensor<Scalar>> v_;
  long long t_ = 0;
};

}  // namespace panolight::nn
