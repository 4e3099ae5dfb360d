#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "panolight/nn/tensor.hpp"

namespace panolight::nn {

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward;

  typename Tensor<Scalar>::Array& grad_data() {
    if (grad.size() != value.size()) grad = Tensor<Scalar>(value.shape);
    return grad.data;
  }
};

/// Handle to a node of the computation graph. Copies share the node.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<Scalar>> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor<Scalar>& value() const { return node_->value; }
  /// In-place access for optimizers and initialization; not recorded.
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  Tensor<Scalar>& grad() {
    node_->grad_data();
    return node_->grad;
  }
  void zero_grad() { node_->grad = Tensor<Scalar>(); }

  /// Scalar value of a one-element tensor.
  Scalar item() const {
    require(node_->value.size() == 1, Errc::shape_mismatch, "item() needs a single element");
    return node_->value.data[0];
  }

  Node<Scalar>* node() const { return node_.get(); }
  const std::shared_ptr<Node<Scalar>>& shared() const { return node_; }

 private:
  std::shared_ptr<Node<Scalar>> node_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

template <typename Scalar>
Var<Scalar> parameter(Tensor<Scalar> value) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var<Scalar>(std::move(node));
}

template <typename Scalar>
Var<Scalar> constant(Tensor<Scalar> value) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  return Var<Scalar>(std::move(node));
}

/// New leaf holding a copy of the value.
template <typename Scalar>
Var<Scalar> detach(const Var<Scalar>& v) {
  return constant(v.value());
}

/// Builds an op result. Records parents and the backward closure only when
/// recording is enabled and some parent requires grad.
template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, std::vector<Var<Scalar>> parents,
                        std::function<void(Node<Scalar>&)> backward) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (auto& p : parents) node->parents.push_back(p.shared());
      node->backward = std::move(backward);
    }
  }
  return Var<Scalar>(std::move(node));
}

/// Accumulates d(root)/d(leaf) into every reachable leaf that requires grad.
/// `seed` defaults to ones (so a non-scalar root backpropagates its sum).
/// Intermediate gradients are released as soon as they are consumed.
template <typename Scalar>
void backward(const Var<Scalar>& root, const Tensor<Scalar>* seed = nullptr);

}  // namespace panolight::nn
