#include "panolight/nn/autograd.hpp"

#include <unordered_set>

namespace panolight::nn {
namespace {
thread_local bool g_grad_enabled = true;
}

std::string to_string(const Shape& s) {
  return "[" + std::to_string(s[0]) + ", " + std::to_string(s[1]) + ", " + std::to_string(s[2]) +
         ", " + std::to_string(s[3]) + "]";
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <typename Scalar>
void backward(const Var<Scalar>& root, const Tensor<Scalar>* seed) {
  using NodeT = Node<Scalar>;
  NodeT* top = root.node();
  if (!top->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<NodeT*, std::size_t>> stack{{top, 0}};
  visited.insert(top);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeT* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  if (seed) {
    require(seed->shape == top->value.shape, Errc::shape_mismatch, "backward seed shape");
    top->grad_data() += seed->data;
  } else {
    top->grad_data() += Scalar(1);
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = *it;
    if (!node->backward) continue;
    if (node->grad.size() == node->value.size()) node->backward(*node);
    node->grad = Tensor<Scalar>();
  }
}

template void backward<float>(const Var<float>&, const Tensor<float>*);
template void backward<double>(const Var<double>&, const Tensor<double>*);

}  // namespace panolight::nn
