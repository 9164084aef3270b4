#include "hippo/nn/autograd.hpp"

#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace hippo::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
void backward(std::span<const Var<T>> roots, std::span<const Tensor<T>> seeds) {
  if (roots.size() != seeds.size()) throw std::invalid_argument("backward: one seed per root required");

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  for (const auto& root : roots) {
    if (!root->requires_grad || visited.count(root.get())) continue;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node<T>* parent = node->parents[next++].get();
        if (parent->requires_grad && !visited.count(parent)) {
          visited.insert(parent);
          stack.emplace_back(parent, 0);
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  for (std::size_t i = 0; i < roots.size(); ++i) {
    if (!roots[i]->requires_grad) continue;
    if (seeds[i].shape() != roots[i]->value.shape()) {
      throw std::invalid_argument("backward: seed shape " + seeds[i].shape().str() + " does not match root " +
                                  roots[i]->value.shape().str());
    }
    auto& g = roots[i]->ensure_grad();
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += seeds[i][j];
  }

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (!node->backward_fn) continue;
    node->ensure_grad();
    for (auto& p : node->parents) {
      if (p->requires_grad) p->ensure_grad();
    }
    node->backward_fn(*node);
    // Intermediate gradients are no longer needed once propagated.
    if (!node->parents.empty()) node->grad = Tensor<T>();
  }
}

template void backward<float>(std::span<const Var<float>>, std::span<const Tensor<float>>);
template void backward<double>(std::span<const Var<double>>, std::span<const Tensor<double>>);

}  // namespace hippo::nn
