#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "hippo/nn/tensor.hpp"

namespace hippo::nn {

/// A value in the computation graph. Ops that receive at least one input with
/// `requires_grad` record their parents and a backward function that adds
/// this node's gradient into the parents' gradients.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& ensure_grad() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    return grad;
  }
  void zero_grad() {
    if (!grad.empty()) grad.fill(T{});
  }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return node;
}

template <typename T>
Var<T> parameter(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = true;
  return node;
}

bool grad_enabled();

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Creates the output node of an op. Records parents and the backward
/// function only when recording is enabled and some parent needs a gradient.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (!grad_enabled()) return node;
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  if (!needs) return node;
  node->requires_grad = true;
  node->parents = std::move(parents);
  node->backward_fn = std::move(backward_fn);
  return node;
}

/// Reverse-mode sweep from several roots at once; `seeds[i]` is the gradient
/// of the scalar objective with respect to `roots[i]`. Gradients accumulate
/// into every reachable node with `requires_grad`.
template <typename T>
void backward(std::span<const Var<T>> roots, std::span<const Tensor<T>> seeds);

template <typename T>
void backward(const Var<T>& root, const Tensor<T>& seed) {
  backward<T>(std::span<const Var<T>>(&root, 1), std::span<const Tensor<T>>(&seed, 1));
}

}  // namespace hippo::nn
