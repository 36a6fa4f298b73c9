#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "usaad/core/errors.hpp"
#include "usaad/core/tensor.hpp"

namespace usaad::ad {

// Dynamic reverse-mode tape. Nodes are created in topological order by
// construction, so backward is a single reverse sweep over creation order.

namespace detail {
inline std::uint64_t next_order() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

// Disables graph construction in scope (inference, discriminator-phase fakes).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev; }
};

inline bool grad_enabled() { return detail::grad_mode(); }

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulate
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward;
  bool requires_grad = false;
  std::uint64_t order = 0;

  void accumulate(const Tensor<T>& g) {
    if (grad.empty()) grad = Tensor<T>::zeros_like(value);
    T* dst = grad.data();
    const T* src = g.data();
    for (std::size_t i = 0; i < grad.numel(); ++i) dst[i] += src[i];
  }

  // Raw accumulate for op kernels that index the grad buffer directly.
  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>::zeros_like(value);
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;

  explicit Var(Tensor<T> v, bool requires_grad = false) {
    node_ = std::make_shared<Node<T>>();
    node_->value = std::move(v);
    node_->requires_grad = requires_grad;
    node_->order = detail::next_order();
  }

  static Var make(Tensor<T> v, std::vector<Var> parents,
                  std::function<void(Node<T>&)> backward_fn) {
    Var out;
    out.node_ = std::make_shared<Node<T>>();
    out.node_->value = std::move(v);
    out.node_->order = detail::next_order();
    bool need = false;
    if (grad_enabled()) {
      for (const auto& p : parents) {
        if (p.defined() && p.requires_grad()) need = true;
      }
    }
    if (need) {
      out.node_->requires_grad = true;
      out.node_->backward = std::move(backward_fn);
      for (auto& p : parents) {
        if (p.defined()) out.node_->parents.push_back(p.node_);
      }
    }
    return out;
  }

  bool defined() const { return node_ != nullptr; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  void zero_grad() {
    if (node_ && !node_->grad.empty()) node_->grad.fill(T{});
  }

  Var detach() const {
    Var out;
    out.node_ = std::make_shared<Node<T>>();
    out.node_->value = node_->value;
    out.node_->requires_grad = false;
    out.node_->order = detail::next_order();
    return out;
  }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Seeds d(root)/d(root) = 1 and sweeps the reachable subgraph in reverse
// creation order. root must be a scalar.
template <typename T>
void backward(const Var<T>& root) {
  if (!root.defined() || !root.requires_grad()) return;
  if (root.value().numel() != 1) throw UsageError("backward: root must be a scalar");

  std::vector<Node<T>*> nodes;
  std::unordered_set<Node<T>*> seen;
  std::vector<Node<T>*> stack{root.node()};
  seen.insert(root.node());
  while (!stack.empty()) {
    Node<T>* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const Node<T>* a, const Node<T>* b) { return a->order > b->order; });

  root.node()->accumulate(Tensor<T>::scalar(T{1}));
  for (Node<T>* n : nodes) {
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace usaad::ad
