#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "mambaeye/tensor.hpp"

namespace mambaeye {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const { return id != static_cast<std::size_t>(-1); }
};

/// Records primitive ops in execution order. Creation order is a topological
/// order, so `backward` walks the records from the loss down to index 0 and
/// visits each op exactly once. A tape belongs to a single thread.
template <typename T>
class Tape {
 public:
  /// Receives the gradient of the op's output and accumulates into its inputs.
  using BackwardFn = std::function<void(Tape&, const Tensor<T>&)>;

  Var leaf(Tensor<T> value, bool requires_grad = true) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, requires_grad});
    return Var{nodes_.size() - 1};
  }

  Var constant(Tensor<T> value) { return leaf(std::move(value), false); }

  Var record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn fn) {
    bool needs = false;
    for (Var v : inputs) needs = needs || requires_grad(v);
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : nullptr, needs});
    return Var{nodes_.size() - 1};
  }

  Var record(Tensor<T> value, const std::vector<Var>& inputs, BackwardFn fn) {
    bool needs = false;
    for (Var v : inputs) needs = needs || requires_grad(v);
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : nullptr, needs});
    return Var{nodes_.size() - 1};
  }

  const Tensor<T>& value(Var v) const { return node(v).value; }
  const Shape& shape(Var v) const { return node(v).value.shape(); }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  /// Gradient buffer of `v`, allocated as zeros on first access.
  Tensor<T>& grad_buffer(Var v) {
    Node& n = node(v);
    if (n.grad.size() != n.value.size()) n.grad = Tensor<T>(n.value.shape(), T(0));
    return n.grad;
  }

  /// Gradient of `v` after backward; zeros if nothing flowed into it.
  Tensor<T> grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.size() != n.value.size()) return Tensor<T>(n.value.shape(), T(0));
    return n.grad;
  }

  void backward(Var loss) {
    if (node(loss).value.size() != 1) {
      throw ShapeError("backward requires a scalar loss, got shape " +
                       shape_str(node(loss).value.shape()));
    }
    grad_buffer(loss)[0] = T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.size() != n.value.size()) continue;
      n.backward(*this, n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw std::out_of_range("Var does not belong to this tape");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw std::out_of_range("Var does not belong to this tape");
    return nodes_[v.id];
  }

  std::deque<Node> nodes_;  // references from value() survive later records
};

}  // namespace mambaeye
