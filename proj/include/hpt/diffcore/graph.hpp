#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hpt/diffcore/tensor.hpp"
#include "hpt/errors.hpp"

namespace hpt::diff {

using NodeId = std::size_t;

/// Tape of op nodes recorded in forward order. Each node owns its output
/// value; gradients are allocated lazily during `backward`.
///
/// Ops live outside the class (see ops.hpp, and the trigger / quantnet
/// headers) and register themselves through `emit`, handing over the output
/// tensor and a closure that scatters the node's gradient into its inputs.
template <class T>
class Graph {
 public:
  using value_type = T;
  using BackwardFn = std::function<void(Graph&, NodeId)>;

  struct Node {
    const char* kind;
    std::vector<NodeId> inputs;
    Tensor<T> value;
    bool requires_grad = false;
    BackwardFn backward;
  };

  NodeId constant(Tensor<T> value) { return push({"constant", {}, std::move(value), false, {}}); }
  NodeId variable(Tensor<T> value) { return push({"variable", {}, std::move(value), true, {}}); }

  NodeId emit(const char* kind, std::vector<NodeId> inputs, Tensor<T> value,
              BackwardFn backward) {
    bool needs = false;
    for (NodeId id : inputs) {
      if (id >= nodes_.size()) {
        throw ContractError(std::string(kind) + ": input id " + std::to_string(id) +
                            " does not precede its consumer");
      }
      needs = needs || nodes_[id].requires_grad;
    }
    if (!needs) backward = nullptr;
    return push({kind, std::move(inputs), std::move(value), needs, std::move(backward)});
  }

  const Tensor<T>& value(NodeId id) const { return nodes_.at(id).value; }
  const std::vector<T>& grad(NodeId id) const { return nodes_.at(id).value.grad; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  const char* kind(NodeId id) const { return nodes_.at(id).kind; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient buffer of `id`, zero-initialised on first access. Backward
  /// closures accumulate into it with `+=`.
  std::vector<T>& grad_buffer(NodeId id) {
    auto& v = nodes_.at(id).value;
    if (v.grad.size() != v.data.size()) v.grad.assign(v.data.size(), T(0));
    return v.grad;
  }

  /// Reverse sweep from a scalar root. Nodes are visited in exact reverse of
  /// their recording order.
  void backward(NodeId root, T seed = T(1)) {
    if (value(root).size() != 1) {
      throw DimensionError("backward root must be a scalar, got shape " +
                           to_string(value(root).shape));
    }
    for (auto& n : nodes_) n.value.grad.clear();
    grad_buffer(root)[0] = seed;
    for (std::size_t i = root + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.backward || n.value.grad.empty()) continue;
      n.backward(*this, i);
    }
  }

 private:
  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  std::vector<Node> nodes_;
};

}  // namespace hpt::diff
