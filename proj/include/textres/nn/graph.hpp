#pragma once

#include <functional>
#include <deque>
#include <unordered_map>
#include <vector>

#include "textres/core/tensor.hpp"
#include "textres/nn/params.hpp"

namespace textres::nn {

struct Var {
  int id = -1;
  bool valid() const noexcept { return id >= 0; }
};

/// Reverse-mode tape. Every op appends a node holding its value and a
/// closure that pushes the node's gradient to its inputs.
class Graph {
 public:
  using Backward = std::function<void(Graph&, const Tensor& out_grad)>;

  Var constant(Tensor value);
  /// Leaf bound to a parameter; repeated calls with the same parameter return the same node.
  Var param(const Parameter& p);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  /// Records an op output. `backward` is dropped when no input requires grad.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);

  /// Gradient accumulator of an input; allocated on first use.
  Tensor& grad_ref(Var v);

  /// Seeds d(loss)/d(loss) = 1 for a single-element node and runs the tape.
  void backward(Var loss);

  Tensor gradient(Var v) const;
  Tensor gradient(const Parameter& p) const;
  std::vector<Tensor> gradients(const ParamSet& params) const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;  // deque keeps value references stable while recording
  std::unordered_map<const Parameter*, int> param_nodes_;
};

}  // namespace textres::nn
