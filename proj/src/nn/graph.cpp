#include "textres/nn/graph.hpp"

#include "textres/core/error.hpp"

namespace textres::nn {

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(const Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{it->second};
  nodes_.push_back(Node{p.value, {}, true, {}});
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return Var{id};
}

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  bool any = false;
  for (Var in : inputs) any = any || (in.valid() && nodes_[in.id].requires_grad);
  nodes_.push_back(Node{std::move(value), {}, any, any ? std::move(backward) : Backward{}});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad_ref(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Graph::backward(Var loss) {
  require(nodes_[loss.id].value.size() == 1, ErrorKind::InternalError, "backward needs a scalar loss");
  grad_ref(loss)[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
  }
}

Tensor Graph::gradient(Var v) const {
  const Node& n = nodes_[v.id];
  return n.grad.empty() ? Tensor(n.value.shape()) : n.grad;
}

Tensor Graph::gradient(const Parameter& p) const {
  auto it = param_nodes_.find(&p);
  if (it == param_nodes_.end()) return Tensor(p.value.shape());
  return gradient(Var{it->second});
}

std::vector<Tensor> Graph::gradients(const ParamSet& params) const {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(gradient(p));
  return out;
}

}  // namespace textres::nn
