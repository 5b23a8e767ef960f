#include "hkt/grad/graph.hpp"

#include "hkt/error.hpp"

namespace hkt::grad {

void Var::unbound() { throw GraphError("use of an unbound Var"); }

const Tensor& Var::grad() const {
  if (!graph_) throw GraphError("use of an unbound Var");
  return graph_->grad(id_);
}

bool Var::has_grad() const { return graph_ && graph_->has_grad(id_); }

bool Var::requires_grad() const { return graph_ && graph_->requires_grad(id_); }

Var Graph::leaf(Tensor value, bool requires_grad) {
  Node node;
  node.op = "leaf";
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.is_leaf = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Graph::check_owned(const Var& v) const {
  if (v.graph() != this || v.id() >= nodes_.size()) {
    throw GraphError("Var does not belong to this graph");
  }
}

Var Graph::record(const char* op, Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  if (backward_done_) throw GraphError(std::string("recording '") + op + "' after backward");
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite output from '") + op + "'");
  }
  Node node;
  node.op = op;
  node.value = std::move(value);
  for (const auto& in : inputs) {
    check_owned(in);
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Graph::grad(std::size_t id) const {
  if (nodes_[id].grad.empty()) {
    throw GraphError("node " + std::to_string(id) + " ('" + nodes_[id].op + "') has no gradient");
  }
  return nodes_[id].grad;
}

Tensor& Graph::grad_ref(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Graph::backward(const Var& loss) {
  check_owned(loss);
  if (backward_done_) throw GraphError("backward called twice without reset");
  if (loss.value().size() != 1) {
    throw GraphError("backward needs a scalar loss, got " + shape_str(loss.shape()));
  }
  if (!nodes_[loss.id()].requires_grad) {
    throw GraphError("loss is detached: no requires_grad leaf reaches it");
  }
  backward_done_ = true;
  backward_visits_ = 0;
  grad_ref(loss.id()).fill(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    ++backward_visits_;
    n.backward(*this, i);
  }
  for (auto& n : nodes_) {
    if (n.is_leaf && n.requires_grad && n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  }
}

void Graph::clear_grads() {
  for (auto& n : nodes_) n.grad = Tensor();
  backward_done_ = false;
  backward_visits_ = 0;
}

void Graph::reset() {
  nodes_.clear();
  backward_done_ = false;
  backward_visits_ = 0;
}

}  // namespace hkt::grad
