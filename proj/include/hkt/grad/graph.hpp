#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "hkt/grad/tensor.hpp"

namespace hkt::grad {

class Graph;

// Handle to a node recorded on a Graph. Cheap to copy; valid until the
// owning graph is reset or destroyed.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor& grad() const;
  bool has_grad() const;
  bool requires_grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t id() const { return id_; }
  Graph* graph() const { return graph_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  [[noreturn]] static void unbound();
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in execution order, so every node's
// inputs precede it and a single reverse sweep visits each node once.
// One graph is a single-writer unit; do not share across threads.
class Graph {
 public:
  // Receives the graph and the id of the node whose output gradient is ready.
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Appends an op node. The node requires grad iff any input does; `fn` is
  // dropped otherwise. Throws NumericError if `value` holds NaN/Inf.
  Var record(const char* op, Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape once. Every requires_grad
  // leaf ends with a gradient buffer (zeros if unreachable). A second call
  // without reset() throws.
  void backward(const Var& loss);
  void reset();
  // Drops every gradient buffer but keeps the tape, so another loss on the
  // same forward can be differentiated.
  void clear_grads();

  std::size_t size() const { return nodes_.size(); }
  std::size_t backward_visits() const { return backward_visits_; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  const std::string& op_name(std::size_t id) const { return nodes_[id].op; }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }
  const Tensor& grad(std::size_t id) const;
  // Gradient buffer for accumulation; allocated as zeros on first use.
  Tensor& grad_ref(std::size_t id);

  const Tensor& value(const Var& v) const { return value(v.id()); }

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool is_leaf = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  void check_owned(const Var& v) const;

  std::deque<Node> nodes_;  // deque: references survive push_back
  bool backward_done_ = false;
  std::size_t backward_visits_ = 0;
};

inline const Tensor& Var::value() const {
  if (!graph_) unbound();
  return graph_->value(id_);
}

}  // namespace hkt::grad
