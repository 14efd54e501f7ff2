#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "priorformer/tensor.hpp"

namespace priorformer {

class Graph;

// Handle to a node of a Graph. Cheap to copy; only valid while its Graph lives.
struct Var {
  Graph* graph = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return graph != nullptr; }
};

// Tape of tensor-valued nodes. Nodes are appended in creation order, so the
// creation index is a topological order; backward walks it in reverse and
// therefore accumulates gradients in a fixed, reproducible order.
//
// Every recorded value is checked for NaN/Inf and a NumericError is thrown
// at the op that produced it.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::uint32_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf that receives a gradient.
  Var variable(Tensor value);
  // Leaf that does not.
  Var constant(Tensor value);

  // Appends an op node. `backward` reads this node's gradient and adds into
  // parent gradients through grad_buffer(); it only runs if some parent
  // requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

  // Gradient after backward(); zeros for nodes the loss does not reach.
  Tensor grad(Var v) const;

  // Zero-initialised on first access within a backward pass.
  std::span<double> grad_buffer(std::uint32_t id);
  std::span<const double> grad_of(std::uint32_t id) const { return nodes_[id].grad; }

  // Reverse-mode sweep from a single-element loss. Clears any earlier
  // gradients first, so each call yields exactly one gradient per leaf.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  std::uint32_t parent(std::uint32_t id, std::size_t k) const { return nodes_[id].parents[k]; }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::vector<std::uint32_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
};

// Differentiable ops. Operands must share a graph.
namespace ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double k);
Var add_scalar(Var a, double k);
Var neg(Var a);

// x: [m x n] (or [n]), bias: [n]; adds bias to every row.
Var add_bias(Var x, Var bias);

Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);

Var softmax(Var x, std::size_t axis);
Var layer_norm(Var x, Var gain, Var bias, double eps);

Var gelu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var abs(Var x);  // subgradient 0 at 0

Var sum(Var x);   // scalar
Var mean(Var x);  // scalar
// Smallest element as a scalar; the gradient goes to the earliest minimiser.
Var min(Var x);

// Rows [start, start+count) of a matrix, or elements of a vector.
Var slice_rows(Var x, std::size_t start, std::size_t count);
Var slice_cols(Var x, std::size_t start, std::size_t count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
// Scalars (any single-element tensors) into a rank-1 vector.
Var stack(std::span<const Var> scalars);

}  // namespace ad

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

// max(|a|, |b|, floor) denominator, elementwise maximum.
double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-8);

}  // namespace priorformer
