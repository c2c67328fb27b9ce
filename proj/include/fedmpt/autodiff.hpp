#pragma once

// Reverse-mode differentiation over dense tensors.
//
// A Tape records every forward op as a node holding its value and a closure
// that pushes the node's gradient into its inputs. Nodes are appended in
// execution order, so walking the tape backwards is a reverse topological
// traversal. Parameters enter the tape as leaves; backward() accumulates
// into Parameter::grad and never clears it (see sgd_step).

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fedmpt/tensor.hpp"

namespace fedmpt {

struct Parameter {
  Parameter() = default;
  Parameter(std::string id, Tensor value);

  std::string id;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

// Handle to a tape node. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Parameter& param);

  // Records an op output. `inputs` decide whether the node needs a gradient.
  Var record(Tensor value, std::span<const Var> inputs, Backprop backprop);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Gradient buffer of a node, zero-allocated on first access.
  Tensor& grad_buffer(std::size_t id);

  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    Backprop backprop;
  };
  // deque keeps value references stable while ops append nodes.
  std::deque<Node> nodes_;
};

// Binary ops accept equal shapes or a single-element operand on either side.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var exp(Var a);
Var log(Var a);
Var pow(Var a, double exponent);
Var sigmoid(Var a);
Var clamp_min(Var a, double floor);
// log(max(1 - a, floor)) through log1p, so tiny a keeps full precision.
Var log1m(Var a, double floor);

Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);

// Reductions remove `axis`; reducing a rank-1 tensor yields shape [1].
Var sum_axis(Var a, std::size_t axis);
Var mean_axis(Var a, std::size_t axis);
Var max_axis(Var a, std::size_t axis);
Var sum_all(Var a);

Var softmax(Var a, std::size_t axis, double temperature);

// Normalizes every row (last axis) to unit L2 norm. An all-zero row maps to
// the uniform unit row 1/sqrt(D) and passes no gradient.
Var l2_normalize_rows(Var a);

// Stacks inputs as rows. Rank-1 inputs contribute one row each.
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);

// Plain-tensor forms used outside the tape.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax(const Tensor& a, std::size_t axis, double temperature);
Tensor l2_normalize_rows(const Tensor& a);

// value -= lr * grad, then grad = 0.
void sgd_step(std::span<Parameter* const> params, double lr);

}  // namespace fedmpt
