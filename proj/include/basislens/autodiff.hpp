// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "basislens/tensor.hpp"

// Define-by-run reverse-mode autodiff over dense double tensors. The op set is
// deliberately small: whatever the saliency model and its losses need.
namespace basislens::ad {

enum class Op {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Scale,
  Matmul,
  Transpose,
  Conv2d,
  Relu,
  Sigmoid,
  Sqrt,
  Log,
  Clamp,
  Sum,
  SumRows,
  Mean,
  Stddev,
  Min,
  Broadcast,
  Reshape,
  Slice,
};

std::string_view op_name(Op op);

struct Node {
  Op op = Op::Leaf;
  Tensor value;
  Tensor grad;  // empty until backward reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads `self.grad` and accumulates into the parents' grads.
  std::function<void(Node& self)> backward_fn;
};

// Shared handle to a graph node. Copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var leaf(Tensor value, bool requires_grad = true);
  static Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value() const { return node_->value; }
  // Leaves only: in-place parameter updates by an optimizer.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t numel() const { return node_->value.numel(); }
  double item() const { return node_->value.item(); }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Zero tensor when no gradient has been accumulated yet.
  Tensor grad() const;
  void zero_grad() { node_->grad = Tensor(); }

  Op op() const { return node_->op; }
  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

// While alive, newly created nodes record no parents and no backward closure.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

enum class Padding { Same, Valid };

struct Conv2dOptions {
  std::size_t stride = 1;  // 1 or 2
  Padding padding = Padding::Same;
};

// Output extent and leading pad for one spatial axis.
struct ConvGeometry {
  std::size_t out = 0;
  std::size_t pad_before = 0;
};
ConvGeometry conv_geometry(std::size_t in, std::size_t kernel, const Conv2dOptions& opt);

// Elementwise binary ops require identical shapes; use broadcast() first.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double factor);

// [m,k] x [k,n] -> [m,n]
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

// input [Cin,H,W], weight [Cout,Cin,k,k], bias [Cout] -> [Cout,Ho,Wo]
Var conv2d(const Var& input, const Var& weight, const Var& bias, const Conv2dOptions& opt = {});

Var relu(const Var& a);
Var sigmoid(const Var& a);
Var sqrt(const Var& a);
Var log(const Var& a);
Var clamp(const Var& a, double lo, double hi);

// Full reductions produce shape [1].
Var sum(const Var& a);
Var mean(const Var& a);
// Population standard deviation (divides by element count).
Var stddev(const Var& a);
Var min(const Var& a);
// [m,n] -> [1,n]
Var sum_rows(const Var& a);

// Scalar ([1]) to any shape, or row vector ([n] or [1,n]) over rows to [m,n].
Var broadcast(const Var& a, const Shape& shape);
Var reshape(const Var& a, const Shape& shape);
// Rows [begin, end) along the leading dimension.
Var slice(const Var& a, std::size_t begin, std::size_t end);

// Convenience composites.
Var add_scalar(const Var& a, double c);
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);

// Populates grads of every requires_grad node reachable from a scalar root.
// Leaf grads accumulate across calls; call zero_grad() between steps.
void backward(const Var& root);

struct GradCheckResult {
  std::vector<double> max_rel_error;  // one entry per input
  bool passed = false;
};

using GraphBuilder = std::function<Var(std::span<const Var>)>;

// Central finite differences against the analytic gradient. Relative error per
// element is |a - n| / max(1e-8, |a| + |n|).
GradCheckResult grad_check(const GraphBuilder& builder, std::span<const Tensor> inputs, double epsilon,
                           double tolerance);

}  // namespace basislens::ad
