// SPDX-License-Identifier: Apache-2.0
#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// tensors of doubles. Nodes form an acyclic graph through shared ownership
// of their parents; calling backward() on a scalar root accumulates
// d(root)/d(node) into every ancestor that requires a gradient.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nasc::ad {

using Shape = std::vector<std::size_t>;

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  /// Row/column view for rank-2 tensors. Rank-1 tensors are one row.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& vec() const { return data_; }

  bool all_finite() const;
  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::string shape_string(const Shape& shape);

class Node;
using NodeRef = std::shared_ptr<Node>;

class Node {
 public:
  const Tensor& value() const { return value_; }
  /// Accumulated gradient; a zero tensor of the value's shape when nothing
  /// has been accumulated yet.
  const Tensor& grad() const;
  bool has_grad() const { return has_grad_; }
  bool requires_grad() const { return requires_grad_; }
  bool is_leaf() const { return parents_.empty(); }
  const std::string& op() const { return op_; }

  void zero_grad();
  /// Parameter updates write through here; callers must keep the shape.
  Tensor& mutable_value() { return value_; }

  void accumulate_grad(const Tensor& g);
  void scale_grad(double factor);
  void accumulate_grad_at(std::size_t index, double g);

 private:
  friend NodeRef make_node(std::string op, Tensor value, std::vector<NodeRef> parents,
                           std::function<void(Node&)> backward);
  friend NodeRef parameter(Tensor value);
  friend NodeRef constant(Tensor value);
  friend void backward(const NodeRef& root);

  Tensor value_;
  mutable Tensor grad_;
  bool has_grad_ = false;
  bool requires_grad_ = false;
  std::string op_;
  std::vector<NodeRef> parents_;
  std::function<void(Node&)> backward_;

 public:
  const std::vector<NodeRef>& parents() const { return parents_; }
};

/// Trainable leaf.
NodeRef parameter(Tensor value);
/// Leaf that never receives a gradient.
NodeRef constant(Tensor value);
/// Builds an interior node. Throws DomainError naming `op` if `value`
/// carries a non-finite entry.
NodeRef make_node(std::string op, Tensor value, std::vector<NodeRef> parents,
                  std::function<void(Node&)> backward);

NodeRef matmul(const NodeRef& a, const NodeRef& b);

// Element-wise operations. Binary ops require equal shapes, or one operand
// holding exactly one element, which is then broadcast.
NodeRef add(const NodeRef& a, const NodeRef& b);
NodeRef sub(const NodeRef& a, const NodeRef& b);
NodeRef mul(const NodeRef& a, const NodeRef& b);
NodeRef relu(const NodeRef& a);
NodeRef relu6(const NodeRef& a);
NodeRef exp(const NodeRef& a);
NodeRef log(const NodeRef& a);
NodeRef scale(const NodeRef& a, double factor);

/// a[B×n] + bias[1×n], the bias row repeated over B.
NodeRef add_bias(const NodeRef& a, const NodeRef& bias);
/// x·W + b.
NodeRef linear(const NodeRef& x, const NodeRef& weight, const NodeRef& bias);

NodeRef sum(const NodeRef& a);
NodeRef mean(const NodeRef& a);
NodeRef reshape(const NodeRef& a, Shape shape);
/// Scalar node holding a(r, c).
NodeRef pick(const NodeRef& a, std::size_t r, std::size_t c);

NodeRef softmax_rows(const NodeRef& a);
NodeRef log_softmax_rows(const NodeRef& a);

/// Mean negative log-likelihood of `labels` under row-softmax of `logits`.
NodeRef cross_entropy(const NodeRef& logits, std::span<const int> labels);

/// Forward value is `hard`; backward passes the incoming gradient to `soft`
/// unchanged.
NodeRef straight_through(Tensor hard, const NodeRef& soft);

/// Accumulates d(root)/d(node) into every ancestor requiring a gradient.
/// Interior gradients are recomputed per call; leaf gradients accumulate.
void backward(const NodeRef& root);

/// Row-wise softmax on plain tensors, the same arithmetic softmax_rows uses.
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
/// C = A·B on plain tensors, the same loop order matmul uses.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Largest |analytic − central difference| / max(1, |analytic|) over all
/// coordinates of `point` for the scalar graph built by `f`.
double grad_check(const std::function<NodeRef(const NodeRef&)>& f, const Tensor& point,
                  double h = 1e-5);

}  // namespace nasc::ad
