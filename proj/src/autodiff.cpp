// SPDX-License-Identifier: Apache-2.0
#include "nasc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "nasc/errors.hpp"

namespace nasc::ad {

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}

bool is_broadcast_scalar(const Tensor& t) { return t.size() == 1; }

// Resolves the result shape of an element-wise binary op.
Shape binary_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return a.shape();
  if (is_broadcast_scalar(b)) return a.shape();
  if (is_broadcast_scalar(a)) return b.shape();
  throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                       shape_string(b.shape()));
}

// Sums `g` down to the shape of `target` when target was broadcast.
Tensor reduce_to(const Tensor& g, const Tensor& target) {
  if (g.shape() == target.shape()) return g;
  Tensor out(target.shape());
  double s = 0.0;
  for (double v : g.data()) s += v;
  out[0] = s;
  return out;
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <typename F>
Tensor zip(const Shape& shape, const Tensor& a, const Tensor& b, F f) {
  Tensor out(shape);
  const bool sa = a.size() == 1 && out.size() != 1;
  const bool sb = b.size() == 1 && out.size() != 1;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[sa ? 0 : i], b[sb ? 0 : i]);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (product(shape_) != data_.size()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
  }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 1) return 1;
  if (shape_.size() == 2) return shape_[0];
  throw DimensionError("rows() on rank-" + std::to_string(shape_.size()) + " tensor");
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 1) return shape_[0];
  if (shape_.size() == 2) return shape_[1];
  throw DimensionError("cols() on rank-" + std::to_string(shape_.size()) + " tensor");
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Node

const Tensor& Node::grad() const {
  if (!has_grad_ && grad_.shape() != value_.shape()) grad_ = Tensor::zeros_like(value_);
  return grad_;
}

void Node::zero_grad() {
  has_grad_ = false;
  grad_ = Tensor();
}

void Node::scale_grad(double factor) {
  if (!has_grad_) return;
  for (auto& v : grad_.data()) v *= factor;
}

void Node::accumulate_grad(const Tensor& g) {
  if (g.shape() != value_.shape()) {
    throw DimensionError("gradient shape " + shape_string(g.shape()) + " does not match value shape " +
                         shape_string(value_.shape()) + " at op " + op_);
  }
  if (!has_grad_) {
    grad_ = g;
    has_grad_ = true;
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) grad_[i] += g[i];
}

void Node::accumulate_grad_at(std::size_t index, double g) {
  if (!has_grad_) {
    grad_ = Tensor::zeros_like(value_);
    has_grad_ = true;
  }
  grad_[index] += g;
}

NodeRef parameter(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value_ = std::move(value);
  n->requires_grad_ = true;
  n->op_ = "parameter";
  return n;
}

NodeRef constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value_ = std::move(value);
  n->requires_grad_ = false;
  n->op_ = "constant";
  return n;
}

NodeRef make_node(std::string op, Tensor value, std::vector<NodeRef> parents,
                  std::function<void(Node&)> backward) {
  if (!value.all_finite()) throw DomainError(op + ": non-finite value produced");
  auto n = std::make_shared<Node>();
  n->value_ = std::move(value);
  n->op_ = std::move(op);
  n->requires_grad_ = std::any_of(parents.begin(), parents.end(),
                                  [](const NodeRef& p) { return p->requires_grad(); });
  n->parents_ = std::move(parents);
  if (n->requires_grad_) n->backward_ = std::move(backward);
  return n;
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return out;
}

NodeRef matmul(const NodeRef& a, const NodeRef& b) {
  return make_node("matmul", matmul(a->value(), b->value()), {a, b}, [](Node& self) {
    const auto& A = self.parents()[0];
    const auto& B = self.parents()[1];
    const Tensor& g = self.grad();
    const std::size_t m = A->value().rows(), k = A->value().cols(), n = B->value().cols();
    if (A->requires_grad()) {
      // dA = g·Bᵀ
      Tensor bt({n, k});
      const double* pb = B->value().data().data();
      for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t j = 0; j < n; ++j) bt.at(j, p) = pb[p * n + j];
      }
      Tensor ga({m, k});
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data().data() + i * n;
        double* arow = ga.data().data() + i * k;
        for (std::size_t j = 0; j < n; ++j) {
          const double gv = grow[j];
          const double* btrow = bt.data().data() + j * k;
          for (std::size_t p = 0; p < k; ++p) arow[p] += gv * btrow[p];
        }
      }
      A->accumulate_grad(ga);
    }
    if (B->requires_grad()) {
      // dB = Aᵀ·g
      Tensor gb({k, n});
      const double* pa = A->value().data().data();
      double* po = gb.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data().data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = pa[i * k + p];
          if (av == 0.0) continue;
          double* orow = po + p * n;
          for (std::size_t j = 0; j < n; ++j) orow[j] += av * grow[j];
        }
      }
      B->accumulate_grad(gb);
    }
  });
}

// ---------------------------------------------------------------------------
// Element-wise

NodeRef add(const NodeRef& a, const NodeRef& b) {
  const Shape shape = binary_shape("add", a->value(), b->value());
  return make_node("add", zip(shape, a->value(), b->value(), [](double x, double y) { return x + y; }), {a, b},
                   [](Node& self) {
                     for (const auto& p : self.parents()) {
                       if (p->requires_grad()) p->accumulate_grad(reduce_to(self.grad(), p->value()));
                     }
                   });
}

NodeRef sub(const NodeRef& a, const NodeRef& b) {
  const Shape shape = binary_shape("sub", a->value(), b->value());
  return make_node("sub", zip(shape, a->value(), b->value(), [](double x, double y) { return x - y; }), {a, b},
                   [](Node& self) {
                     const auto& A = self.parents()[0];
                     const auto& B = self.parents()[1];
                     if (A->requires_grad()) A->accumulate_grad(reduce_to(self.grad(), A->value()));
                     if (B->requires_grad()) {
                       B->accumulate_grad(reduce_to(map(self.grad(), [](double v) { return -v; }), B->value()));
                     }
                   });
}

NodeRef mul(const NodeRef& a, const NodeRef& b) {
  const Shape shape = binary_shape("mul", a->value(), b->value());
  return make_node("mul", zip(shape, a->value(), b->value(), [](double x, double y) { return x * y; }), {a, b},
                   [](Node& self) {
                     const auto& A = self.parents()[0];
                     const auto& B = self.parents()[1];
                     const Tensor& g = self.grad();
                     if (A->requires_grad()) {
                       A->accumulate_grad(reduce_to(zip(g.shape(), g, B->value(), std::multiplies<>()), A->value()));
                     }
                     if (B->requires_grad()) {
                       B->accumulate_grad(reduce_to(zip(g.shape(), g, A->value(), std::multiplies<>()), B->value()));
                     }
                   });
}

NodeRef relu(const NodeRef& a) {
  return make_node("relu", map(a->value(), [](double v) { return v > 0.0 ? v : 0.0; }), {a}, [](Node& self) {
    const auto& A = self.parents()[0];
    A->accumulate_grad(zip(self.grad().shape(), self.grad(), A->value(),
                           [](double g, double x) { return x > 0.0 ? g : 0.0; }));
  });
}

NodeRef relu6(const NodeRef& a) {
  return make_node("relu6", map(a->value(), [](double v) { return std::clamp(v, 0.0, 6.0); }), {a},
                   [](Node& self) {
                     const auto& A = self.parents()[0];
                     A->accumulate_grad(zip(self.grad().shape(), self.grad(), A->value(),
                                            [](double g, double x) { return x > 0.0 && x < 6.0 ? g : 0.0; }));
                   });
}

NodeRef exp(const NodeRef& a) {
  return make_node("exp", map(a->value(), [](double v) { return std::exp(v); }), {a}, [](Node& self) {
    const auto& A = self.parents()[0];
    A->accumulate_grad(zip(self.grad().shape(), self.grad(), self.value(), std::multiplies<>()));
  });
}

NodeRef log(const NodeRef& a) {
  for (double v : a->value().data()) {
    if (!(v > 0.0)) throw DomainError("log: non-positive entry " + std::to_string(v));
  }
  return make_node("log", map(a->value(), [](double v) { return std::log(v); }), {a}, [](Node& self) {
    const auto& A = self.parents()[0];
    A->accumulate_grad(zip(self.grad().shape(), self.grad(), A->value(), std::divides<>()));
  });
}

NodeRef scale(const NodeRef& a, double factor) {
  return make_node("scale", map(a->value(), [factor](double v) { return v * factor; }), {a},
                   [factor](Node& self) {
                     self.parents()[0]->accumulate_grad(map(self.grad(), [factor](double g) { return g * factor; }));
                   });
}

NodeRef add_bias(const NodeRef& a, const NodeRef& bias) {
  const Tensor& x = a->value();
  const Tensor& b = bias->value();
  if (x.shape().size() != 2 || b.size() != x.cols()) {
    throw DimensionError("add_bias: bias " + shape_string(b.shape()) + " does not fit " + shape_string(x.shape()));
  }
  Tensor out = x;
  const std::size_t n = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) += b[j];
  }
  return make_node("add_bias", std::move(out), {a, bias}, [](Node& self) {
    const auto& A = self.parents()[0];
    const auto& B = self.parents()[1];
    const Tensor& g = self.grad();
    if (A->requires_grad()) A->accumulate_grad(g);
    if (B->requires_grad()) {
      Tensor gb(B->value().shape());
      const std::size_t n = g.cols();
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < n; ++j) gb[j] += g.at(i, j);
      }
      B->accumulate_grad(gb);
    }
  });
}

NodeRef linear(const NodeRef& x, const NodeRef& weight, const NodeRef& bias) {
  return add_bias(matmul(x, weight), bias);
}

NodeRef sum(const NodeRef& a) {
  double s = 0.0;
  for (double v : a->value().data()) s += v;
  return make_node("sum", Tensor::scalar(s), {a}, [](Node& self) {
    const auto& A = self.parents()[0];
    A->accumulate_grad(Tensor(A->value().shape(), self.grad()[0]));
  });
}

NodeRef mean(const NodeRef& a) { return scale(sum(a), 1.0 / static_cast<double>(a->value().size())); }

NodeRef reshape(const NodeRef& a, Shape shape) {
  Tensor out(shape, a->value().vec());
  return make_node("reshape", std::move(out), {a}, [](Node& self) {
    const auto& A = self.parents()[0];
    A->accumulate_grad(Tensor(A->value().shape(), self.grad().vec()));
  });
}

NodeRef pick(const NodeRef& a, std::size_t r, std::size_t c) {
  const Tensor& v = a->value();
  if (r >= v.rows() || c >= v.cols()) {
    throw IndexError("pick: (" + std::to_string(r) + ", " + std::to_string(c) + ") outside " +
                     shape_string(v.shape()));
  }
  const std::size_t index = r * v.cols() + c;
  return make_node("pick", Tensor::scalar(v[index]), {a},
                   [index](Node& self) { self.parents()[0]->accumulate_grad_at(index, self.grad()[0]); });
}

// ---------------------------------------------------------------------------
// Softmax family

Tensor softmax_rows(const Tensor& a) {
  Tensor out(a.shape());
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double mx = a.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, a.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out.at(i, j) = std::exp(a.at(i, j) - mx);
      z += out.at(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) /= z;
  }
  return out;
}

Tensor log_softmax_rows(const Tensor& a) {
  Tensor out(a.shape());
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double mx = a.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, a.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(a.at(i, j) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = a.at(i, j) - lse;
  }
  return out;
}

NodeRef softmax_rows(const NodeRef& a) {
  if (!a->value().all_finite()) throw DomainError("softmax_rows: non-finite input");
  return make_node("softmax_rows", softmax_rows(a->value()), {a}, [](Node& self) {
    const Tensor& p = self.value();
    const Tensor& g = self.grad();
    Tensor ga(p.shape());
    const std::size_t n = p.cols();
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g.at(i, j) * p.at(i, j);
      for (std::size_t j = 0; j < n; ++j) ga.at(i, j) = p.at(i, j) * (g.at(i, j) - dot);
    }
    self.parents()[0]->accumulate_grad(ga);
  });
}

NodeRef log_softmax_rows(const NodeRef& a) {
  if (!a->value().all_finite()) throw DomainError("log_softmax_rows: non-finite input");
  return make_node("log_softmax_rows", log_softmax_rows(a->value()), {a}, [](Node& self) {
    const Tensor& y = self.value();
    const Tensor& g = self.grad();
    Tensor ga(y.shape());
    const std::size_t n = y.cols();
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < n; ++j) gs += g.at(i, j);
      for (std::size_t j = 0; j < n; ++j) ga.at(i, j) = g.at(i, j) - std::exp(y.at(i, j)) * gs;
    }
    self.parents()[0]->accumulate_grad(ga);
  });
}

NodeRef cross_entropy(const NodeRef& logits, std::span<const int> labels) {
  const Tensor& z = logits->value();
  if (z.shape().size() != 2 || labels.size() != z.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_string(z.shape()));
  }
  const std::size_t classes = z.cols();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw IndexError("cross_entropy: label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                       " outside [0, " + std::to_string(classes) + ")");
    }
  }
  const Tensor logp = log_softmax_rows(z);
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) loss -= logp.at(i, static_cast<std::size_t>(labels[i]));
  loss /= static_cast<double>(labels.size());
  std::vector<int> owned(labels.begin(), labels.end());
  return make_node("cross_entropy", Tensor::scalar(loss), {logits},
                   [logp, owned = std::move(owned)](Node& self) {
                     const double g = self.grad()[0];
                     const std::size_t b = logp.rows();
                     Tensor gz(logp.shape());
                     for (std::size_t i = 0; i < b; ++i) {
                       for (std::size_t j = 0; j < logp.cols(); ++j) {
                         const double onehot = static_cast<std::size_t>(owned[i]) == j ? 1.0 : 0.0;
                         gz.at(i, j) = g * (std::exp(logp.at(i, j)) - onehot) / static_cast<double>(b);
                       }
                     }
                     self.parents()[0]->accumulate_grad(gz);
                   });
}

NodeRef straight_through(Tensor hard, const NodeRef& soft) {
  if (hard.shape() != soft->value().shape()) {
    throw DimensionError("straight_through: hard " + shape_string(hard.shape()) + " vs soft " +
                         shape_string(soft->value().shape()));
  }
  return make_node("straight_through", std::move(hard), {soft},
                   [](Node& self) { self.parents()[0]->accumulate_grad(self.grad()); });
}

// ---------------------------------------------------------------------------
// Backward

void backward(const NodeRef& root) {
  if (root->value().size() != 1) {
    throw ContractError("backward: root must be scalar, got shape " + shape_string(root->value().shape()));
  }
  // Iterative post-order DFS yields a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents_.size()) {
      Node* p = node->parents_[next++].get();
      if (p->requires_grad_ && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (!n->is_leaf()) n->zero_grad();
  }
  root->accumulate_grad(Tensor(root->value().shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_ && n->has_grad_) n->backward_(*n);
  }
}

double grad_check(const std::function<NodeRef(const NodeRef&)>& f, const Tensor& point, double h) {
  auto x = parameter(point);
  auto y = f(x);
  backward(y);
  const Tensor analytic = x->grad();
  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + h;
    const double up = f(constant(probe))->value()[0];
    probe[i] = point[i] - h;
    const double down = f(constant(probe))->value()[0];
    probe[i] = point[i];
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i])));
  }
  return worst;
}

}  // namespace nasc::ad
