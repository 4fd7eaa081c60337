// SPDX-License-Identifier: Apache-2.0
#include "nasc/supernet.hpp"

#include <cmath>

#include "nasc/errors.hpp"

namespace nasc {

namespace {

DenseParams init_dense(std::size_t in, std::size_t out, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Tensor w({in, out});
  for (auto& v : w.data()) v = normal(rng);
  return {ad::parameter(std::move(w)), ad::parameter(Tensor({1, out}))};
}

BlockParams init_block(std::size_t width, int ratio, std::mt19937_64& rng) {
  const std::size_t hidden = width * static_cast<std::size_t>(ratio);
  BlockParams b;
  b.expand = init_dense(width, hidden, std::sqrt(2.0 / static_cast<double>(width)), rng);
  // Small projection keeps the residual stack near identity at init.
  b.project = init_dense(hidden, width, 0.5 / std::sqrt(static_cast<double>(hidden)), rng);
  return b;
}

DenseParams copy_dense(const DenseParams& d) {
  return {ad::parameter(d.weight->value()), ad::parameter(d.bias->value())};
}

void check_input(const ad::NodeRef& x, std::size_t input_dim) {
  const auto& s = x->value().shape();
  if (s.size() != 2 || s[1] != input_dim) {
    throw ConfigError("input shape " + ad::shape_string(s) + " does not match stem input width " +
                      std::to_string(input_dim));
  }
}

std::size_t selected_op(const Tensor& pbar, std::size_t layer) {
  std::size_t ones = 0, index = 0;
  for (std::size_t k = 0; k < pbar.cols(); ++k) {
    const double v = pbar.at(layer, k);
    if (v == 1.0) {
      ++ones;
      index = k;
    } else if (v != 0.0) {
      ones = 2;
      break;
    }
  }
  if (ones != 1) throw ConfigError("selection row " + std::to_string(layer) + " is not one-hot");
  return index;
}

ad::NodeRef head_forward(const DenseParams& head, ad::NodeRef h, const ForwardOptions& options) {
  if (options.dropout > 0.0 && options.rng != nullptr) {
    std::bernoulli_distribution keep(1.0 - options.dropout);
    Tensor mask(h->value().shape());
    const double s = 1.0 / (1.0 - options.dropout);
    for (auto& v : mask.data()) v = keep(*options.rng) ? s : 0.0;
    h = ad::mul(h, ad::constant(std::move(mask)));
  }
  return ad::linear(h, head.weight, head.bias);
}

}  // namespace

ad::NodeRef apply_operator(const OperatorSpec& op, const BlockParams* block, const ad::NodeRef& x) {
  if (op.kind == OpKind::kSkipConnect) return x;
  if (block == nullptr) throw ContractError("operator " + op.label + " has no weights");
  ad::NodeRef h = ad::linear(x, block->expand.weight, block->expand.bias);
  h = op.activation == Activation::kRelu6 ? ad::relu6(h) : ad::relu(h);
  return ad::add(x, ad::linear(h, block->project.weight, block->project.bias));
}

// ---------------------------------------------------------------------------
// Supernet

Supernet::Supernet(ArchSpace space, std::size_t input_dim, std::size_t num_classes, std::uint64_t seed)
    : space_(std::move(space)), input_dim_(input_dim), num_classes_(num_classes) {
  space_.validate();
  if (input_dim_ == 0 || num_classes_ == 0) throw ConfigError("supernet: input and class counts must be positive");
  std::mt19937_64 rng(seed);
  const std::size_t C = space_.width;
  stem_ = init_dense(input_dim_, C, 1.0 / std::sqrt(static_cast<double>(input_dim_)), rng);
  blocks_.resize(space_.num_layers);
  for (std::size_t l = 0; l < space_.num_layers; ++l) {
    blocks_[l].resize(space_.ops_per_layer());
    for (std::size_t k = 0; k < space_.ops_per_layer(); ++k) {
      if (l == 0 && space_.first_layer_fixed && k != space_.fixed_first_op) continue;
      const auto& op = space_.menu[k];
      if (op.kind == OpKind::kExpandBlock) blocks_[l][k] = init_block(C, op.expansion_ratio, rng);
    }
  }
  head_ = init_dense(C, num_classes_, 1.0 / std::sqrt(static_cast<double>(C)), rng);
}

const BlockParams* Supernet::block(std::size_t layer, std::size_t op) const {
  const auto& b = blocks_.at(layer).at(op);
  return b ? &*b : nullptr;
}

std::vector<ad::NodeRef> Supernet::parameters() const {
  std::vector<ad::NodeRef> out{stem_.weight, stem_.bias};
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    for (std::size_t k = 0; k < blocks_[l].size(); ++k) {
      auto ps = operator_parameters(l, k);
      out.insert(out.end(), ps.begin(), ps.end());
    }
  }
  out.push_back(head_.weight);
  out.push_back(head_.bias);
  return out;
}

std::vector<ad::NodeRef> Supernet::operator_parameters(std::size_t layer, std::size_t op) const {
  const BlockParams* b = block(layer, op);
  if (b == nullptr) return {};
  return {b->expand.weight, b->expand.bias, b->project.weight, b->project.bias};
}

void Supernet::zero_grad() const {
  for (const auto& p : parameters()) p->zero_grad();
}

ad::NodeRef supernet_forward(const Supernet& net, const ad::NodeRef& x, const ad::NodeRef& pbar,
                             ForwardStats* stats, const ForwardOptions& options) {
  const ArchSpace& space = net.space();
  check_input(x, net.input_dim());
  if (pbar->value().shape() != ad::Shape{space.num_layers, space.ops_per_layer()}) {
    throw ConfigError("selection matrix " + ad::shape_string(pbar->value().shape()) + " does not match space " +
                      ad::shape_string({space.num_layers, space.ops_per_layer()}));
  }
  ad::NodeRef h = ad::linear(x, net.stem().weight, net.stem().bias);
  for (std::size_t l = 0; l < space.num_layers; ++l) {
    const std::size_t k = selected_op(pbar->value(), l);
    ad::NodeRef out = apply_operator(space.menu[k], net.block(l, k), h);
    h = ad::mul(ad::pick(pbar, l, k), out);
    if (stats) {
      ++stats->executed_ops;
      ++stats->retained_activations;
    }
  }
  return head_forward(net.head(), h, options);
}

ad::NodeRef multipath_forward(const Supernet& net, const ad::NodeRef& x, const ad::NodeRef& alpha,
                              ForwardStats* stats, const ForwardOptions& options) {
  const ArchSpace& space = net.space();
  check_input(x, net.input_dim());
  if (alpha->value().shape() != ad::Shape{space.num_layers, space.ops_per_layer()}) {
    throw ConfigError("architecture parameters " + ad::shape_string(alpha->value().shape()) +
                      " do not match space");
  }
  ad::NodeRef probs = ad::softmax_rows(alpha);
  ad::NodeRef h = ad::linear(x, net.stem().weight, net.stem().bias);
  for (std::size_t l = 0; l < space.num_layers; ++l) {
    if (l == 0 && space.first_layer_fixed) {
      const std::size_t k = space.fixed_first_op;
      h = apply_operator(space.menu[k], net.block(l, k), h);
      if (stats) {
        ++stats->executed_ops;
        ++stats->retained_activations;
      }
      continue;
    }
    ad::NodeRef acc;
    for (std::size_t k = 0; k < space.ops_per_layer(); ++k) {
      ad::NodeRef term = ad::mul(ad::pick(probs, l, k), apply_operator(space.menu[k], net.block(l, k), h));
      acc = acc ? ad::add(acc, term) : term;
      if (stats) {
        ++stats->executed_ops;
        ++stats->retained_activations;
      }
    }
    h = acc;
  }
  return head_forward(net.head(), h, options);
}

// ---------------------------------------------------------------------------
// StandaloneNet

StandaloneNet::StandaloneNet(const ArchSpace& space, Architecture arch, std::size_t input_dim,
                             std::size_t num_classes, std::uint64_t seed)
    : StandaloneNet(from_supernet(Supernet(space, input_dim, num_classes, seed), arch)) {}

StandaloneNet StandaloneNet::from_supernet(const Supernet& net, const Architecture& arch) {
  const ArchSpace& space = net.space();
  encode(arch, space);
  if (space.first_layer_fixed && arch.ops[0] != space.fixed_first_op) {
    throw EncodingError("architecture does not use the space's fixed first operator");
  }
  StandaloneNet s;
  s.arch_ = arch;
  s.stem_ = copy_dense(net.stem());
  s.head_ = copy_dense(net.head());
  for (std::size_t l = 0; l < arch.ops.size(); ++l) {
    const std::size_t k = arch.ops[l];
    s.ops_.push_back(space.menu[k]);
    const BlockParams* b = net.block(l, k);
    if (b) {
      s.blocks_.push_back(BlockParams{copy_dense(b->expand), copy_dense(b->project)});
    } else {
      s.blocks_.emplace_back(std::nullopt);
    }
  }
  return s;
}

ad::NodeRef StandaloneNet::forward(const ad::NodeRef& x, const ForwardOptions& options) const {
  check_input(x, stem_.weight->value().rows());
  ad::NodeRef h = ad::linear(x, stem_.weight, stem_.bias);
  for (std::size_t l = 0; l < ops_.size(); ++l) {
    h = apply_operator(ops_[l], blocks_[l] ? &*blocks_[l] : nullptr, h);
  }
  return head_forward(head_, h, options);
}

std::vector<ad::NodeRef> StandaloneNet::parameters() const {
  std::vector<ad::NodeRef> out{stem_.weight, stem_.bias};
  for (const auto& b : blocks_) {
    if (!b) continue;
    out.insert(out.end(), {b->expand.weight, b->expand.bias, b->project.weight, b->project.bias});
  }
  out.push_back(head_.weight);
  out.push_back(head_.bias);
  return out;
}

std::size_t StandaloneNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p->value().size();
  return n;
}

}  // namespace nasc
