// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "nasc/autodiff.hpp"
#include "nasc/search_space.hpp"

namespace nasc {

struct DenseParams {
  ad::NodeRef weight;  // in×out
  ad::NodeRef bias;    // 1×out
};

struct BlockParams {
  DenseParams expand;
  DenseParams project;
};

/// Counters filled by the forward passes.
struct ForwardStats {
  std::size_t executed_ops = 0;
  /// Operator outputs held by the graph for the backward pass.
  std::size_t retained_activations = 0;
};

/// Training-time extras. Dropout sits before the classifier head and is only
/// applied when `dropout > 0` and an rng is supplied.
struct ForwardOptions {
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;
};

/// Applies one operator to x. `block` must be non-null for ExpandBlock.
ad::NodeRef apply_operator(const OperatorSpec& op, const BlockParams* block, const ad::NodeRef& x);

/// Weights for every (layer, operator) pair plus a linear stem and head.
class Supernet {
 public:
  Supernet(ArchSpace space, std::size_t input_dim, std::size_t num_classes, std::uint64_t seed);

  const ArchSpace& space() const { return space_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t num_classes() const { return num_classes_; }

  const DenseParams& stem() const { return stem_; }
  const DenseParams& head() const { return head_; }
  /// Null for parameter-free operators.
  const BlockParams* block(std::size_t layer, std::size_t op) const;

  std::vector<ad::NodeRef> parameters() const;
  std::vector<ad::NodeRef> operator_parameters(std::size_t layer, std::size_t op) const;
  void zero_grad() const;

 private:
  ArchSpace space_;
  std::size_t input_dim_;
  std::size_t num_classes_;
  DenseParams stem_;
  DenseParams head_;
  std::vector<std::vector<std::optional<BlockParams>>> blocks_;
};

/// Single-path forward. `pbar` holds a one-hot row per layer; layer l runs
/// only the selected operator and scales its output by the gate pbar(l, k),
/// which is where gradients reach the architecture parameters.
ad::NodeRef supernet_forward(const Supernet& net, const ad::NodeRef& x, const ad::NodeRef& pbar,
                             ForwardStats* stats = nullptr, const ForwardOptions& options = {});

/// Multi-path forward: each layer outputs the softmax(α)-weighted sum of all
/// operator outputs. A fixed first layer runs its fixed operator alone.
ad::NodeRef multipath_forward(const Supernet& net, const ad::NodeRef& x, const ad::NodeRef& alpha,
                              ForwardStats* stats = nullptr, const ForwardOptions& options = {});

/// A stand-alone network for one architecture. It owns copies of exactly the
/// weights its operators use and runs them without gates.
class StandaloneNet {
 public:
  StandaloneNet(const ArchSpace& space, Architecture arch, std::size_t input_dim, std::size_t num_classes,
                std::uint64_t seed);
  /// Copies the selected operators' weights out of a supernet.
  static StandaloneNet from_supernet(const Supernet& net, const Architecture& arch);

  ad::NodeRef forward(const ad::NodeRef& x, const ForwardOptions& options = {}) const;
  std::vector<ad::NodeRef> parameters() const;
  const Architecture& architecture() const { return arch_; }
  std::size_t parameter_count() const;

 private:
  StandaloneNet() = default;

  std::vector<OperatorSpec> ops_;
  Architecture arch_;
  DenseParams stem_;
  DenseParams head_;
  std::vector<std::optional<BlockParams>> blocks_;
};

}  // namespace nasc
