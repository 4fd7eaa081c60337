// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nasc/autodiff.hpp"

namespace nasc {

using ad::Tensor;

enum class OpKind { kSkipConnect, kExpandBlock };
enum class Activation { kRelu, kRelu6 };

/// One candidate operator. ExpandBlock is dense expand (C→eC), activation,
/// dense project (eC→C), plus the residual input; SkipConnect is identity.
struct OperatorSpec {
  OpKind kind = OpKind::kSkipConnect;
  int expansion_ratio = 0;
  Activation activation = Activation::kRelu;
  std::string label;

  static OperatorSpec skip();
  static OperatorSpec expand(int ratio, Activation activation = Activation::kRelu);
  /// Inverse of `label`; throws ConfigError on unknown labels.
  static OperatorSpec from_label(std::string_view label);

  std::size_t parameter_count(std::size_t width) const;
  bool operator==(const OperatorSpec&) const = default;
};

/// {skip, e1, e2, e4}.
std::vector<OperatorSpec> desk_menu();
/// {skip, e1, e2, e3, e4, e6, e6 with relu6}.
std::vector<OperatorSpec> full_menu();

struct ArchSpace {
  std::size_t num_layers = 9;
  std::vector<OperatorSpec> menu = desk_menu();
  std::size_t width = 32;
  bool first_layer_fixed = true;
  std::size_t fixed_first_op = 1;

  std::size_t ops_per_layer() const { return menu.size(); }
  std::size_t searchable_layers() const { return first_layer_fixed ? num_layers - 1 : num_layers; }
  /// K^(searchable layers), as a double since the full space overflows 64 bits.
  double space_size() const;
  std::size_t op_index(std::string_view label) const;
  /// Throws ConfigError when the space is malformed.
  void validate() const;
  bool operator==(const ArchSpace&) const = default;

  /// 8 searchable layers after a fixed ExpandBlock e=1, K=4, width 32.
  static ArchSpace desk_default();
  /// 22 layers with the first fixed, K=7.
  static ArchSpace full_preset();
};

struct Architecture {
  std::vector<std::size_t> ops;
  bool operator==(const Architecture&) const = default;
};

/// Row-wise one-hot L×K matrix of `arch`. Throws EncodingError when an op
/// index is out of range or the layer count disagrees with the space.
Tensor encode(const Architecture& arch, const ArchSpace& space);
/// Inverse of encode; throws EncodingError unless every row is one-hot.
Architecture decode(const Tensor& encoding, const ArchSpace& space);
Architecture random_architecture(const ArchSpace& space, std::mt19937_64& rng);

/// Real-valued L×K architecture logits α; a trainable leaf.
class ArchParams {
 public:
  explicit ArchParams(Tensor alpha);
  static ArchParams zeros(const ArchSpace& space);

  const Tensor& values() const { return node_->value(); }
  const ad::NodeRef& node() const { return node_; }

 private:
  ad::NodeRef node_;
};

/// Row-softmax of α: the per-layer operator probabilities.
Tensor layer_probs(const Tensor& alpha);
/// Probability that `arch` is drawn when each layer samples independently
/// from layer_probs(alpha).
double path_prob(const Architecture& arch, const Tensor& alpha);

/// What is perturbed by the Gumbel noise before tempering. Log-probabilities
/// give argmax draws distributed exactly as layer_probs; the raw
/// probabilities form is kept for comparison runs.
enum class GumbelInput { kLogProbabilities, kProbabilities };

struct GumbelSample {
  Tensor noise;  // G
  Tensor soft;   // P̂
  Tensor hard;   // P̄
};

Tensor sample_gumbel_noise(std::size_t rows, std::size_t cols, std::mt19937_64& rng);
/// P̂ = softmax((input(α) + G) / τ) as a graph node.
ad::NodeRef relaxed_selection(const ad::NodeRef& alpha, const Tensor& noise, double tau,
                              GumbelInput input = GumbelInput::kLogProbabilities);
/// Per-row argmax one-hot; ties go to the lowest index.
Tensor hard_onehot(const Tensor& soft);
/// Draws G, returns (G, P̂, P̄). Throws ParameterError when tau <= 0.
GumbelSample gumbel_sample(const Tensor& alpha, double tau, std::mt19937_64& rng,
                           GumbelInput input = GumbelInput::kLogProbabilities);

/// Strongest operator per layer (argmax α, ties to the lowest index), with
/// the fixed first layer respected.
Architecture finalize(const Tensor& alpha, const ArchSpace& space);

// Architecture file: {"layers": [{"op": label}...], "space": {...}}.
nlohmann::json space_to_json(const ArchSpace& space);
ArchSpace space_from_json(const nlohmann::json& j);
nlohmann::json architecture_to_json(const Architecture& arch, const ArchSpace& space);
/// Returns the architecture and the space it was declared in.
std::pair<Architecture, ArchSpace> architecture_from_json(const nlohmann::json& j);
/// Encoding rows as comma-separated 0/1 values.
std::string encoding_csv(const Tensor& encoding);

}  // namespace nasc
