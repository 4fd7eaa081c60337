// SPDX-License-Identifier: Apache-2.0
#pragma once

// Differentiable architecture search over a supernet. Weights and
// architecture logits alternate within each epoch (weights on the
// search-train half, logits on the search-valid half); the hardware term is
// either absent, a fixed penalty, or a constraint whose multiplier is raised
// or lowered by gradient ascent after every logit step.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nasc/data.hpp"
#include "nasc/errors.hpp"
#include "nasc/hardware.hpp"
#include "nasc/optim.hpp"
#include "nasc/search_space.hpp"
#include "nasc/supernet.hpp"

namespace nasc {

enum class Objective { kAccuracyOnly, kFixedLambda, kLearnableLambda };
/// Single-path samples one operator per layer; multi-path mixes all of them.
enum class SupernetMode { kSinglePath, kMultiPath };
/// Cost fed to the multiplier's ascent step: the step's sampled selection or
/// the current finalized architecture.
enum class LambdaSignal { kSampled, kFinalized };

std::string_view to_string(Objective o);
Objective objective_from_string(std::string_view s);
std::string_view to_string(SupernetMode m);
SupernetMode supernet_mode_from_string(std::string_view s);

struct SearchConfig {
  Objective objective = Objective::kLearnableLambda;
  SupernetMode mode = SupernetMode::kSinglePath;
  double target = 24.0;
  double lambda_fixed = 0.0;
  double lambda_init = 0.0;
  std::size_t epochs = 20;
  std::size_t warmup_epochs = 3;
  std::size_t batch_size = 64;
  double lr_w = 0.02;
  double momentum_w = 0.9;
  double wd_w = 3e-5;
  /// Joint L2 norm cap on the weight gradient; 0 disables.
  double grad_clip_w = 5.0;
  double lr_alpha = 0.05;
  double wd_alpha = 1e-3;
  double lr_lambda = 0.03;
  double tau_init = 5.0;
  double tau_min = 0.01;
  GumbelInput gumbel_input = GumbelInput::kLogProbabilities;
  LambdaSignal lambda_signal = LambdaSignal::kSampled;
  std::uint64_t seed = 0;

  /// Throws ConfigError on any broken invariant.
  void validate() const;

  static SearchConfig desk_default();
  /// 90 epochs with 10 weight-only, batch 128, weight lr 0.1, logits lr 1e-3,
  /// multiplier lr 5e-4.
  static SearchConfig full_preset();
};

nlohmann::json search_config_to_json(const SearchConfig& c);
/// Overlays the keys present in `j` onto `base`; unknown keys raise ConfigError.
SearchConfig search_config_from_json(const nlohmann::json& j, SearchConfig base = SearchConfig::desk_default());

struct HistoryRow {
  std::size_t epoch = 0;
  double valid_loss = 0.0;
  /// Predicted cost of finalize(α) at the end of the epoch.
  double pred_latency = 0.0;
  /// Mean predicted cost of the sampled paths used by the epoch's logit steps.
  double sampled_latency = 0.0;
  double lambda = 0.0;
  double tau = 0.0;
  bool operator==(const HistoryRow&) const = default;
};

/// Everything a search mutates.
struct SearchState {
  SearchState(const ArchSpace& space, std::size_t input_dim, std::size_t num_classes, const SearchConfig& config);

  Supernet net;
  ArchParams alpha;
  double lambda;
  double tau;
  std::size_t epoch = 0;
  std::mt19937_64 rng;
  std::vector<HistoryRow> history;
  /// Selection drawn for the current step; the fixed first row is forced.
  GumbelSample current;
  MomentumSgd w_opt;
  Adam alpha_opt;
};

struct Batch {
  Tensor features;
  std::vector<int> labels;
};

struct ObjectiveTerms {
  ad::NodeRef total;
  ad::NodeRef task;
  /// Null in accuracy-only mode.
  ad::NodeRef latency;
};

/// Draws fresh Gumbel noise into state.current.
void sample_selection(SearchState& state, const SearchConfig& config);

/// Task loss plus the configured hardware term, built over the logits node
/// with the step's current selection (single-path) or the softmax mixture
/// (multi-path).
ObjectiveTerms objective_value(SearchState& state, const Batch& batch, const Predictor* predictor,
                               const SearchConfig& config);

/// Multi-path objective over an explicit logits node: softmax-mixture
/// forward plus the hardware term on the mixture encoding. Differentiable in
/// α everywhere.
ObjectiveTerms relaxed_objective(const Supernet& net, const ad::NodeRef& alpha, const Batch& batch,
                                 const Predictor* predictor, const SearchConfig& config, double lambda);

/// One momentum step on the supernet weights; returns the task loss.
double step_w(SearchState& state, const Batch& batch, const SearchConfig& config, double lr);
/// One Adam step on the logits; returns the task loss.
double step_alpha(SearchState& state, const Batch& batch, const Predictor* predictor, const SearchConfig& config);
/// λ + η·(lat/target − 1).
double step_lambda(double lambda, double latency, double target, double lr_lambda);
/// Applies the ascent step with the predicted cost of the current selection.
/// Returns that cost.
double step_lambda(SearchState& state, const Predictor& predictor, const SearchConfig& config);
/// max(tau_min, tau_init·exp(−r·epoch)) with τ(epochs − 1) = tau_min.
double anneal_tau(std::size_t epoch, const SearchConfig& config);

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::vector<HistoryRow> history)
      : Error(what), history_(std::move(history)) {}
  const std::vector<HistoryRow>& history() const { return history_; }

 private:
  std::vector<HistoryRow> history_;
};

struct SearchResult {
  Architecture architecture;
  Tensor alpha;
  std::vector<HistoryRow> history;
  double final_latency = 0.0;
  double final_lambda = 0.0;
  double wall_seconds = 0.0;
};

/// Warm-up epochs update weights only; later epochs alternate weights and
/// logits. Deterministic given the config seed.
SearchResult run_search(const SearchConfig& config, const ArchSpace& space, const DataSplit& data,
                        const Predictor* predictor);

/// Header `epoch,valid_loss,pred_latency_ms,lambda,tau,sampled_latency_ms`,
/// preceded by `# <comment>` when a comment is given.
std::string history_to_csv(const std::vector<HistoryRow>& history, const std::string& comment = {});

}  // namespace nasc
