// SPDX-License-Identifier: Apache-2.0
#pragma once

// Stand-alone retraining of searched architectures and the two search
// experiments built on it: a fixed-multiplier sweep and a multi-target run.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nasc/data.hpp"
#include "nasc/hardware.hpp"
#include "nasc/search.hpp"
#include "nasc/search_space.hpp"

namespace nasc {

struct EvalConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  double lr = 0.05;
  /// Learning rate at the start of the linear warm-up.
  double warmup_start_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 4e-5;
  /// Joint L2 norm cap on the gradient; 0 disables.
  double grad_clip = 5.0;
  std::size_t warmup_epochs = 2;
  double dropout = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
  static EvalConfig desk_default();
  /// 360 epochs, batch 1024, lr 0.5 after a 5-epoch ramp from 0.1.
  static EvalConfig full_preset();
};

nlohmann::json eval_config_to_json(const EvalConfig& c);
EvalConfig eval_config_from_json(const nlohmann::json& j, EvalConfig base = EvalConfig::desk_default());

struct EvalReport {
  std::string arch_id;
  /// NaN when the architecture was not searched against a target.
  double target = 0.0;
  std::uint64_t seed = 0;
  double train_accuracy = 0.0;
  double top1 = 0.0;
  double pred_latency = 0.0;
  double meas_latency = 0.0;
  double wall_seconds = 0.0;
};

/// Op indices as a digit string, one digit per layer.
std::string architecture_id(const Architecture& arch);

/// Fraction of rows whose argmax logit equals the label.
double accuracy(const StandaloneNet& net, const Dataset& data);

/// Trains the architecture from scratch on data.train with momentum SGD
/// (linear warm-up, cosine decay, dropout before the head) and scores it on
/// data.valid. Costs come from `predictor` and one measurement on a copy of
/// `device`; either may be null, leaving NaN.
EvalReport train_standalone(const Architecture& arch, const ArchSpace& space, const DataSplit& data,
                            const EvalConfig& config, const Predictor* predictor,
                            const SyntheticDevice* device);

/// Everything an experiment needs besides its own knobs.
struct ExperimentInputs {
  ArchSpace space;
  DataSplit search_data;
  DataSplit eval_data;
  const Predictor* predictor = nullptr;
  const SyntheticDevice* device = nullptr;
};

struct SweepRow {
  double lambda = 0.0;
  Architecture architecture;
  SearchResult search;
  EvalReport report;
  bool all_skip = false;
};

/// One fixed-multiplier search and one stand-alone evaluation per λ.
std::vector<SweepRow> sweep_lambda(const std::vector<double>& lambdas, const SearchConfig& base,
                                   const EvalConfig& eval, const ExperimentInputs& inputs);

/// True when every searchable layer is SkipConnect.
bool is_all_skip(const Architecture& arch, const ArchSpace& space);

struct TargetRun {
  double target = 0.0;
  std::uint64_t seed = 0;
  SearchResult search;
  EvalReport report;
  double violation = 0.0;  // |final − T| / T
  /// Largest |trace − T| / T over the last quarter of the epochs.
  double tail_deviation = 0.0;
};

struct TargetSummary {
  double target = 0.0;
  double mean_violation = 0.0;
  double max_violation = 0.0;
  double mean_top1 = 0.0;
};

struct MultiTargetResult {
  std::vector<TargetRun> runs;
  std::vector<TargetSummary> summary;
  /// Soft check: mean accuracy never drops as T grows.
  bool accuracy_monotone = false;
};

/// Largest relative deviation from `target` of the finalized-cost trace over
/// the last quarter of the epochs (at least one epoch).
double tail_deviation(const std::vector<HistoryRow>& history, double target);

/// `seeds` learnable-multiplier searches plus evaluations per target. Run i
/// of a target uses search seed base.seed + i and eval seed eval.seed + i.
MultiTargetResult multi_target_experiment(const std::vector<double>& targets, std::size_t seeds,
                                          const SearchConfig& base, const EvalConfig& eval,
                                          const ExperimentInputs& inputs, bool evaluate = true);

/// Header `arch_id,T_ms,seed,top1,pred_latency_ms,meas_latency_ms,wall_s`.
/// wall_s is written as NA unless `record_timing` is set.
std::string reports_to_csv(const std::vector<EvalReport>& reports, bool record_timing,
                           const std::string& comment = {});

}  // namespace nasc
