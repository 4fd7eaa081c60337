// SPDX-License-Identifier: Apache-2.0
#pragma once

// Hardware cost model: a synthetic device standing in for on-board
// measurements, measurement files, and the two latency predictors (an
// additive per-operator lookup table and an MLP over flattened encodings).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nasc/autodiff.hpp"
#include "nasc/search_space.hpp"

namespace nasc {

enum class MetricKind { kLatency, kEnergy };

std::string_view to_string(MetricKind kind);
MetricKind metric_from_string(std::string_view s);

/// Knobs for generating a synthetic device's cost table.
struct DeviceParams {
  MetricKind metric = MetricKind::kLatency;
  double base_overhead = 11.48;
  double interaction_coeff = 0.5;
  double noise_sd = 0.05;
  /// ExpandBlock(e) costs launch_overhead + e·U[cost_min, cost_max], times
  /// unit_scale; SkipConnect costs nothing.
  double cost_min = 0.1;
  double cost_max = 2.0;
  double launch_overhead = 2.0;
  double unit_scale = 1.0;
  /// When set, noise_sd is replaced by this fraction of the mean cost of a
  /// uniformly random architecture.
  double relative_noise = 0.0;
  std::uint64_t seed = 0;

  /// Energy-flavoured defaults (mJ): costs scaled by 2.5, noise 2% of mean.
  static DeviceParams energy_default();
};

/// cost(arch) = base + Σ_l per_op_cost[l][ops[l]]
///            + interaction · #{l : ops[l] == ops[l+1]} + N(0, noise_sd²)
class SyntheticDevice {
 public:
  SyntheticDevice(Tensor per_op_cost, double base_overhead, double interaction_coeff, double noise_sd,
                  std::uint64_t seed, MetricKind metric = MetricKind::kLatency);
  static SyntheticDevice generate(const ArchSpace& space, const DeviceParams& params);

  /// Noise-free cost.
  double expected(const Architecture& arch) const;
  /// One noisy measurement; advances the device's noise stream.
  double measure(const Architecture& arch);
  /// Isolated measurement of a single operator (no base, no interaction).
  double profile_op(std::size_t layer, std::size_t op);
  /// Mean noise-free cost of a uniformly random architecture of `space`.
  double mean_cost(const ArchSpace& space) const;

  const Tensor& per_op_cost() const { return per_op_cost_; }
  double base_overhead() const { return base_overhead_; }
  double interaction_coeff() const { return interaction_coeff_; }
  double noise_sd() const { return noise_sd_; }
  MetricKind metric() const { return metric_; }
  std::size_t layers() const { return per_op_cost_.rows(); }
  std::size_t ops() const { return per_op_cost_.cols(); }

  static std::size_t identical_adjacent_pairs(const Architecture& arch);

 private:
  void check(const Architecture& arch) const;

  Tensor per_op_cost_;
  double base_overhead_;
  double interaction_coeff_;
  double noise_sd_;
  MetricKind metric_;
  std::mt19937_64 noise_rng_;
};

struct MeasurementRecord {
  Tensor encoding;  // L×K one-hot
  double value = 0.0;
  MetricKind metric = MetricKind::kLatency;
  bool operator==(const MeasurementRecord&) const = default;
};

/// Records plus the train/validation boundary: the first `train_count`
/// records are training data.
struct MeasurementSet {
  std::vector<MeasurementRecord> records;
  std::size_t train_count = 0;

  std::span<const MeasurementRecord> train() const { return {records.data(), train_count}; }
  std::span<const MeasurementRecord> valid() const {
    return {records.data() + train_count, records.size() - train_count};
  }
};

/// n uniformly random architectures measured on `device`, split 80/20.
MeasurementSet sample_dataset(SyntheticDevice& device, const ArchSpace& space, std::size_t n,
                              std::mt19937_64& rng, double train_fraction = 0.8);
/// Splits records in file order.
MeasurementSet split_records(std::vector<MeasurementRecord> records, double train_fraction = 0.8);

// Measurement CSV: header `metric_kind,L,K,value,enc`; enc is L·K '0'/'1'
// characters in row-major order. Lines starting with '#' before the header
// are comments.
void save_measurements(std::span<const MeasurementRecord> records, const std::filesystem::path& path,
                       const std::string& comment = {});
std::vector<MeasurementRecord> load_measurements(const std::filesystem::path& path);
std::string measurements_to_csv(std::span<const MeasurementRecord> records, const std::string& comment = {});
std::vector<MeasurementRecord> measurements_from_csv(std::string_view text);

class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t layers() const = 0;
  virtual std::size_t ops() const = 0;
  virtual MetricKind metric() const = 0;

  /// Prediction for one encoding (one-hot or row-stochastic), original units.
  virtual double predict(const Tensor& encoding) const = 0;
  virtual std::vector<double> predict_batch(std::span<const Tensor> encodings) const;
  /// The prediction as a scalar graph node over an L×K encoding node.
  virtual ad::NodeRef graph(const ad::NodeRef& encoding) const = 0;
  virtual nlohmann::json to_json() const = 0;

 protected:
  void check_encoding(const Tensor& encoding) const;
};

/// Additive table: predict(enc) = Σ table ⊙ enc.
class LutPredictor final : public Predictor {
 public:
  LutPredictor(Tensor table, MetricKind metric = MetricKind::kLatency);

  std::string kind() const override { return "lut"; }
  std::size_t layers() const override { return table_.rows(); }
  std::size_t ops() const override { return table_.cols(); }
  MetricKind metric() const override { return metric_; }
  double predict(const Tensor& encoding) const override;
  ad::NodeRef graph(const ad::NodeRef& encoding) const override;
  nlohmann::json to_json() const override;
  static LutPredictor from_json(const nlohmann::json& j);

  const Tensor& table() const { return table_; }
  /// Sum of per-row minima / maxima of the table.
  std::pair<double, double> bounds() const;

 private:
  Tensor table_;
  MetricKind metric_;
};

struct DenseLayer {
  Tensor weight;  // in×out
  Tensor bias;    // 1×out
};

/// L·K → hidden… → 1 MLP, relu on hidden layers. Inputs and targets are
/// standardized with training statistics stored alongside the weights.
class MlpPredictor final : public Predictor {
 public:
  MlpPredictor(std::size_t layers, std::size_t ops, std::vector<DenseLayer> dense, Tensor input_mean,
               Tensor input_std, double target_mean, double target_std, MetricKind metric = MetricKind::kLatency);

  std::string kind() const override { return "mlp"; }
  std::size_t layers() const override { return layers_; }
  std::size_t ops() const override { return ops_; }
  MetricKind metric() const override { return metric_; }
  double predict(const Tensor& encoding) const override;
  std::vector<double> predict_batch(std::span<const Tensor> encodings) const override;
  ad::NodeRef graph(const ad::NodeRef& encoding) const override;
  nlohmann::json to_json() const override;
  static MlpPredictor from_json(const nlohmann::json& j);

  const std::vector<DenseLayer>& dense() const { return dense_; }
  const Tensor& input_mean() const { return input_mean_; }
  const Tensor& input_std() const { return input_std_; }
  double target_mean() const { return target_mean_; }
  double target_std() const { return target_std_; }

  /// Standardized inputs for a B×(L·K) batch.
  Tensor standardize(const Tensor& flat) const;
  /// Hidden stack on standardized inputs as a graph; output is standardized.
  ad::NodeRef network(const ad::NodeRef& standardized, const std::vector<ad::NodeRef>& params) const;
  std::vector<ad::NodeRef> parameter_nodes() const;
  void set_parameters(const std::vector<ad::NodeRef>& params);

 private:
  Tensor forward_rows(const Tensor& flat) const;

  std::size_t layers_;
  std::size_t ops_;
  std::vector<DenseLayer> dense_;
  Tensor input_mean_;
  Tensor input_std_;
  double target_mean_;
  double target_std_;
  MetricKind metric_;
};

std::unique_ptr<Predictor> predictor_from_json(const nlohmann::json& j);

/// Least-squares table over one-hot features, no intercept, with Tikhonov
/// damping 1e-8. Cells fixed by `space` (first layer) are pinned to zero;
/// any other cell never observed raises FitError naming the cells.
LutPredictor fit_lut(std::span<const MeasurementRecord> train, const ArchSpace* space = nullptr);
/// Table of isolated per-operator measurements taken on the device.
LutPredictor profile_lut(SyntheticDevice& device, const ArchSpace& space);

struct MlpFitOptions {
  std::vector<std::size_t> hidden{128, 64};
  std::size_t epochs = 200;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct MlpFit {
  MlpPredictor predictor;
  double valid_rmse;
};

MlpFit fit_mlp(std::span<const MeasurementRecord> train, std::span<const MeasurementRecord> valid,
               const MlpFitOptions& options = {});

/// d predict / d encoding through the MLP, in original units. Throws
/// UnsupportedError for a lookup table; use lut_grad there.
Tensor predict_grad(const Predictor& predictor, const Tensor& encoding);
Tensor lut_grad(const LutPredictor& lut);

struct PredictionStats {
  double rmse = 0.0;
  /// Mean of (predicted − measured).
  double mean_residual = 0.0;
  /// RMSE after subtracting mean_residual from every prediction.
  double debiased_rmse = 0.0;
};

PredictionStats evaluate_predictor(const Predictor& predictor, std::span<const MeasurementRecord> records);

}  // namespace nasc
