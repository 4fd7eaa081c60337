// SPDX-License-Identifier: Apache-2.0
#pragma once

// One JSON document configuring a whole pipeline run. Sections overlay the
// desk defaults key by key; unknown keys are rejected. Every phase draws its
// seed as `seed + offset` with a fixed per-phase offset.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "nasc/data.hpp"
#include "nasc/eval.hpp"
#include "nasc/hardware.hpp"
#include "nasc/search.hpp"
#include "nasc/search_space.hpp"

namespace nasc {

enum class Phase : std::uint64_t {
  kDevice = 101,
  kMeasure = 202,
  kPredictor = 303,
  kData = 404,
  kSearch = 505,
  kEval = 606,
};

struct PredictorSection {
  std::string kind = "mlp";
  /// Number of synthetic measurements drawn when none are supplied.
  std::size_t samples = 10000;
  double train_fraction = 0.8;
  MlpFitOptions mlp;
  /// Existing predictor JSON; must exist when set.
  std::optional<std::filesystem::path> file;
  /// Existing measurement CSV; must exist when set.
  std::optional<std::filesystem::path> measurements;
};

struct DataSection {
  DatasetParams params;
  /// Fraction of the dataset given to search and stand-alone training; the
  /// rest scores stand-alone networks.
  double train_fraction = 0.8;
  /// Fraction of the training part used for weight steps; the rest drives
  /// the architecture steps.
  double search_fraction = 0.5;
};

struct RunConfig {
  ArchSpace space = ArchSpace::desk_default();
  DeviceParams device;
  PredictorSection predictor;
  SearchConfig search = SearchConfig::desk_default();
  EvalConfig eval = EvalConfig::desk_default();
  DataSection data;
  std::filesystem::path output_dir = "nasc_out";
  std::uint64_t seed = 0;

  std::uint64_t phase_seed(Phase phase) const { return seed + static_cast<std::uint64_t>(phase); }
  /// Throws ConfigError on broken invariants or missing referenced files.
  void validate() const;
};

/// Desk defaults overlaid with `j`.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
/// Fully resolved document; keys appear in a fixed order.
nlohmann::json run_config_to_json(const RunConfig& c);

/// 64-bit FNV-1a of the resolved document's compact dump without the
/// `paths` section, as 16 hex digits. Output location never changes results.
std::string config_hash(const RunConfig& c);

nlohmann::json device_params_to_json(const DeviceParams& p);
DeviceParams device_params_from_json(const nlohmann::json& j, DeviceParams base = {});

}  // namespace nasc
