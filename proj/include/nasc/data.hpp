// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nasc/autodiff.hpp"

namespace nasc {

using ad::Tensor;

/// Labelled feature rows: features is N×D, labels in [0, num_classes).
struct Dataset {
  Tensor features;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
  Dataset subset(std::span<const std::size_t> indices) const;
  /// The half-open row range [begin, end).
  Dataset slice(std::size_t begin, std::size_t end) const;
};

struct DataSplit {
  Dataset train;
  Dataset valid;
};

/// First `fraction` of the rows for training, the rest for validation.
DataSplit split_dataset(const Dataset& data, double fraction);

enum class DatasetKind { kBlobs, kSpirals, kIdx };

std::string_view to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(std::string_view s);

struct DatasetParams {
  DatasetKind kind = DatasetKind::kSpirals;
  std::size_t samples = 8000;
  std::size_t classes = 3;
  std::size_t dim = 2;
  /// Blobs: distance between neighbouring class centres in units of the unit
  /// cluster spread.
  double separation = 10.0;
  /// Spirals: angular noise (radians) and revolutions per arm.
  double noise = 0.2;
  double turns = 2.0;
  std::filesystem::path idx_images;
  std::filesystem::path idx_labels;
};

/// Synthetic or IDX-backed classification data. Rows come in a seeded random
/// order, so any prefix is a fair sample.
Dataset make_dataset(const DatasetParams& params, std::mt19937_64& rng);

// IDX files: big-endian magic 0x00000803 (images, u8 N×rows×cols) and
// 0x00000801 (labels, u8 N).
struct IdxImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;
};

IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);
void write_idx_images(const IdxImages& images, const std::filesystem::path& path);
void write_idx_labels(std::span<const std::uint8_t> labels, const std::filesystem::path& path);
/// Images flattened to rows and scaled to [0, 1].
Dataset dataset_from_idx(const IdxImages& images, std::span<const std::uint8_t> labels);

/// Rows of `data.features` selected by `indices`, as a B×D tensor.
Tensor gather_rows(const Tensor& features, std::span<const std::size_t> indices);
std::vector<int> gather_labels(const std::vector<int>& labels, std::span<const std::size_t> indices);

}  // namespace nasc
