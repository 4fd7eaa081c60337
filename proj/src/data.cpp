// SPDX-License-Identifier: Apache-2.0
#include "nasc/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>

#include "nasc/errors.hpp"

namespace nasc {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t offset, const std::string& file) {
  if (offset + 4 > b.size()) {
    throw ParseError(file + ": truncated header at offset " + std::to_string(offset));
  }
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
         (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 24));
  b.push_back(static_cast<std::uint8_t>(v >> 16));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

void check_magic(std::uint32_t got, std::uint32_t want, const std::string& file) {
  if (got != want) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "bad magic 0x%08x at offset 0, expected 0x%08x", got, want);
    throw ParseError(file + ": " + buf);
  }
}

Dataset shuffled(Dataset data, std::mt19937_64& rng) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return data.subset(order);
}

Dataset make_blobs(const DatasetParams& p, std::mt19937_64& rng) {
  if (p.dim == 0) throw ConfigError("blobs: dim must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> centres(p.classes, std::vector<double>(p.dim, 0.0));
  if (p.classes <= p.dim) {
    // Scaled axis vectors sit exactly `separation` apart pairwise.
    for (std::size_t c = 0; c < p.classes; ++c) centres[c][c] = p.separation / std::numbers::sqrt2;
  } else if (p.dim >= 2) {
    // Regular polygon in the first two coordinates; neighbours sit `separation` apart.
    const double radius = p.separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(p.classes)));
    for (std::size_t c = 0; c < p.classes; ++c) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(p.classes);
      centres[c][0] = radius * std::cos(angle);
      centres[c][1] = radius * std::sin(angle);
    }
  } else {
    for (std::size_t c = 0; c < p.classes; ++c) centres[c][0] = p.separation * static_cast<double>(c);
  }
  Dataset d;
  d.num_classes = p.classes;
  d.features = Tensor({p.samples, p.dim});
  d.labels.resize(p.samples);
  for (std::size_t i = 0; i < p.samples; ++i) {
    const std::size_t c = i % p.classes;
    d.labels[i] = static_cast<int>(c);
    for (std::size_t j = 0; j < p.dim; ++j) d.features.at(i, j) = centres[c][j] + normal(rng);
  }
  return d;
}

Dataset make_spirals(const DatasetParams& p, std::mt19937_64& rng) {
  if (p.dim != 2) throw ConfigError("spirals: dim must be 2");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset d;
  d.num_classes = p.classes;
  d.features = Tensor({p.samples, 2});
  d.labels.resize(p.samples);
  for (std::size_t i = 0; i < p.samples; ++i) {
    const std::size_t c = i % p.classes;
    const double t = unit(rng);
    const double theta = 2.0 * std::numbers::pi * (p.turns * t + static_cast<double>(c) / static_cast<double>(p.classes)) +
                         p.noise * normal(rng);
    d.labels[i] = static_cast<int>(c);
    d.features.at(i, 0) = t * std::cos(theta);
    d.features.at(i, 1) = t * std::sin(theta);
  }
  return d;
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset d;
  d.num_classes = num_classes;
  d.features = gather_rows(features, indices);
  d.labels = gather_labels(labels, indices);
  return d;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > size()) throw IndexError("dataset slice out of range");
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return subset(idx);
}

DataSplit split_dataset(const Dataset& data, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
  const auto cut = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
  if (cut == 0 || cut == data.size()) throw ConfigError("dataset too small to split");
  return {data.slice(0, cut), data.slice(cut, data.size())};
}

std::string_view to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kBlobs: return "blobs";
    case DatasetKind::kSpirals: return "spirals";
    case DatasetKind::kIdx: return "idx";
  }
  return "?";
}

DatasetKind dataset_kind_from_string(std::string_view s) {
  if (s == "blobs") return DatasetKind::kBlobs;
  if (s == "spirals") return DatasetKind::kSpirals;
  if (s == "idx" || s == "idx_files") return DatasetKind::kIdx;
  throw ConfigError("unknown dataset kind '" + std::string(s) + "'");
}

Dataset make_dataset(const DatasetParams& params, std::mt19937_64& rng) {
  if (params.kind == DatasetKind::kIdx) {
    const IdxImages images = read_idx_images(params.idx_images);
    const auto labels = read_idx_labels(params.idx_labels);
    return shuffled(dataset_from_idx(images, labels), rng);
  }
  if (params.samples == 0 || params.classes < 2) throw ConfigError("dataset needs samples and at least 2 classes");
  Dataset d = params.kind == DatasetKind::kBlobs ? make_blobs(params, rng) : make_spirals(params, rng);
  return shuffled(std::move(d), rng);
}

IdxImages read_idx_images(const std::filesystem::path& path) {
  const auto b = read_bytes(path);
  const std::string file = path.string();
  check_magic(read_be32(b, 0, file), kImageMagic, file);
  IdxImages img;
  img.count = read_be32(b, 4, file);
  img.rows = read_be32(b, 8, file);
  img.cols = read_be32(b, 12, file);
  const std::size_t need = 16 + img.count * img.rows * img.cols;
  if (b.size() < need) {
    throw ParseError(file + ": truncated pixel data at offset " + std::to_string(b.size()) + ", expected " +
                     std::to_string(need) + " bytes");
  }
  img.pixels.assign(b.begin() + 16, b.begin() + static_cast<std::ptrdiff_t>(need));
  return img;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const auto b = read_bytes(path);
  const std::string file = path.string();
  check_magic(read_be32(b, 0, file), kLabelMagic, file);
  const std::size_t count = read_be32(b, 4, file);
  if (b.size() < 8 + count) {
    throw ParseError(file + ": truncated label data at offset " + std::to_string(b.size()) + ", expected " +
                     std::to_string(8 + count) + " bytes");
  }
  return {b.begin() + 8, b.begin() + static_cast<std::ptrdiff_t>(8 + count)};
}

void write_idx_images(const IdxImages& images, const std::filesystem::path& path) {
  if (images.pixels.size() != images.count * images.rows * images.cols) {
    throw DimensionError("idx images: pixel count does not match dimensions");
  }
  std::vector<std::uint8_t> b;
  put_be32(b, kImageMagic);
  put_be32(b, static_cast<std::uint32_t>(images.count));
  put_be32(b, static_cast<std::uint32_t>(images.rows));
  put_be32(b, static_cast<std::uint32_t>(images.cols));
  b.insert(b.end(), images.pixels.begin(), images.pixels.end());
  write_bytes(b, path);
}

void write_idx_labels(std::span<const std::uint8_t> labels, const std::filesystem::path& path) {
  std::vector<std::uint8_t> b;
  put_be32(b, kLabelMagic);
  put_be32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  write_bytes(b, path);
}

Dataset dataset_from_idx(const IdxImages& images, std::span<const std::uint8_t> labels) {
  if (images.count != labels.size()) {
    throw DimensionError("idx: " + std::to_string(images.count) + " images but " + std::to_string(labels.size()) +
                         " labels");
  }
  if (images.count == 0) throw ConfigError("idx: empty dataset");
  const std::size_t dim = images.rows * images.cols;
  Dataset d;
  d.features = Tensor({images.count, dim});
  for (std::size_t i = 0; i < images.pixels.size(); ++i) d.features[i] = images.pixels[i] / 255.0;
  int max_label = 0;
  for (auto l : labels) {
    d.labels.push_back(l);
    max_label = std::max(max_label, static_cast<int>(l));
  }
  d.num_classes = static_cast<std::size_t>(max_label) + 1;
  return d;
}

Tensor gather_rows(const Tensor& features, std::span<const std::size_t> indices) {
  const std::size_t dim = features.cols();
  Tensor out({indices.size(), dim});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= features.rows()) throw IndexError("row index out of range");
    std::copy_n(features.data().begin() + indices[i] * dim, dim, out.data().begin() + i * dim);
  }
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

}  // namespace nasc
