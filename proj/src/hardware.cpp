// SPDX-License-Identifier: Apache-2.0
#include "nasc/hardware.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "nasc/errors.hpp"
#include "nasc/format.hpp"
#include "nasc/optim.hpp"

namespace nasc {

namespace {

constexpr std::string_view kCsvHeader = "metric_kind,L,K,value,enc";
constexpr double kLutDamping = 1e-8;

Tensor flatten_rows(std::span<const Tensor> encodings, std::size_t width) {
  Tensor flat({encodings.size(), width});
  for (std::size_t i = 0; i < encodings.size(); ++i) {
    if (encodings[i].size() != width) {
      throw DimensionError("encoding " + ad::shape_string(encodings[i].shape()) + " has " +
                           std::to_string(encodings[i].size()) + " entries, predictor expects " +
                           std::to_string(width));
    }
    std::copy(encodings[i].data().begin(), encodings[i].data().end(), flat.data().begin() + i * width);
  }
  return flat;
}

Tensor json_to_matrix(const nlohmann::json& j) {
  const std::size_t r = j.size();
  if (r == 0) throw ParseError("empty matrix in predictor file");
  const std::size_t c = j.at(0).size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : j) {
    if (row.size() != c) throw ParseError("ragged matrix in predictor file");
    for (const auto& v : row) data.push_back(v.get<double>());
  }
  return Tensor({r, c}, std::move(data));
}

nlohmann::json matrix_to_json(const Tensor& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < t.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < t.cols(); ++j) row.push_back(t.at(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::string_view to_string(MetricKind kind) { return kind == MetricKind::kLatency ? "latency" : "energy"; }

MetricKind metric_from_string(std::string_view s) {
  if (s == "latency") return MetricKind::kLatency;
  if (s == "energy") return MetricKind::kEnergy;
  throw ParseError("unknown metric kind '" + std::string(s) + "'");
}

DeviceParams DeviceParams::energy_default() {
  DeviceParams p;
  p.metric = MetricKind::kEnergy;
  p.unit_scale = 2.5;
  p.base_overhead = 11.48 * p.unit_scale;
  p.interaction_coeff = 0.5 * p.unit_scale;
  p.relative_noise = 0.02;
  return p;
}

// ---------------------------------------------------------------------------
// SyntheticDevice

SyntheticDevice::SyntheticDevice(Tensor per_op_cost, double base_overhead, double interaction_coeff,
                                 double noise_sd, std::uint64_t seed, MetricKind metric)
    : per_op_cost_(std::move(per_op_cost)),
      base_overhead_(base_overhead),
      interaction_coeff_(interaction_coeff),
      noise_sd_(noise_sd),
      metric_(metric),
      noise_rng_(seed) {
  if (per_op_cost_.shape().size() != 2) throw ConfigError("device cost table must be L×K");
  if (noise_sd_ < 0.0) throw ConfigError("device noise_sd must be non-negative");
  for (double v : per_op_cost_.data()) {
    if (!(v >= 0.0)) throw ConfigError("device costs must be non-negative");
  }
}

SyntheticDevice SyntheticDevice::generate(const ArchSpace& space, const DeviceParams& params) {
  space.validate();
  if (!(params.cost_min >= 0.0 && params.cost_max >= params.cost_min)) {
    throw ConfigError("device: need 0 <= cost_min <= cost_max");
  }
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> unit(params.cost_min, params.cost_max);
  Tensor cost({space.num_layers, space.ops_per_layer()});
  for (std::size_t l = 0; l < space.num_layers; ++l) {
    for (std::size_t k = 0; k < space.ops_per_layer(); ++k) {
      const auto& op = space.menu[k];
      if (op.kind == OpKind::kSkipConnect) continue;
      double c = params.launch_overhead + op.expansion_ratio * unit(rng);
      if (op.activation == Activation::kRelu6) c *= 1.1;
      cost.at(l, k) = c * params.unit_scale;
    }
  }
  SyntheticDevice device(std::move(cost), params.base_overhead, params.interaction_coeff, params.noise_sd,
                         params.seed ^ 0x9e3779b97f4a7c15ULL, params.metric);
  if (params.relative_noise > 0.0) device.noise_sd_ = params.relative_noise * device.mean_cost(space);
  return device;
}

void SyntheticDevice::check(const Architecture& arch) const {
  if (arch.ops.size() != layers()) {
    throw ConfigError("device has " + std::to_string(layers()) + " layers, architecture has " +
                      std::to_string(arch.ops.size()));
  }
  for (auto k : arch.ops) {
    if (k >= ops()) throw ConfigError("op index " + std::to_string(k) + " outside device menu");
  }
}

std::size_t SyntheticDevice::identical_adjacent_pairs(const Architecture& arch) {
  std::size_t n = 0;
  for (std::size_t l = 1; l < arch.ops.size(); ++l) n += arch.ops[l] == arch.ops[l - 1] ? 1 : 0;
  return n;
}

double SyntheticDevice::expected(const Architecture& arch) const {
  check(arch);
  double total = base_overhead_;
  for (std::size_t l = 0; l < arch.ops.size(); ++l) total += per_op_cost_.at(l, arch.ops[l]);
  return total + interaction_coeff_ * static_cast<double>(identical_adjacent_pairs(arch));
}

double SyntheticDevice::measure(const Architecture& arch) {
  const double clean = expected(arch);
  if (noise_sd_ == 0.0) return clean;
  std::normal_distribution<double> noise(0.0, noise_sd_);
  return clean + noise(noise_rng_);
}

double SyntheticDevice::profile_op(std::size_t layer, std::size_t op) {
  const double clean = per_op_cost_.at(layer, op);
  if (noise_sd_ == 0.0) return clean;
  std::normal_distribution<double> noise(0.0, noise_sd_);
  return clean + noise(noise_rng_);
}

double SyntheticDevice::mean_cost(const ArchSpace& space) const {
  const double K = static_cast<double>(ops());
  double total = base_overhead_;
  for (std::size_t l = 0; l < layers(); ++l) {
    if (l == 0 && space.first_layer_fixed) {
      total += per_op_cost_.at(0, space.fixed_first_op);
      continue;
    }
    double row = 0.0;
    for (std::size_t k = 0; k < ops(); ++k) row += per_op_cost_.at(l, k);
    total += row / K;
  }
  // Each adjacent pair matches with probability 1/K when at least one side is uniform.
  return total + interaction_coeff_ * static_cast<double>(layers() - 1) / K;
}

// ---------------------------------------------------------------------------
// Datasets and files

MeasurementSet split_records(std::vector<MeasurementRecord> records, double train_fraction) {
  MeasurementSet set;
  set.train_count = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(records.size())));
  set.train_count = std::min(set.train_count, records.size());
  set.records = std::move(records);
  return set;
}

MeasurementSet sample_dataset(SyntheticDevice& device, const ArchSpace& space, std::size_t n, std::mt19937_64& rng,
                              double train_fraction) {
  if (n == 0) throw ParameterError("sample_dataset: n must be at least 1");
  std::vector<MeasurementRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Architecture arch = random_architecture(space, rng);
    const double v = device.measure(arch);
    records.push_back({encode(arch, space), v, device.metric()});
  }
  return split_records(std::move(records), train_fraction);
}

std::string measurements_to_csv(std::span<const MeasurementRecord> records, const std::string& comment) {
  std::string out;
  if (!comment.empty()) out += "# " + comment + "\n";
  out += kCsvHeader;
  out += '\n';
  for (const auto& r : records) {
    out += to_string(r.metric);
    out += ',' + std::to_string(r.encoding.rows()) + ',' + std::to_string(r.encoding.cols()) + ',';
    out += format_double(r.value);
    out += ',';
    for (double v : r.encoding.data()) out += v == 1.0 ? '1' : '0';
    out += '\n';
  }
  return out;
}

std::vector<MeasurementRecord> measurements_from_csv(std::string_view text) {
  std::vector<MeasurementRecord> records;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header_seen) {
      if (!line.empty() && line.front() == '#') continue;
      if (line != kCsvHeader) {
        throw ParseError("line " + std::to_string(line_no) + ": expected header '" + std::string(kCsvHeader) + "'");
      }
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    const std::string where = "line " + std::to_string(line_no);
    if (fields.size() != 5) throw ParseError(where + ": expected 5 fields, got " + std::to_string(fields.size()));
    MeasurementRecord r;
    try {
      r.metric = metric_from_string(fields[0]);
    } catch (const ParseError&) {
      throw ParseError(where + ": unknown metric kind '" + std::string(fields[0]) + "'");
    }
    std::size_t L = 0, K = 0;
    auto parse_size = [&](std::string_view f, std::size_t& out) {
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), out);
      if (ec != std::errc() || p != f.data() + f.size() || out == 0) {
        throw ParseError(where + ": bad dimension '" + std::string(f) + "'");
      }
    };
    parse_size(fields[1], L);
    parse_size(fields[2], K);
    {
      auto [p, ec] = std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(), r.value);
      if (ec != std::errc() || p != fields[3].data() + fields[3].size() || !std::isfinite(r.value)) {
        throw ParseError(where + ": bad value '" + std::string(fields[3]) + "'");
      }
    }
    const std::string_view enc = fields[4];
    if (enc.size() != L * K) {
      throw ParseError(where + ": encoding has " + std::to_string(enc.size()) + " characters, expected " +
                       std::to_string(L * K));
    }
    r.encoding = Tensor({L, K});
    for (std::size_t i = 0; i < enc.size(); ++i) {
      if (enc[i] != '0' && enc[i] != '1') throw ParseError(where + ": encoding characters must be 0 or 1");
      r.encoding[i] = enc[i] == '1' ? 1.0 : 0.0;
    }
    for (std::size_t l = 0; l < L; ++l) {
      std::size_t ones = 0;
      for (std::size_t k = 0; k < K; ++k) ones += r.encoding.at(l, k) == 1.0 ? 1 : 0;
      if (ones != 1) {
        throw ValidationError(where + ": layer " + std::to_string(l) + " has " + std::to_string(ones) +
                              " ones, expected exactly 1");
      }
    }
    records.push_back(std::move(r));
  }
  if (!header_seen) throw ParseError("missing header '" + std::string(kCsvHeader) + "'");
  return records;
}

void save_measurements(std::span<const MeasurementRecord> records, const std::filesystem::path& path,
                       const std::string& comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << measurements_to_csv(records, comment);
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<MeasurementRecord> load_measurements(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return measurements_from_csv(ss.str());
}

// ---------------------------------------------------------------------------
// Predictors

std::vector<double> Predictor::predict_batch(std::span<const Tensor> encodings) const {
  std::vector<double> out;
  out.reserve(encodings.size());
  for (const auto& e : encodings) out.push_back(predict(e));
  return out;
}

void Predictor::check_encoding(const Tensor& encoding) const {
  if (encoding.shape() != ad::Shape{layers(), ops()}) {
    throw DimensionError("encoding " + ad::shape_string(encoding.shape()) + " does not match predictor " +
                         ad::shape_string({layers(), ops()}));
  }
}

LutPredictor::LutPredictor(Tensor table, MetricKind metric) : table_(std::move(table)), metric_(metric) {
  if (table_.shape().size() != 2) throw DimensionError("lookup table must be L×K");
}

double LutPredictor::predict(const Tensor& encoding) const {
  check_encoding(encoding);
  double s = 0.0;
  for (std::size_t i = 0; i < table_.size(); ++i) s += table_[i] * encoding[i];
  return s;
}

ad::NodeRef LutPredictor::graph(const ad::NodeRef& encoding) const {
  check_encoding(encoding->value());
  return ad::sum(ad::mul(encoding, ad::constant(table_)));
}

std::pair<double, double> LutPredictor::bounds() const {
  double lo = 0.0, hi = 0.0;
  for (std::size_t l = 0; l < table_.rows(); ++l) {
    double mn = table_.at(l, 0), mx = table_.at(l, 0);
    for (std::size_t k = 1; k < table_.cols(); ++k) {
      mn = std::min(mn, table_.at(l, k));
      mx = std::max(mx, table_.at(l, k));
    }
    lo += mn;
    hi += mx;
  }
  return {lo, hi};
}

nlohmann::json LutPredictor::to_json() const {
  return {{"kind", "lut"},
          {"metric", to_string(metric_)},
          {"L", layers()},
          {"K", ops()},
          {"table", matrix_to_json(table_)}};
}

LutPredictor LutPredictor::from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind") != "lut") throw ParseError("predictor kind is not 'lut'");
    Tensor table = json_to_matrix(j.at("table"));
    if (table.rows() != j.at("L").get<std::size_t>() || table.cols() != j.at("K").get<std::size_t>()) {
      throw ParseError("lut table does not match declared L×K");
    }
    return LutPredictor(std::move(table), metric_from_string(j.at("metric").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("lut predictor: ") + e.what());
  }
}

MlpPredictor::MlpPredictor(std::size_t layers, std::size_t ops, std::vector<DenseLayer> dense, Tensor input_mean,
                           Tensor input_std, double target_mean, double target_std, MetricKind metric)
    : layers_(layers),
      ops_(ops),
      dense_(std::move(dense)),
      input_mean_(std::move(input_mean)),
      input_std_(std::move(input_std)),
      target_mean_(target_mean),
      target_std_(target_std),
      metric_(metric) {
  const std::size_t in = layers_ * ops_;
  if (dense_.empty()) throw DimensionError("mlp needs at least one dense layer");
  std::size_t width = in;
  for (const auto& d : dense_) {
    if (d.weight.rows() != width || d.bias.size() != d.weight.cols()) {
      throw DimensionError("mlp layer " + ad::shape_string(d.weight.shape()) + " does not chain from width " +
                           std::to_string(width));
    }
    width = d.weight.cols();
  }
  if (width != 1) throw DimensionError("mlp output must be a single unit");
  if (input_mean_.size() != in || input_std_.size() != in) throw DimensionError("mlp standardization size mismatch");
  input_mean_ = Tensor({1, in}, input_mean_.vec());
  input_std_ = Tensor({1, in}, input_std_.vec());
  for (double s : input_std_.data()) {
    if (!(s > 0.0)) throw DomainError("mlp input std must be positive");
  }
  if (!(target_std_ > 0.0)) throw DomainError("mlp target std must be positive");
}

Tensor MlpPredictor::standardize(const Tensor& flat) const {
  Tensor z(flat.shape());
  const std::size_t n = flat.cols();
  for (std::size_t i = 0; i < flat.rows(); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      z.at(i, j) = (flat.at(i, j) + (-input_mean_[j])) * (1.0 / input_std_[j]);
    }
  }
  return z;
}

Tensor MlpPredictor::forward_rows(const Tensor& flat) const {
  Tensor z = standardize(flat);
  for (std::size_t d = 0; d < dense_.size(); ++d) {
    z = ad::matmul(z, dense_[d].weight);
    const std::size_t n = z.cols();
    for (std::size_t i = 0; i < z.rows(); ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double v = z.at(i, j) + dense_[d].bias[j];
        if (d + 1 < dense_.size()) v = v > 0.0 ? v : 0.0;
        z.at(i, j) = v;
      }
    }
  }
  Tensor out({z.rows()});
  for (std::size_t i = 0; i < z.rows(); ++i) out[i] = z[i] * target_std_ + target_mean_;
  return out;
}

double MlpPredictor::predict(const Tensor& encoding) const {
  check_encoding(encoding);
  return forward_rows(Tensor({1, encoding.size()}, encoding.vec()))[0];
}

std::vector<double> MlpPredictor::predict_batch(std::span<const Tensor> encodings) const {
  for (const auto& e : encodings) check_encoding(e);
  return forward_rows(flatten_rows(encodings, layers_ * ops_)).vec();
}

ad::NodeRef MlpPredictor::network(const ad::NodeRef& standardized, const std::vector<ad::NodeRef>& params) const {
  ad::NodeRef h = standardized;
  for (std::size_t d = 0; d < dense_.size(); ++d) {
    h = ad::linear(h, params[2 * d], params[2 * d + 1]);
    if (d + 1 < dense_.size()) h = ad::relu(h);
  }
  return h;
}

std::vector<ad::NodeRef> MlpPredictor::parameter_nodes() const {
  std::vector<ad::NodeRef> out;
  for (const auto& d : dense_) {
    out.push_back(ad::constant(d.weight));
    out.push_back(ad::constant(d.bias));
  }
  return out;
}

void MlpPredictor::set_parameters(const std::vector<ad::NodeRef>& params) {
  for (std::size_t d = 0; d < dense_.size(); ++d) {
    dense_[d].weight = params[2 * d]->value();
    dense_[d].bias = params[2 * d + 1]->value();
  }
}

ad::NodeRef MlpPredictor::graph(const ad::NodeRef& encoding) const {
  check_encoding(encoding->value());
  const std::size_t in = layers_ * ops_;
  Tensor neg_mean({1, in}), inv_std({1, in});
  for (std::size_t j = 0; j < in; ++j) {
    neg_mean[j] = -input_mean_[j];
    inv_std[j] = 1.0 / input_std_[j];
  }
  ad::NodeRef x = ad::reshape(encoding, {1, in});
  ad::NodeRef z = ad::mul(ad::add_bias(x, ad::constant(std::move(neg_mean))), ad::constant(std::move(inv_std)));
  ad::NodeRef y = network(z, parameter_nodes());
  return ad::add(ad::scale(y, target_std_), ad::constant(Tensor::scalar(target_mean_)));
}

nlohmann::json MlpPredictor::to_json() const {
  nlohmann::json weights = nlohmann::json::array(), biases = nlohmann::json::array();
  nlohmann::json hidden = nlohmann::json::array();
  for (std::size_t d = 0; d < dense_.size(); ++d) {
    weights.push_back(matrix_to_json(dense_[d].weight));
    biases.push_back(dense_[d].bias.vec());
    if (d + 1 < dense_.size()) hidden.push_back(dense_[d].weight.cols());
  }
  return {{"kind", "mlp"},
          {"metric", to_string(metric_)},
          {"L", layers_},
          {"K", ops_},
          {"hidden", hidden},
          {"activation", "relu"},
          {"weights", weights},
          {"biases", biases},
          {"standardization",
           {{"input_mean", input_mean_.vec()},
            {"input_std", input_std_.vec()},
            {"target_mean", target_mean_},
            {"target_std", target_std_}}}};
}

MlpPredictor MlpPredictor::from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind") != "mlp") throw ParseError("predictor kind is not 'mlp'");
    std::vector<DenseLayer> dense;
    const auto& w = j.at("weights");
    const auto& b = j.at("biases");
    if (w.size() != b.size()) throw ParseError("mlp weights and biases disagree in depth");
    for (std::size_t d = 0; d < w.size(); ++d) {
      Tensor weight = json_to_matrix(w[d]);
      std::vector<double> bias = b[d].get<std::vector<double>>();
      const std::size_t n = bias.size();
      dense.push_back({std::move(weight), Tensor({1, n}, std::move(bias))});
    }
    const auto& s = j.at("standardization");
    auto mean = s.at("input_mean").get<std::vector<double>>();
    auto std = s.at("input_std").get<std::vector<double>>();
    const std::size_t nm = mean.size(), ns = std.size();
    return MlpPredictor(j.at("L").get<std::size_t>(), j.at("K").get<std::size_t>(), std::move(dense),
                        Tensor({nm}, std::move(mean)), Tensor({ns}, std::move(std)),
                        s.at("target_mean").get<double>(), s.at("target_std").get<double>(),
                        metric_from_string(j.at("metric").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("mlp predictor: ") + e.what());
  } catch (const DimensionError& e) {
    throw ParseError(std::string("mlp predictor: ") + e.what());
  }
}

std::unique_ptr<Predictor> predictor_from_json(const nlohmann::json& j) {
  const std::string kind = j.value("kind", "");
  if (kind == "lut") return std::make_unique<LutPredictor>(LutPredictor::from_json(j));
  if (kind == "mlp") return std::make_unique<MlpPredictor>(MlpPredictor::from_json(j));
  throw ParseError("unknown predictor kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Fitting

LutPredictor fit_lut(std::span<const MeasurementRecord> train, const ArchSpace* space) {
  if (train.empty()) throw FitError("fit_lut: no training records");
  const std::size_t L = train.front().encoding.rows(), K = train.front().encoding.cols();
  const MetricKind metric = train.front().metric;
  if (space && (space->num_layers != L || space->ops_per_layer() != K)) {
    throw FitError("fit_lut: records do not match the space dimensions");
  }
  std::vector<bool> pinned(L * K, false);
  if (space && space->first_layer_fixed) {
    for (std::size_t k = 0; k < K; ++k) pinned[k] = k != space->fixed_first_op;
  }
  std::vector<std::size_t> counts(L * K, 0);
  for (const auto& r : train) {
    if (r.encoding.rows() != L || r.encoding.cols() != K) throw FitError("fit_lut: records disagree in L×K");
    if (r.metric != metric) throw FitError("fit_lut: records mix metric kinds");
    for (std::size_t i = 0; i < L * K; ++i) counts[i] += r.encoding[i] != 0.0 ? 1 : 0;
  }
  std::vector<std::size_t> column(L * K, SIZE_MAX);
  std::string deficient;
  std::size_t n_free = 0;
  for (std::size_t i = 0; i < L * K; ++i) {
    if (pinned[i]) continue;
    if (counts[i] == 0) {
      deficient += (deficient.empty() ? "" : ", ") + std::string("(") + std::to_string(i / K) + ", " +
                   std::to_string(i % K) + ")";
      continue;
    }
    column[i] = n_free++;
  }
  if (!deficient.empty()) throw FitError("fit_lut: degenerate design, unobserved (layer, op) cells: " + deficient);

  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_free), static_cast<Eigen::Index>(n_free));
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_free));
  std::vector<Eigen::Index> active;
  for (const auto& r : train) {
    active.clear();
    for (std::size_t i = 0; i < L * K; ++i) {
      if (r.encoding[i] != 0.0 && column[i] != SIZE_MAX) active.push_back(static_cast<Eigen::Index>(column[i]));
    }
    for (auto a : active) {
      rhs(a) += r.value;
      for (auto b : active) normal(a, b) += 1.0;
    }
  }
  normal.diagonal().array() += kLutDamping;
  const Eigen::VectorXd solution = normal.ldlt().solve(rhs);
  Tensor table({L, K});
  for (std::size_t i = 0; i < L * K; ++i) {
    if (column[i] != SIZE_MAX) table[i] = solution(static_cast<Eigen::Index>(column[i]));
  }
  return LutPredictor(std::move(table), metric);
}

LutPredictor profile_lut(SyntheticDevice& device, const ArchSpace& space) {
  if (device.layers() != space.num_layers || device.ops() != space.ops_per_layer()) {
    throw ConfigError("profile_lut: device does not match the space");
  }
  Tensor table({space.num_layers, space.ops_per_layer()});
  for (std::size_t l = 0; l < space.num_layers; ++l) {
    for (std::size_t k = 0; k < space.ops_per_layer(); ++k) {
      if (l == 0 && space.first_layer_fixed && k != space.fixed_first_op) continue;
      table.at(l, k) = device.profile_op(l, k);
    }
  }
  return LutPredictor(std::move(table), device.metric());
}

MlpFit fit_mlp(std::span<const MeasurementRecord> train, std::span<const MeasurementRecord> valid,
               const MlpFitOptions& options) {
  if (train.empty()) throw FitError("fit_mlp: empty training set");
  if (options.batch_size == 0) throw FitError("fit_mlp: batch size must be positive");
  const std::size_t L = train.front().encoding.rows(), K = train.front().encoding.cols();
  const std::size_t in = L * K;
  const MetricKind metric = train.front().metric;
  for (const auto* set : {&train, &valid}) {
    for (const auto& r : *set) {
      if (r.encoding.rows() != L || r.encoding.cols() != K) throw FitError("fit_mlp: records disagree in L×K");
      if (r.metric != metric) throw FitError("fit_mlp: records mix metric kinds");
    }
  }
  const double n = static_cast<double>(train.size());

  Tensor mean({in}), stddev({in});
  double y_mean = 0.0, y_var = 0.0;
  for (const auto& r : train) {
    for (std::size_t j = 0; j < in; ++j) mean[j] += r.encoding[j];
    y_mean += r.value;
  }
  for (std::size_t j = 0; j < in; ++j) mean[j] /= n;
  y_mean /= n;
  for (const auto& r : train) {
    for (std::size_t j = 0; j < in; ++j) stddev[j] += (r.encoding[j] - mean[j]) * (r.encoding[j] - mean[j]);
    y_var += (r.value - y_mean) * (r.value - y_mean);
  }
  for (std::size_t j = 0; j < in; ++j) {
    stddev[j] = std::sqrt(stddev[j] / n);
    if (stddev[j] < 1e-12) stddev[j] = 1.0;
  }
  double y_std = std::sqrt(y_var / n);
  if (y_std < 1e-12) y_std = 1.0;

  std::mt19937_64 rng(options.seed);
  std::vector<DenseLayer> dense;
  std::size_t width = in;
  std::vector<std::size_t> sizes = options.hidden;
  sizes.push_back(1);
  for (std::size_t d = 0; d < sizes.size(); ++d) {
    const bool last = d + 1 == sizes.size();
    std::normal_distribution<double> init(0.0, std::sqrt((last ? 1.0 : 2.0) / static_cast<double>(width)));
    Tensor w({width, sizes[d]});
    for (auto& v : w.data()) v = init(rng);
    dense.push_back({std::move(w), Tensor({1, sizes[d]})});
    width = sizes[d];
  }
  MlpPredictor model(L, K, std::move(dense), mean, stddev, y_mean, y_std, metric);

  std::vector<Tensor> encodings;
  encodings.reserve(train.size());
  for (const auto& r : train) encodings.push_back(r.encoding);
  const Tensor inputs = model.standardize(flatten_rows(encodings, in));
  std::vector<double> targets(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) targets[i] = (train[i].value - y_mean) / y_std;

  std::vector<ad::NodeRef> params;
  for (const auto& d : model.dense()) {
    params.push_back(ad::parameter(d.weight));
    params.push_back(ad::parameter(d.bias));
  }
  Adam adam(params, options.lr, 0.0);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t b = std::min(options.batch_size, order.size() - start);
      Tensor xb({b, in}), yb({b, 1});
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t src = order[start + i];
        std::copy_n(inputs.data().begin() + src * in, in, xb.data().begin() + i * in);
        yb[i] = targets[src];
      }
      ad::NodeRef diff = ad::sub(model.network(ad::constant(std::move(xb)), params), ad::constant(std::move(yb)));
      ad::NodeRef loss = ad::mean(ad::mul(diff, diff));
      adam.zero_grad();
      ad::backward(loss);
      adam.step();
    }
  }
  model.set_parameters(params);
  const double rmse = valid.empty() ? 0.0 : evaluate_predictor(model, valid).rmse;
  return {std::move(model), rmse};
}

Tensor predict_grad(const Predictor& predictor, const Tensor& encoding) {
  if (predictor.kind() == "lut") {
    throw UnsupportedError("predict_grad: lookup tables have a constant gradient, use lut_grad");
  }
  auto x = ad::parameter(encoding);
  ad::backward(predictor.graph(x));
  return x->grad();
}

Tensor lut_grad(const LutPredictor& lut) { return lut.table(); }

PredictionStats evaluate_predictor(const Predictor& predictor, std::span<const MeasurementRecord> records) {
  PredictionStats s;
  if (records.empty()) return s;
  std::vector<Tensor> encodings;
  encodings.reserve(records.size());
  for (const auto& r : records) encodings.push_back(r.encoding);
  const std::vector<double> pred = predictor.predict_batch(encodings);
  const double n = static_cast<double>(records.size());
  double sq = 0.0, total = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double r = pred[i] - records[i].value;
    sq += r * r;
    total += r;
  }
  s.rmse = std::sqrt(sq / n);
  s.mean_residual = total / n;
  double centered = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double r = pred[i] - records[i].value - s.mean_residual;
    centered += r * r;
  }
  s.debiased_rmse = std::sqrt(centered / n);
  return s;
}

}  // namespace nasc
