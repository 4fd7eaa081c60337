// SPDX-License-Identifier: Apache-2.0
#include "nasc/search_space.hpp"

#include <cmath>
#include <sstream>

#include "nasc/errors.hpp"

namespace nasc {

OperatorSpec OperatorSpec::skip() { return {OpKind::kSkipConnect, 0, Activation::kRelu, "skip"}; }

OperatorSpec OperatorSpec::expand(int ratio, Activation activation) {
  if (ratio <= 0) throw ConfigError("expansion ratio must be positive, got " + std::to_string(ratio));
  std::string label = "expand_e" + std::to_string(ratio);
  if (activation == Activation::kRelu6) label += "_relu6";
  return {OpKind::kExpandBlock, ratio, activation, std::move(label)};
}

OperatorSpec OperatorSpec::from_label(std::string_view label) {
  if (label == "skip") return skip();
  constexpr std::string_view prefix = "expand_e";
  if (label.substr(0, prefix.size()) == prefix) {
    std::string_view rest = label.substr(prefix.size());
    Activation act = Activation::kRelu;
    if (auto pos = rest.find("_relu6"); pos != std::string_view::npos && pos + 6 == rest.size()) {
      act = Activation::kRelu6;
      rest = rest.substr(0, pos);
    }
    if (!rest.empty() && rest.find_first_not_of("0123456789") == std::string_view::npos) {
      return expand(std::stoi(std::string(rest)), act);
    }
  }
  throw ConfigError("unknown operator label '" + std::string(label) + "'");
}

std::size_t OperatorSpec::parameter_count(std::size_t width) const {
  if (kind == OpKind::kSkipConnect) return 0;
  const std::size_t hidden = width * static_cast<std::size_t>(expansion_ratio);
  return width * hidden + hidden + hidden * width + width;
}

std::vector<OperatorSpec> desk_menu() {
  return {OperatorSpec::skip(), OperatorSpec::expand(1), OperatorSpec::expand(2), OperatorSpec::expand(4)};
}

std::vector<OperatorSpec> full_menu() {
  return {OperatorSpec::skip(),      OperatorSpec::expand(1), OperatorSpec::expand(2),
          OperatorSpec::expand(3),   OperatorSpec::expand(4), OperatorSpec::expand(6),
          OperatorSpec::expand(6, Activation::kRelu6)};
}

double ArchSpace::space_size() const {
  return std::pow(static_cast<double>(ops_per_layer()), static_cast<double>(searchable_layers()));
}

std::size_t ArchSpace::op_index(std::string_view label) const {
  for (std::size_t k = 0; k < menu.size(); ++k) {
    if (menu[k].label == label) return k;
  }
  throw ConfigError("operator '" + std::string(label) + "' is not in the menu");
}

void ArchSpace::validate() const {
  if (num_layers == 0) throw ConfigError("space: num_layers must be positive");
  if (menu.empty()) throw ConfigError("space: menu must not be empty");
  if (width == 0) throw ConfigError("space: width must be positive");
  if (first_layer_fixed && fixed_first_op >= menu.size()) {
    throw ConfigError("space: fixed_first_op " + std::to_string(fixed_first_op) + " outside menu of " +
                      std::to_string(menu.size()));
  }
  if (first_layer_fixed && num_layers < 2) throw ConfigError("space: a fixed first layer needs L >= 2");
}

ArchSpace ArchSpace::desk_default() { return ArchSpace{}; }

ArchSpace ArchSpace::full_preset() {
  ArchSpace s;
  s.num_layers = 22;
  s.menu = full_menu();
  s.width = 32;
  s.first_layer_fixed = true;
  s.fixed_first_op = 1;
  return s;
}

// ---------------------------------------------------------------------------
// Encodings

Tensor encode(const Architecture& arch, const ArchSpace& space) {
  const std::size_t L = space.num_layers, K = space.ops_per_layer();
  if (arch.ops.size() != L) {
    throw EncodingError("architecture has " + std::to_string(arch.ops.size()) + " layers, space has " +
                        std::to_string(L));
  }
  Tensor enc({L, K});
  for (std::size_t l = 0; l < L; ++l) {
    if (arch.ops[l] >= K) {
      throw EncodingError("layer " + std::to_string(l) + ": op index " + std::to_string(arch.ops[l]) +
                          " outside [0, " + std::to_string(K) + ")");
    }
    enc.at(l, arch.ops[l]) = 1.0;
  }
  return enc;
}

Architecture decode(const Tensor& encoding, const ArchSpace& space) {
  const std::size_t L = space.num_layers, K = space.ops_per_layer();
  if (encoding.shape() != ad::Shape{L, K}) {
    throw EncodingError("encoding shape " + ad::shape_string(encoding.shape()) + " does not match space " +
                        ad::shape_string({L, K}));
  }
  Architecture arch;
  arch.ops.reserve(L);
  for (std::size_t l = 0; l < L; ++l) {
    std::size_t ones = 0, index = 0;
    for (std::size_t k = 0; k < K; ++k) {
      const double v = encoding.at(l, k);
      if (v == 1.0) {
        ++ones;
        index = k;
      } else if (v != 0.0) {
        throw EncodingError("layer " + std::to_string(l) + ": entry " + std::to_string(k) + " is not 0/1");
      }
    }
    if (ones != 1) throw EncodingError("layer " + std::to_string(l) + " has " + std::to_string(ones) + " ones");
    arch.ops.push_back(index);
  }
  return arch;
}

Architecture random_architecture(const ArchSpace& space, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, space.ops_per_layer() - 1);
  Architecture arch;
  arch.ops.resize(space.num_layers);
  for (std::size_t l = 0; l < space.num_layers; ++l) {
    arch.ops[l] = (l == 0 && space.first_layer_fixed) ? space.fixed_first_op : pick(rng);
  }
  return arch;
}

// ---------------------------------------------------------------------------
// Probabilities and sampling

ArchParams::ArchParams(Tensor alpha) : node_(ad::parameter(std::move(alpha))) {}

ArchParams ArchParams::zeros(const ArchSpace& space) {
  return ArchParams(Tensor({space.num_layers, space.ops_per_layer()}));
}

Tensor layer_probs(const Tensor& alpha) { return ad::softmax_rows(alpha); }

double path_prob(const Architecture& arch, const Tensor& alpha) {
  const Tensor p = layer_probs(alpha);
  if (arch.ops.size() != p.rows()) throw EncodingError("path_prob: layer count mismatch");
  double prob = 1.0;
  for (std::size_t l = 0; l < arch.ops.size(); ++l) {
    if (arch.ops[l] >= p.cols()) throw EncodingError("path_prob: op index out of range");
    prob *= p.at(l, arch.ops[l]);
  }
  return prob;
}

Tensor sample_gumbel_noise(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Tensor g({rows, cols});
  for (std::size_t i = 0; i < g.size(); ++i) {
    double u = uniform(rng);
    while (u <= 0.0) u = uniform(rng);
    g[i] = -std::log(-std::log(u));
  }
  return g;
}

ad::NodeRef relaxed_selection(const ad::NodeRef& alpha, const Tensor& noise, double tau, GumbelInput input) {
  if (!(tau > 0.0)) throw ParameterError("gumbel temperature must be positive, got " + std::to_string(tau));
  ad::NodeRef base =
      input == GumbelInput::kLogProbabilities ? ad::log_softmax_rows(alpha) : ad::softmax_rows(alpha);
  return ad::softmax_rows(ad::scale(ad::add(base, ad::constant(noise)), 1.0 / tau));
}

Tensor hard_onehot(const Tensor& soft) {
  Tensor hard(soft.shape());
  for (std::size_t l = 0; l < soft.rows(); ++l) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < soft.cols(); ++k) {
      if (soft.at(l, k) > soft.at(l, best)) best = k;
    }
    hard.at(l, best) = 1.0;
  }
  return hard;
}

GumbelSample gumbel_sample(const Tensor& alpha, double tau, std::mt19937_64& rng, GumbelInput input) {
  if (!(tau > 0.0)) throw ParameterError("gumbel temperature must be positive, got " + std::to_string(tau));
  GumbelSample s;
  s.noise = sample_gumbel_noise(alpha.rows(), alpha.cols(), rng);
  s.soft = relaxed_selection(ad::constant(alpha), s.noise, tau, input)->value();
  s.hard = hard_onehot(s.soft);
  return s;
}

Architecture finalize(const Tensor& alpha, const ArchSpace& space) {
  Architecture arch = decode(hard_onehot(alpha), space);
  if (space.first_layer_fixed) arch.ops[0] = space.fixed_first_op;
  return arch;
}

// ---------------------------------------------------------------------------
// Files

nlohmann::json space_to_json(const ArchSpace& space) {
  nlohmann::json menu = nlohmann::json::array();
  for (const auto& op : space.menu) menu.push_back(op.label);
  nlohmann::json j{{"L", space.num_layers}, {"K", space.ops_per_layer()}, {"width", space.width}, {"menu", menu}};
  j["first_layer_fixed"] = space.first_layer_fixed;
  if (space.first_layer_fixed) j["fixed_first_op"] = space.menu[space.fixed_first_op].label;
  return j;
}

ArchSpace space_from_json(const nlohmann::json& j) {
  try {
    ArchSpace s;
    s.num_layers = j.at("L").get<std::size_t>();
    s.width = j.at("width").get<std::size_t>();
    s.menu.clear();
    for (const auto& label : j.at("menu")) s.menu.push_back(OperatorSpec::from_label(label.get<std::string>()));
    if (j.at("K").get<std::size_t>() != s.menu.size()) throw ParseError("space: K disagrees with menu length");
    s.first_layer_fixed = j.value("first_layer_fixed", false);
    if (s.first_layer_fixed) s.fixed_first_op = s.op_index(j.at("fixed_first_op").get<std::string>());
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("space: ") + e.what());
  }
}

nlohmann::json architecture_to_json(const Architecture& arch, const ArchSpace& space) {
  encode(arch, space);  // validates
  nlohmann::json layers = nlohmann::json::array();
  for (auto k : arch.ops) layers.push_back({{"op", space.menu[k].label}});
  return {{"layers", layers}, {"space", space_to_json(space)}};
}

std::pair<Architecture, ArchSpace> architecture_from_json(const nlohmann::json& j) {
  ArchSpace space = space_from_json(j.at("space"));
  Architecture arch;
  try {
    for (const auto& layer : j.at("layers")) arch.ops.push_back(space.op_index(layer.at("op").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("architecture: ") + e.what());
  }
  encode(arch, space);
  return {std::move(arch), std::move(space)};
}

std::string encoding_csv(const Tensor& encoding) {
  std::ostringstream os;
  for (std::size_t l = 0; l < encoding.rows(); ++l) {
    for (std::size_t k = 0; k < encoding.cols(); ++k) {
      os << (k ? "," : "") << (encoding.at(l, k) == 1.0 ? '1' : '0');
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace nasc
