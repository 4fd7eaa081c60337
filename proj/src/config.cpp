// SPDX-License-Identifier: Apache-2.0
#include "nasc/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "nasc/errors.hpp"

namespace nasc {

namespace {

template <typename F>
void with_json_errors(const std::string& section, F&& body) {
  try {
    body();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(section + " section: " + e.what());
  }
}

void require_object(const nlohmann::json& j, const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + " section must be an object");
}

[[noreturn]] void unknown_key(const std::string& section, const std::string& key) {
  throw ConfigError("unknown key '" + section + "." + key + "'");
}

ArchSpace space_overlay(const nlohmann::json& j, ArchSpace s) {
  require_object(j, "space");
  if (auto it = j.find("preset"); it != j.end()) {
    const auto name = it->get<std::string>();
    if (name == "desk") s = ArchSpace::desk_default();
    else if (name == "full") s = ArchSpace::full_preset();
    else throw ConfigError("unknown space preset '" + name + "'");
  }
  std::optional<std::string> fixed_label;
  std::optional<std::size_t> declared_k;
  with_json_errors("space", [&] {
    for (const auto& [key, v] : j.items()) {
      if (key == "preset") continue;
      if (key == "L") s.num_layers = v.get<std::size_t>();
      else if (key == "width") s.width = v.get<std::size_t>();
      else if (key == "K") declared_k = v.get<std::size_t>();
      else if (key == "first_layer_fixed") s.first_layer_fixed = v.get<bool>();
      else if (key == "fixed_first_op") fixed_label = v.get<std::string>();
      else if (key == "menu") {
        s.menu.clear();
        for (const auto& label : v) s.menu.push_back(OperatorSpec::from_label(label.get<std::string>()));
      } else {
        unknown_key("space", key);
      }
    }
  });
  if (declared_k && *declared_k != s.ops_per_layer()) {
    throw ConfigError("space.K is " + std::to_string(*declared_k) + " but the menu has " +
                      std::to_string(s.ops_per_layer()) + " operators");
  }
  if (fixed_label) s.fixed_first_op = s.op_index(*fixed_label);
  s.validate();
  return s;
}

PredictorSection predictor_overlay(const nlohmann::json& j, PredictorSection p) {
  require_object(j, "predictor");
  with_json_errors("predictor", [&] {
    for (const auto& [key, v] : j.items()) {
      if (key == "kind") p.kind = v.get<std::string>();
      else if (key == "samples") p.samples = v.get<std::size_t>();
      else if (key == "train_fraction") p.train_fraction = v.get<double>();
      else if (key == "hidden") p.mlp.hidden = v.get<std::vector<std::size_t>>();
      else if (key == "epochs") p.mlp.epochs = v.get<std::size_t>();
      else if (key == "batch_size") p.mlp.batch_size = v.get<std::size_t>();
      else if (key == "lr") p.mlp.lr = v.get<double>();
      else if (key == "file") p.file = v.get<std::string>();
      else if (key == "measurements") p.measurements = v.get<std::string>();
      else unknown_key("predictor", key);
    }
  });
  return p;
}

nlohmann::json predictor_to_json(const PredictorSection& p) {
  nlohmann::json j{{"kind", p.kind},       {"samples", p.samples},         {"train_fraction", p.train_fraction},
                   {"hidden", p.mlp.hidden}, {"epochs", p.mlp.epochs},       {"batch_size", p.mlp.batch_size},
                   {"lr", p.mlp.lr}};
  if (p.file) j["file"] = p.file->string();
  if (p.measurements) j["measurements"] = p.measurements->string();
  return j;
}

DataSection data_overlay(const nlohmann::json& j, DataSection d) {
  require_object(j, "data");
  with_json_errors("data", [&] {
    for (const auto& [key, v] : j.items()) {
      if (key == "kind") d.params.kind = dataset_kind_from_string(v.get<std::string>());
      else if (key == "samples") d.params.samples = v.get<std::size_t>();
      else if (key == "classes") d.params.classes = v.get<std::size_t>();
      else if (key == "dim") d.params.dim = v.get<std::size_t>();
      else if (key == "separation") d.params.separation = v.get<double>();
      else if (key == "noise") d.params.noise = v.get<double>();
      else if (key == "turns") d.params.turns = v.get<double>();
      else if (key == "idx_images") d.params.idx_images = v.get<std::string>();
      else if (key == "idx_labels") d.params.idx_labels = v.get<std::string>();
      else if (key == "train_fraction") d.train_fraction = v.get<double>();
      else if (key == "search_fraction") d.search_fraction = v.get<double>();
      else unknown_key("data", key);
    }
  });
  return d;
}

nlohmann::json data_to_json(const DataSection& d) {
  nlohmann::json j{{"kind", to_string(d.params.kind)},
                   {"samples", d.params.samples},
                   {"classes", d.params.classes},
                   {"dim", d.params.dim},
                   {"separation", d.params.separation},
                   {"noise", d.params.noise},
                   {"turns", d.params.turns},
                   {"train_fraction", d.train_fraction},
                   {"search_fraction", d.search_fraction}};
  if (d.params.kind == DatasetKind::kIdx) {
    j["idx_images"] = d.params.idx_images.string();
    j["idx_labels"] = d.params.idx_labels.string();
  }
  return j;
}

void require_file(const std::filesystem::path& p, const std::string& what) {
  if (!std::filesystem::is_regular_file(p)) throw ConfigError(what + " '" + p.string() + "' does not exist");
}

}  // namespace

nlohmann::json device_params_to_json(const DeviceParams& p) {
  return {{"metric", to_string(p.metric)},
          {"base_overhead", p.base_overhead},
          {"interaction_coeff", p.interaction_coeff},
          {"noise_sd", p.noise_sd},
          {"cost_min", p.cost_min},
          {"cost_max", p.cost_max},
          {"launch_overhead", p.launch_overhead},
          {"unit_scale", p.unit_scale},
          {"relative_noise", p.relative_noise}};
}

DeviceParams device_params_from_json(const nlohmann::json& j, DeviceParams p) {
  require_object(j, "device");
  if (auto it = j.find("preset"); it != j.end()) {
    const auto name = it->get<std::string>();
    if (name == "latency") p = DeviceParams{};
    else if (name == "energy") p = DeviceParams::energy_default();
    else throw ConfigError("unknown device preset '" + name + "'");
  }
  with_json_errors("device", [&] {
    for (const auto& [key, v] : j.items()) {
      if (key == "preset") continue;
      if (key == "metric") p.metric = metric_from_string(v.get<std::string>());
      else if (key == "base_overhead") p.base_overhead = v.get<double>();
      else if (key == "interaction_coeff") p.interaction_coeff = v.get<double>();
      else if (key == "noise_sd") p.noise_sd = v.get<double>();
      else if (key == "cost_min") p.cost_min = v.get<double>();
      else if (key == "cost_max") p.cost_max = v.get<double>();
      else if (key == "launch_overhead") p.launch_overhead = v.get<double>();
      else if (key == "unit_scale") p.unit_scale = v.get<double>();
      else if (key == "relative_noise") p.relative_noise = v.get<double>();
      else unknown_key("device", key);
    }
  });
  return p;
}

void RunConfig::validate() const {
  space.validate();
  search.validate();
  eval.validate();
  if (predictor.kind != "mlp" && predictor.kind != "lut") {
    throw ConfigError("predictor.kind must be 'mlp' or 'lut', got '" + predictor.kind + "'");
  }
  if (predictor.samples == 0) throw ConfigError("predictor.samples must be positive");
  if (!(predictor.train_fraction > 0.0 && predictor.train_fraction < 1.0)) {
    throw ConfigError("predictor.train_fraction must lie in (0, 1)");
  }
  if (predictor.file) require_file(*predictor.file, "predictor.file");
  if (predictor.measurements) require_file(*predictor.measurements, "predictor.measurements");
  if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0)) throw ConfigError("data.train_fraction must lie in (0, 1)");
  if (!(data.search_fraction > 0.0 && data.search_fraction < 1.0)) {
    throw ConfigError("data.search_fraction must lie in (0, 1)");
  }
  if (data.params.kind == DatasetKind::kIdx) {
    require_file(data.params.idx_images, "data.idx_images");
    require_file(data.params.idx_labels, "data.idx_labels");
  }
  if (output_dir.empty()) throw ConfigError("paths.output must not be empty");
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  require_object(j, "top-level");
  RunConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "space") c.space = space_overlay(v, c.space);
    else if (key == "device") c.device = device_params_from_json(v, c.device);
    else if (key == "predictor") c.predictor = predictor_overlay(v, c.predictor);
    else if (key == "search") c.search = search_config_from_json(v, c.search);
    else if (key == "eval") c.eval = eval_config_from_json(v, c.eval);
    else if (key == "data") c.data = data_overlay(v, c.data);
    else if (key == "paths") {
      require_object(v, "paths");
      with_json_errors("paths", [&] {
        for (const auto& [pk, pv] : v.items()) {
          if (pk == "output") c.output_dir = pv.get<std::string>();
          else unknown_key("paths", pk);
        }
      });
    } else if (key == "seed") {
      with_json_errors("seed", [&] { c.seed = v.get<std::uint64_t>(); });
    } else {
      throw ConfigError("unknown top-level key '" + key + "'");
    }
  }
  c.device.seed = c.phase_seed(Phase::kDevice);
  c.predictor.mlp.seed = c.phase_seed(Phase::kPredictor);
  c.search.seed = c.phase_seed(Phase::kSearch);
  c.eval.seed = c.phase_seed(Phase::kEval);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config '" + path.string() + "': " + e.what());
  }
  return run_config_from_json(j);
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  return {{"space", space_to_json(c.space)},
          {"device", device_params_to_json(c.device)},
          {"predictor", predictor_to_json(c.predictor)},
          {"search", search_config_to_json(c.search)},
          {"eval", eval_config_to_json(c.eval)},
          {"data", data_to_json(c.data)},
          {"paths", {{"output", c.output_dir.string()}}},
          {"seed", c.seed}};
}

std::string config_hash(const RunConfig& c) {
  nlohmann::json j = run_config_to_json(c);
  j.erase("paths");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace nasc
