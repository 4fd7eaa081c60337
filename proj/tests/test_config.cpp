// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "nasc/config.hpp"
#include "nasc/errors.hpp"

using namespace nasc;
namespace fs = std::filesystem;
using nlohmann::json;

TEST_CASE("empty document yields the desk defaults") {
  const RunConfig c = run_config_from_json(json::object());
  CHECK(c.space == ArchSpace::desk_default());
  CHECK(c.seed == 0);
  CHECK(c.search.epochs == 20);
  CHECK(c.predictor.samples == 10000);
  CHECK(c.output_dir == "nasc_out");
}

TEST_CASE("phase seeds are offsets of the run seed") {
  const RunConfig c = run_config_from_json(json{{"seed", 7}});
  CHECK(c.phase_seed(Phase::kDevice) == 108);
  CHECK(c.device.seed == 108);
  CHECK(c.predictor.mlp.seed == 310);
  CHECK(c.search.seed == 512);
  CHECK(c.eval.seed == 613);
}

TEST_CASE("sections overlay key by key") {
  const RunConfig c = run_config_from_json(json{
      {"space", {{"L", 5}, {"width", 16}, {"menu", {"skip", "expand_e1", "expand_e3"}}, {"fixed_first_op", "expand_e1"}}},
      {"device", {{"preset", "energy"}, {"noise_sd", 0.1}}},
      {"search", {{"epochs", 7}, {"target_ms", 30.0}}},
      {"data", {{"samples", 500}, {"turns", 1.5}}},
      {"paths", {{"output", "elsewhere"}}}});
  CHECK(c.space.num_layers == 5);
  CHECK(c.space.width == 16);
  CHECK(c.space.ops_per_layer() == 3);
  CHECK(c.space.fixed_first_op == 1);
  CHECK(c.device.metric == MetricKind::kEnergy);
  CHECK(c.device.noise_sd == 0.1);
  CHECK(c.search.epochs == 7);
  CHECK(c.search.target == 30.0);
  CHECK(c.search.warmup_epochs == 3);
  CHECK(c.data.params.samples == 500);
  CHECK(c.data.params.turns == 1.5);
  CHECK(c.output_dir == "elsewhere");
  CHECK(run_config_from_json(json{{"space", {{"preset", "full"}}}}).space.searchable_layers() == 21);
}

TEST_CASE("broken documents are rejected") {
  CHECK_THROWS_AS(run_config_from_json(json{{"serach", json::object()}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json{{"space", {{"layers", 3}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json{{"space", {{"preset", "huge"}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json{{"space", {{"L", "eight"}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json{{"space", {{"K", 5}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json{{"device", {{"preset", "gpu"}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json{{"predictor", {{"kind", "tree"}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json{{"predictor", {{"file", "/nonexistent/p.json"}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json{{"search", {{"epochs", 2}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json{{"data", {{"train_fraction", 1.5}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(json::array()), ConfigError);
}

TEST_CASE("resolved documents round trip with a stable hash") {
  const RunConfig c = run_config_from_json(json{{"seed", 3}, {"search", {{"epochs", 9}}}});
  const RunConfig back = run_config_from_json(run_config_to_json(c));
  CHECK(run_config_to_json(back) == run_config_to_json(c));
  CHECK(config_hash(back) == config_hash(c));
  CHECK(config_hash(c).size() == 16);
  RunConfig moved = c;
  moved.output_dir = "elsewhere";
  CHECK(config_hash(moved) == config_hash(c));
  CHECK(config_hash(c) != config_hash(run_config_from_json(json{{"seed", 4}, {"search", {{"epochs", 9}}}})));

  const DeviceParams e = DeviceParams::energy_default();
  const DeviceParams d = device_params_from_json(device_params_to_json(e));
  CHECK(device_params_to_json(d) == device_params_to_json(e));
}

TEST_CASE("loading from disk") {
  const fs::path dir = fs::temp_directory_path() / "nasc_test_config";
  fs::create_directories(dir);
  std::ofstream(dir / "good.json") << R"({"seed": 2, "eval": {"epochs": 5}})";
  std::ofstream(dir / "bad.json") << R"({"seed": 2,)";
  CHECK(load_run_config(dir / "good.json").eval.epochs == 5);
  CHECK_THROWS_AS(load_run_config(dir / "bad.json"), ParseError);
  CHECK_THROWS_AS(load_run_config(dir / "missing.json"), ConfigError);
  fs::remove_all(dir);
}
