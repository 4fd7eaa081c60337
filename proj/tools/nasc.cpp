// SPDX-License-Identifier: Apache-2.0
// nasc <measure|train-predictor|search|eval|sweep|multitarget> --config <file> [flags]
// Exit codes: 0 success, 1 runtime failure, 2 configuration error, 3 parse error.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nasc/config.hpp"
#include "nasc/data.hpp"
#include "nasc/errors.hpp"
#include "nasc/eval.hpp"
#include "nasc/format.hpp"
#include "nasc/hardware.hpp"
#include "nasc/search.hpp"
#include "nasc/search_space.hpp"

namespace fs = std::filesystem;
using namespace nasc;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitParse = 3;
constexpr double kTolerance = 0.02;

struct Common {
  std::string config_path;
  bool record_timing = false;
};

struct Context {
  RunConfig config;
  std::string hash;
  fs::path out_dir;
  bool record_timing = false;

  std::string comment() const {
    return "nasc config_hash=" + hash + " seed=" + std::to_string(config.seed);
  }
  fs::path output(const std::string& flag_value, const std::string& default_name) const {
    return flag_value.empty() ? out_dir / default_name : fs::path(flag_value);
  }
};

Context load_context(const Common& common) {
  Context ctx;
  ctx.config = load_run_config(common.config_path);
  if (const char* env = std::getenv("NASC_OUT_DIR"); env != nullptr && *env != '\0') {
    ctx.config.output_dir = env;
  }
  ctx.hash = config_hash(ctx.config);
  ctx.out_dir = ctx.config.output_dir;
  ctx.record_timing = common.record_timing;
  return ctx;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

nlohmann::json read_json(const fs::path& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw ConfigError(what + " '" + path.string() + "' does not exist");
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(what + " '" + path.string() + "': " + e.what());
  }
}

SyntheticDevice make_device(const Context& ctx) { return SyntheticDevice::generate(ctx.config.space, ctx.config.device); }

/// Measurements from `path` if given, otherwise drawn from the configured device.
MeasurementSet measurement_set(const Context& ctx, const std::optional<fs::path>& path) {
  if (path) {
    if (!fs::is_regular_file(*path)) throw ConfigError("measurements '" + path->string() + "' do not exist");
    return split_records(load_measurements(*path), ctx.config.predictor.train_fraction);
  }
  SyntheticDevice device = make_device(ctx);
  std::mt19937_64 rng(ctx.config.phase_seed(Phase::kMeasure));
  return sample_dataset(device, ctx.config.space, ctx.config.predictor.samples, rng,
                        ctx.config.predictor.train_fraction);
}

std::optional<fs::path> measurements_path(const Context& ctx, const std::string& flag) {
  if (!flag.empty()) return fs::path(flag);
  return ctx.config.predictor.measurements;
}

std::unique_ptr<Predictor> load_predictor(const Context& ctx, const std::string& flag, bool required) {
  std::optional<fs::path> path;
  if (!flag.empty()) path = flag;
  else if (ctx.config.predictor.file) path = ctx.config.predictor.file;
  if (!path) {
    if (required) throw ConfigError("a predictor is required: pass --predictor or set predictor.file");
    return nullptr;
  }
  auto p = predictor_from_json(read_json(*path, "predictor"));
  if (p->layers() != ctx.config.space.num_layers || p->ops() != ctx.config.space.ops_per_layer()) {
    throw ConfigError("predictor dimensions " + std::to_string(p->layers()) + "x" + std::to_string(p->ops()) +
                      " do not match the configured space");
  }
  return p;
}

struct Splits {
  DataSplit eval;
  DataSplit search;
};

Splits make_splits(const Context& ctx) {
  std::mt19937_64 rng(ctx.config.phase_seed(Phase::kData));
  Dataset data = make_dataset(ctx.config.data.params, rng);
  Splits s;
  s.eval = split_dataset(data, ctx.config.data.train_fraction);
  s.search = split_dataset(s.eval.train, ctx.config.data.search_fraction);
  return s;
}

std::string timing_field(const Context& ctx, double seconds) {
  return ctx.record_timing ? format_double(seconds) : std::string("NA");
}

std::string fixed(double v, int digits = 3) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---------------------------------------------------------------------------

int cmd_measure(const Context& ctx, std::optional<std::size_t> n, const std::string& out_flag) {
  SyntheticDevice device = make_device(ctx);
  std::mt19937_64 rng(ctx.config.phase_seed(Phase::kMeasure));
  const std::size_t count = n.value_or(ctx.config.predictor.samples);
  if (count == 0) throw ConfigError("--n must be positive");
  MeasurementSet set = sample_dataset(device, ctx.config.space, count, rng, ctx.config.predictor.train_fraction);
  const fs::path out = ctx.output(out_flag, "measurements.csv");
  write_text(out, measurements_to_csv(set.records, ctx.comment()));
  double lo = set.records.front().value, hi = lo, sum = 0.0;
  for (const auto& r : set.records) {
    lo = std::min(lo, r.value);
    hi = std::max(hi, r.value);
    sum += r.value;
  }
  const std::string unit = device.metric() == MetricKind::kLatency ? "ms" : "mJ";
  std::cout << "wrote " << set.records.size() << " records to " << out.string() << "\n"
            << "min " << fixed(lo) << " " << unit << "  mean " << fixed(sum / static_cast<double>(count)) << " "
            << unit << "  max " << fixed(hi) << " " << unit << "\n";
  return 0;
}

int cmd_train_predictor(const Context& ctx, const std::string& meas_flag, std::string kind,
                        const std::string& out_flag) {
  if (kind.empty()) kind = ctx.config.predictor.kind;
  if (kind != "mlp" && kind != "lut") throw ConfigError("--kind must be 'mlp' or 'lut'");
  const auto path = measurements_path(ctx, meas_flag);
  if (!path) throw ConfigError("--measurements is required (or set predictor.measurements)");
  MeasurementSet set = measurement_set(ctx, path);
  if (set.valid().empty()) throw ConfigError("measurement file leaves no held-out records");

  const LutPredictor lut = fit_lut(set.train(), &ctx.config.space);
  std::unique_ptr<Predictor> trained;
  if (kind == "mlp") {
    trained = std::make_unique<MlpPredictor>(fit_mlp(set.train(), set.valid(), ctx.config.predictor.mlp).predictor);
  } else {
    trained = std::make_unique<LutPredictor>(lut);
  }
  const PredictionStats stats = evaluate_predictor(*trained, set.valid());
  std::cout << kind << " held-out RMSE " << fixed(stats.rmse, 4) << "  mean residual " << fixed(stats.mean_residual, 4)
            << "  de-biased RMSE " << fixed(stats.debiased_rmse, 4) << "\n";

  // Isolated per-operator profiling reproduces the intercept gap of a summed table.
  SyntheticDevice device = make_device(ctx);
  const LutPredictor profiled = profile_lut(device, ctx.config.space);
  const PredictionStats pstats = evaluate_predictor(profiled, set.valid());
  std::cout << "profiled lut held-out RMSE " << fixed(pstats.rmse, 4) << "  mean residual "
            << fixed(pstats.mean_residual, 4) << "  de-biased RMSE " << fixed(pstats.debiased_rmse, 4) << "\n";

  const fs::path out = ctx.output(out_flag, "predictor_" + kind + ".json");
  nlohmann::json j = trained->to_json();
  j["meta"] = {{"config_hash", ctx.hash}, {"seed", ctx.config.seed}, {"valid_rmse", stats.rmse}};
  write_text(out, j.dump(1) + "\n");

  std::string fig = "# " + ctx.comment() + "\nmeasured,mlp_pred,lut_pred,profiled_lut_pred\n";
  for (const auto& r : set.valid()) {
    fig += format_double(r.value) + ',' + (kind == "mlp" ? format_double(trained->predict(r.encoding)) : "NA") + ',' +
           format_double(lut.predict(r.encoding)) + ',' + format_double(profiled.predict(r.encoding)) + '\n';
  }
  write_text(ctx.out_dir / "fig5.csv", fig);
  std::cout << "wrote " << out.string() << " and " << (ctx.out_dir / "fig5.csv").string() << "\n";
  return 0;
}

/// Feasible cost range from a least-squares table over the configured or
/// sampled measurements.
std::pair<double, double> feasible_range(const Context& ctx, const std::string& meas_flag) {
  MeasurementSet set = measurement_set(ctx, measurements_path(ctx, meas_flag));
  return fit_lut(set.records, &ctx.config.space).bounds();
}

nlohmann::json search_meta(const Context& ctx, const SearchConfig& c, const SearchResult& r) {
  nlohmann::json config = run_config_to_json(ctx.config);
  config.erase("paths");
  nlohmann::json meta{{"config", config},
                      {"config_hash", ctx.hash},
                      {"seed", ctx.config.seed},
                      {"search", search_config_to_json(c)},
                      {"final_predicted", r.final_latency},
                      {"final_lambda", r.final_lambda}};
  meta["wall_s"] = ctx.record_timing ? nlohmann::json(r.wall_seconds) : nlohmann::json("NA");
  return meta;
}

struct SearchFlags {
  std::optional<double> target;
  std::optional<double> lambda;
  bool accuracy_only = false;
  std::string predictor;
  std::string measurements;
  std::string out;
};

int cmd_search(const Context& ctx, const SearchFlags& f) {
  SearchConfig c = ctx.config.search;
  if (f.target) {
    c.objective = Objective::kLearnableLambda;
    c.target = *f.target;
  } else if (f.lambda) {
    c.objective = Objective::kFixedLambda;
    c.lambda_fixed = *f.lambda;
  } else if (f.accuracy_only) {
    c.objective = Objective::kAccuracyOnly;
  }
  c.validate();
  const bool needs_predictor = c.objective != Objective::kAccuracyOnly;
  auto predictor = load_predictor(ctx, f.predictor, needs_predictor);
  if (c.objective == Objective::kLearnableLambda) {
    const auto [lo, hi] = feasible_range(ctx, f.measurements);
    if (c.target < lo || c.target > hi) {
      throw ConfigError("target " + fixed(c.target) + " lies outside the feasible range [" + fixed(lo) + ", " +
                        fixed(hi) + "]");
    }
  }
  const Splits splits = make_splits(ctx);
  const SearchResult r = run_search(c, ctx.config.space, splits.search, predictor.get());

  const fs::path dir = ctx.output(f.out, "search");
  nlohmann::json arch = architecture_to_json(r.architecture, ctx.config.space);
  arch["meta"] = search_meta(ctx, c, r);
  write_text(dir / "architecture.json", arch.dump(1) + "\n");
  write_text(dir / "history.csv", history_to_csv(r.history, ctx.comment()));

  std::cout << "architecture " << architecture_id(r.architecture) << "\n";
  if (predictor) std::cout << "final predicted " << fixed(r.final_latency) << "\n";
  std::cout << "wall time " << fixed(r.wall_seconds, 1) << " s\n";
  if (c.objective == Objective::kLearnableLambda) {
    const double violation = std::abs(r.final_latency - c.target) / c.target;
    std::cout << "target " << fixed(c.target) << "  violation " << fixed(100.0 * violation, 2) << "%\n";
    return violation <= kTolerance ? 0 : kExitRuntime;
  }
  return 0;
}

void print_reports(const std::vector<EvalReport>& reports) {
  std::printf("%-12s %8s %6s %8s %10s %10s\n", "arch", "T", "seed", "top1", "pred", "meas");
  for (const auto& r : reports) {
    std::printf("%-12s %8s %6llu %8s %10s %10s\n", r.arch_id.c_str(), fixed(r.target, 2).c_str(),
                static_cast<unsigned long long>(r.seed), fixed(r.top1, 4).c_str(), fixed(r.pred_latency).c_str(),
                fixed(r.meas_latency).c_str());
  }
}

int cmd_eval(const Context& ctx, const std::string& arch_flag, const std::string& pred_flag,
             const std::string& out_flag) {
  if (arch_flag.empty()) throw ConfigError("--arch is required");
  auto [arch, space] = architecture_from_json(read_json(arch_flag, "architecture"));
  if (!(space == ctx.config.space)) throw ConfigError("architecture space differs from the configured space");
  auto predictor = load_predictor(ctx, pred_flag, false);
  const SyntheticDevice device = make_device(ctx);
  const Splits splits = make_splits(ctx);
  EvalReport r = train_standalone(arch, space, splits.eval, ctx.config.eval, predictor.get(), &device);
  const fs::path out = ctx.output(out_flag, "eval.csv");
  write_text(out, reports_to_csv({r}, ctx.record_timing, ctx.comment()));
  print_reports({r});
  return 0;
}

ExperimentInputs experiment_inputs(const Context& ctx, const Predictor* predictor, const SyntheticDevice* device) {
  const Splits splits = make_splits(ctx);
  return ExperimentInputs{ctx.config.space, splits.search, splits.eval, predictor, device};
}

int cmd_sweep(const Context& ctx, const std::vector<double>& lambdas, const std::string& pred_flag,
              const std::string& out_flag) {
  auto predictor = load_predictor(ctx, pred_flag, true);
  const SyntheticDevice device = make_device(ctx);
  const ExperimentInputs inputs = experiment_inputs(ctx, predictor.get(), &device);
  const auto rows = sweep_lambda(lambdas, ctx.config.search, ctx.config.eval, inputs);
  std::string csv = "# " + ctx.comment() + "\nlambda,arch_id,pred_latency_ms,meas_latency_ms,top1,all_skip,wall_s\n";
  std::vector<EvalReport> reports;
  for (const auto& row : rows) {
    csv += format_double(row.lambda) + ',' + row.report.arch_id + ',' + format_double(row.report.pred_latency) + ',' +
           format_double(row.report.meas_latency) + ',' + format_double(row.report.top1) + ',' +
           (row.all_skip ? "1" : "0") + ',' + timing_field(ctx, row.search.wall_seconds + row.report.wall_seconds) +
           '\n';
    reports.push_back(row.report);
  }
  write_text(ctx.output(out_flag, "fig3.csv"), csv);
  std::printf("%8s ", "lambda");
  print_reports({});
  for (const auto& row : rows) {
    std::printf("%8s ", fixed(row.lambda, 3).c_str());
    std::printf("%-12s %8s %6llu %8s %10s %10s%s\n", row.report.arch_id.c_str(), "NA",
                static_cast<unsigned long long>(row.report.seed), fixed(row.report.top1, 4).c_str(),
                fixed(row.report.pred_latency).c_str(), fixed(row.report.meas_latency).c_str(),
                row.all_skip ? "  all-skip" : "");
  }
  return 0;
}

int cmd_multitarget(const Context& ctx, const std::vector<double>& targets, std::size_t seeds, bool skip_eval,
                    const std::string& pred_flag, const std::string& meas_flag, const std::string& out_flag) {
  if (targets.empty()) throw ConfigError("--targets needs at least one value");
  auto predictor = load_predictor(ctx, pred_flag, true);
  const auto [lo, hi] = feasible_range(ctx, meas_flag);
  for (double t : targets) {
    if (t < lo || t > hi) {
      throw ConfigError("target " + fixed(t) + " lies outside the feasible range [" + fixed(lo) + ", " + fixed(hi) +
                        "]");
    }
  }
  const SyntheticDevice device = make_device(ctx);
  const ExperimentInputs inputs = experiment_inputs(ctx, predictor.get(), &device);
  const MultiTargetResult res =
      multi_target_experiment(targets, seeds, ctx.config.search, ctx.config.eval, inputs, !skip_eval);

  const fs::path dir = ctx.output(out_flag, "multitarget");
  std::string trace = "# " + ctx.comment() + "\nT_ms,seed,epoch,pred_latency_ms,sampled_latency_ms,lambda,tau\n";
  std::vector<EvalReport> reports;
  bool all_within = true;
  for (const auto& run : res.runs) {
    for (const auto& h : run.search.history) {
      trace += format_double(run.target) + ',' + std::to_string(run.seed) + ',' + std::to_string(h.epoch) + ',' +
               format_double(h.pred_latency) + ',' + format_double(h.sampled_latency) + ',' + format_double(h.lambda) +
               ',' + format_double(h.tau) + '\n';
    }
    reports.push_back(run.report);
    all_within = all_within && run.violation <= kTolerance;
  }
  write_text(dir / "fig7.csv", trace);
  write_text(dir / "reports.csv", reports_to_csv(reports, ctx.record_timing, ctx.comment()));
  print_reports(reports);
  std::printf("\n%8s %14s %14s %10s\n", "T", "mean viol %", "max viol %", "mean top1");
  for (const auto& s : res.summary) {
    std::printf("%8s %14s %14s %10s\n", fixed(s.target, 2).c_str(), fixed(100.0 * s.mean_violation, 2).c_str(),
                fixed(100.0 * s.max_violation, 2).c_str(), fixed(s.mean_top1, 4).c_str());
  }
  if (!skip_eval) std::cout << "accuracy non-decreasing in T: " << (res.accuracy_monotone ? "yes" : "no") << "\n";
  return all_within ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hardware-constrained differentiable architecture search"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "Run configuration JSON")->required();
    sub->add_flag("--record-timing", common.record_timing, "Write wall times into output files");
  };

  auto* measure = app.add_subcommand("measure", "Sample architectures and measure them on the synthetic device");
  add_common(measure);
  std::optional<std::size_t> n;
  std::string out;
  measure->add_option("--n", n, "Number of records (default predictor.samples)");
  measure->add_option("--out", out, "Output CSV");

  auto* train = app.add_subcommand("train-predictor", "Fit a cost predictor to measurements");
  add_common(train);
  std::string meas, kind;
  train->add_option("--measurements", meas, "Measurement CSV");
  train->add_option("--kind", kind, "mlp or lut")->check(CLI::IsMember({"mlp", "lut"}));
  train->add_option("--out", out, "Output predictor JSON");

  auto* search = app.add_subcommand("search", "Run one architecture search");
  add_common(search);
  SearchFlags sf;
  auto* t_opt = search->add_option("--target-ms", sf.target, "Cost target (learnable multiplier)");
  auto* l_opt = search->add_option("--lambda", sf.lambda, "Fixed penalty multiplier");
  auto* a_opt = search->add_flag("--accuracy-only", sf.accuracy_only, "Ignore hardware cost");
  t_opt->excludes(l_opt)->excludes(a_opt);
  l_opt->excludes(a_opt);
  search->add_option("--predictor", sf.predictor, "Predictor JSON");
  search->add_option("--measurements", sf.measurements, "Measurements for the feasibility precheck");
  search->add_option("--out", sf.out, "Output directory");

  auto* eval = app.add_subcommand("eval", "Train an architecture stand-alone and report it");
  add_common(eval);
  std::string arch, pred;
  eval->add_option("--arch", arch, "Architecture JSON")->required();
  eval->add_option("--predictor", pred, "Predictor JSON");
  eval->add_option("--out", out, "Output CSV");

  auto* sweep = app.add_subcommand("sweep", "Fixed-multiplier sweep");
  add_common(sweep);
  std::vector<double> lambdas{0.0, 0.25, 0.5, 1.0};
  sweep->add_option("--lambdas", lambdas, "Multiplier values")->expected(1, -1);
  sweep->add_option("--predictor", pred, "Predictor JSON");
  sweep->add_option("--out", out, "Output CSV");

  auto* multi = app.add_subcommand("multitarget", "Learnable-multiplier searches for several targets");
  add_common(multi);
  std::vector<double> targets;
  std::size_t seeds = 3;
  bool skip_eval = false;
  multi->add_option("--targets", targets, "Cost targets")->required()->expected(1, -1);
  multi->add_option("--seeds", seeds, "Searches per target")->check(CLI::PositiveNumber);
  multi->add_flag("--skip-eval", skip_eval, "Search only");
  multi->add_option("--predictor", pred, "Predictor JSON");
  multi->add_option("--measurements", meas, "Measurements for the feasibility precheck");
  multi->add_option("--out", out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const Context ctx = load_context(common);
    if (*measure) return cmd_measure(ctx, n, out);
    if (*train) return cmd_train_predictor(ctx, meas, kind, out);
    if (*search) return cmd_search(ctx, sf);
    if (*eval) return cmd_eval(ctx, arch, pred, out);
    if (*sweep) return cmd_sweep(ctx, lambdas, pred, out);
    if (*multi) return cmd_multitarget(ctx, targets, seeds, skip_eval, pred, meas, out);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  } catch (const ValidationError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
