// SPDX-License-Identifier: Apache-2.0
#include "nasc/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "nasc/errors.hpp"
#include "nasc/format.hpp"
#include "nasc/optim.hpp"
#include "nasc/supernet.hpp"

namespace nasc {

namespace {

constexpr std::size_t kScoreChunk = 1024;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

void EvalConfig::validate() const {
  if (epochs == 0) throw ConfigError("eval: epochs must be at least 1");
  if (batch_size == 0) throw ConfigError("eval: batch_size must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("eval: dropout must lie in [0, 1)");
  if (!(lr > 0.0 && warmup_start_lr >= 0.0)) throw ConfigError("eval: learning rates must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("eval: momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("eval: weight_decay must be non-negative");
  if (grad_clip < 0.0) throw ConfigError("eval: grad_clip must be non-negative");
  if (warmup_epochs >= epochs) throw ConfigError("eval: warmup_epochs must be below epochs");
}

EvalConfig EvalConfig::desk_default() { return EvalConfig{}; }

EvalConfig EvalConfig::full_preset() {
  EvalConfig c;
  c.epochs = 360;
  c.batch_size = 1024;
  c.lr = 0.5;
  c.warmup_start_lr = 0.1;
  c.warmup_epochs = 5;
  return c;
}

nlohmann::json eval_config_to_json(const EvalConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"warmup_start_lr", c.warmup_start_lr},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"grad_clip", c.grad_clip},
          {"warmup_epochs", c.warmup_epochs},
          {"dropout", c.dropout}};
}

EvalConfig eval_config_from_json(const nlohmann::json& j, EvalConfig c) {
  if (!j.is_object()) throw ConfigError("eval section must be an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "lr") c.lr = v.get<double>();
      else if (key == "warmup_start_lr") c.warmup_start_lr = v.get<double>();
      else if (key == "momentum") c.momentum = v.get<double>();
      else if (key == "weight_decay") c.weight_decay = v.get<double>();
      else if (key == "grad_clip") c.grad_clip = v.get<double>();
      else if (key == "warmup_epochs") c.warmup_epochs = v.get<std::size_t>();
      else if (key == "dropout") c.dropout = v.get<double>();
      else throw ConfigError("unknown key 'eval." + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("eval section: ") + e.what());
  }
  return c;
}

std::string architecture_id(const Architecture& arch) {
  std::string id;
  for (auto k : arch.ops) id += k < 10 ? static_cast<char>('0' + k) : '?';
  return id;
}

double accuracy(const StandaloneNet& net, const Dataset& data) {
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += kScoreChunk) {
    const std::size_t end = std::min(data.size(), start + kScoreChunk);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor logits = net.forward(ad::constant(gather_rows(data.features, idx)))->value();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.cols(); ++c) {
        if (logits.at(i, c) > logits.at(i, best)) best = c;
      }
      correct += static_cast<int>(best) == data.labels[start + i] ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

EvalReport train_standalone(const Architecture& arch, const ArchSpace& space, const DataSplit& data,
                            const EvalConfig& config, const Predictor* predictor,
                            const SyntheticDevice* device) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  StandaloneNet net(space, arch, data.train.dim(), data.train.num_classes, config.seed);
  MomentumSgd opt(net.parameters(), config.momentum, config.weight_decay);
  std::mt19937_64 rng(config.seed + 1);
  const std::size_t batches = (data.train.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total = batches * config.epochs;
  const std::size_t warmup = batches * config.warmup_epochs;
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  ForwardOptions train_opts{config.dropout, &rng};
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t s = 0; s < order.size(); s += config.batch_size) {
      std::span<const std::size_t> idx(order.data() + s, std::min(config.batch_size, order.size() - s));
      auto x = ad::constant(gather_rows(data.train.features, idx));
      const auto labels = gather_labels(data.train.labels, idx);
      ad::NodeRef loss;
      try {
        loss = ad::cross_entropy(net.forward(x, train_opts), labels);
      } catch (const DomainError& e) {
        throw DomainError("stand-alone training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      opt.zero_grad();
      ad::backward(loss);
      clip_grad_norm(opt.params(), config.grad_clip);
      opt.step(warmup_cosine_lr(config.warmup_start_lr, config.lr, step++, warmup, total));
    }
  }
  EvalReport r;
  r.arch_id = architecture_id(arch);
  r.target = kNaN;
  r.seed = config.seed;
  r.train_accuracy = accuracy(net, data.train);
  r.top1 = accuracy(net, data.valid);
  r.pred_latency = predictor ? predictor->predict(encode(arch, space)) : kNaN;
  if (device) {
    SyntheticDevice probe = *device;
    r.meas_latency = probe.measure(arch);
  } else {
    r.meas_latency = kNaN;
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

bool is_all_skip(const Architecture& arch, const ArchSpace& space) {
  for (std::size_t l = space.first_layer_fixed ? 1 : 0; l < arch.ops.size(); ++l) {
    if (space.menu.at(arch.ops[l]).kind != OpKind::kSkipConnect) return false;
  }
  return true;
}

std::vector<SweepRow> sweep_lambda(const std::vector<double>& lambdas, const SearchConfig& base,
                                   const EvalConfig& eval, const ExperimentInputs& inputs) {
  std::vector<SweepRow> rows;
  for (double lambda : lambdas) {
    SearchConfig c = base;
    c.objective = Objective::kFixedLambda;
    c.lambda_fixed = lambda;
    SweepRow row;
    row.lambda = lambda;
    row.search = run_search(c, inputs.space, inputs.search_data, inputs.predictor);
    row.architecture = row.search.architecture;
    row.all_skip = is_all_skip(row.architecture, inputs.space);
    row.report =
        train_standalone(row.architecture, inputs.space, inputs.eval_data, eval, inputs.predictor, inputs.device);
    rows.push_back(std::move(row));
  }
  return rows;
}

double tail_deviation(const std::vector<HistoryRow>& history, double target) {
  if (history.empty()) return kNaN;
  const std::size_t tail = std::max<std::size_t>(1, history.size() / 4);
  double worst = 0.0;
  for (std::size_t i = history.size() - tail; i < history.size(); ++i) {
    worst = std::max(worst, std::abs(history[i].pred_latency - target) / target);
  }
  return worst;
}

MultiTargetResult multi_target_experiment(const std::vector<double>& targets, std::size_t seeds,
                                          const SearchConfig& base, const EvalConfig& eval,
                                          const ExperimentInputs& inputs, bool evaluate) {
  if (seeds == 0) throw ConfigError("multi-target: need at least one seed per target");
  MultiTargetResult out;
  for (double target : targets) {
    TargetSummary s;
    s.target = target;
    for (std::size_t i = 0; i < seeds; ++i) {
      SearchConfig c = base;
      c.objective = Objective::kLearnableLambda;
      c.target = target;
      c.seed = base.seed + i;
      TargetRun run;
      run.target = target;
      run.seed = c.seed;
      run.search = run_search(c, inputs.space, inputs.search_data, inputs.predictor);
      run.violation = std::abs(run.search.final_latency - target) / target;
      run.tail_deviation = tail_deviation(run.search.history, target);
      if (evaluate) {
        EvalConfig e = eval;
        e.seed = eval.seed + i;
        run.report =
            train_standalone(run.search.architecture, inputs.space, inputs.eval_data, e, inputs.predictor, inputs.device);
      } else {
        run.report.arch_id = architecture_id(run.search.architecture);
        run.report.seed = eval.seed + i;
        run.report.top1 = kNaN;
        run.report.pred_latency = run.search.final_latency;
        run.report.meas_latency = kNaN;
      }
      run.report.target = target;
      s.mean_violation += run.violation / static_cast<double>(seeds);
      s.max_violation = std::max(s.max_violation, run.violation);
      s.mean_top1 += run.report.top1 / static_cast<double>(seeds);
      out.runs.push_back(std::move(run));
    }
    out.summary.push_back(s);
  }
  std::vector<TargetSummary> sorted = out.summary;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.target < b.target; });
  out.accuracy_monotone = true;
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (!(sorted[i].mean_top1 >= sorted[i - 1].mean_top1)) out.accuracy_monotone = false;
  }
  return out;
}

std::string reports_to_csv(const std::vector<EvalReport>& reports, bool record_timing, const std::string& comment) {
  std::string out;
  if (!comment.empty()) out += "# " + comment + "\n";
  out += "arch_id,T_ms,seed,top1,pred_latency_ms,meas_latency_ms,wall_s\n";
  for (const auto& r : reports) {
    out += r.arch_id + ',' + (std::isnan(r.target) ? std::string("NA") : format_double(r.target)) + ',' +
           std::to_string(r.seed) + ',' + format_double(r.top1) + ',' + format_double(r.pred_latency) + ',' +
           format_double(r.meas_latency) + ',' + (record_timing ? format_double(r.wall_seconds) : std::string("NA")) +
           '\n';
  }
  return out;
}

}  // namespace nasc
