// SPDX-License-Identifier: Apache-2.0
#include "nasc/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "nasc/format.hpp"

namespace nasc {

namespace {

constexpr std::uint64_t kNetSeedOffset = 1;
constexpr std::uint64_t kRngSeedOffset = 2;

std::vector<ad::NodeRef> alpha_params(const ArchParams& a) { return {a.node()}; }

Tensor fixed_row_onehot(const ArchSpace& space) {
  Tensor t({space.num_layers, space.ops_per_layer()});
  if (space.first_layer_fixed) t.at(0, space.fixed_first_op) = 1.0;
  return t;
}

Tensor searchable_mask(const ArchSpace& space) {
  Tensor t({space.num_layers, space.ops_per_layer()}, 1.0);
  if (space.first_layer_fixed) {
    for (std::size_t k = 0; k < space.ops_per_layer(); ++k) t.at(0, k) = 0.0;
  }
  return t;
}

/// Relaxed encoding for the multi-path mode: softmax rows, with the fixed
/// first row replaced by its one-hot.
ad::NodeRef mixture_encoding(const ad::NodeRef& alpha, const ArchSpace& space) {
  ad::NodeRef p = ad::softmax_rows(alpha);
  if (!space.first_layer_fixed) return p;
  return ad::add(ad::mul(p, ad::constant(searchable_mask(space))), ad::constant(fixed_row_onehot(space)));
}

void mask_fixed_row_grad(const ArchParams& alpha, const ArchSpace& space) {
  if (!space.first_layer_fixed) return;
  const ad::NodeRef& node = alpha.node();
  if (!node->has_grad()) return;
  const Tensor& g = node->grad();
  for (std::size_t k = 0; k < space.ops_per_layer(); ++k) {
    const double v = g.at(0, k);
    if (v != 0.0) node->accumulate_grad_at(k, -v);
  }
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; s += batch) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, s + batch)));
  }
  return out;
}

Batch make_batch(const Dataset& d, const std::vector<std::size_t>& idx) {
  return {gather_rows(d.features, idx), gather_labels(d.labels, idx)};
}

double finalized_latency(const SearchState& state, const Predictor* predictor) {
  if (predictor == nullptr) return std::numeric_limits<double>::quiet_NaN();
  const ArchSpace& space = state.net.space();
  return predictor->predict(encode(finalize(state.alpha.values(), space), space));
}

double selection_latency(const SearchState& state, const Predictor& predictor, const SearchConfig& config) {
  if (config.mode == SupernetMode::kMultiPath) {
    return predictor.predict(mixture_encoding(ad::constant(state.alpha.values()), state.net.space())->value());
  }
  return predictor.predict(state.current.hard);
}

}  // namespace

std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::kAccuracyOnly: return "accuracy_only";
    case Objective::kFixedLambda: return "fixed_lambda";
    case Objective::kLearnableLambda: return "learnable_lambda";
  }
  return "?";
}

Objective objective_from_string(std::string_view s) {
  if (s == "accuracy_only") return Objective::kAccuracyOnly;
  if (s == "fixed_lambda") return Objective::kFixedLambda;
  if (s == "learnable_lambda") return Objective::kLearnableLambda;
  throw ConfigError("unknown objective '" + std::string(s) + "'");
}

std::string_view to_string(SupernetMode m) { return m == SupernetMode::kSinglePath ? "single_path" : "multi_path"; }

SupernetMode supernet_mode_from_string(std::string_view s) {
  if (s == "single_path") return SupernetMode::kSinglePath;
  if (s == "multi_path") return SupernetMode::kMultiPath;
  throw ConfigError("unknown supernet mode '" + std::string(s) + "'");
}

void SearchConfig::validate() const {
  if (!(epochs > warmup_epochs)) throw ConfigError("search: epochs must exceed warmup_epochs");
  if (batch_size == 0) throw ConfigError("search: batch_size must be positive");
  if (objective == Objective::kLearnableLambda && !(target > 0.0)) throw ConfigError("search: target must be positive");
  if (!(lr_w > 0.0 && lr_alpha > 0.0 && lr_lambda > 0.0)) throw ConfigError("search: learning rates must be positive");
  if (!(tau_init > tau_min && tau_min > 0.0)) throw ConfigError("search: need tau_init > tau_min > 0");
  if (!(momentum_w >= 0.0 && momentum_w < 1.0)) throw ConfigError("search: momentum_w must lie in [0, 1)");
  if (grad_clip_w < 0.0) throw ConfigError("search: grad_clip_w must be non-negative");
  if (!(wd_w >= 0.0 && wd_alpha >= 0.0)) throw ConfigError("search: weight decay must be non-negative");
  if (!std::isfinite(lambda_fixed) || !std::isfinite(lambda_init)) throw ConfigError("search: lambda must be finite");
}

SearchConfig SearchConfig::desk_default() { return SearchConfig{}; }

SearchConfig SearchConfig::full_preset() {
  SearchConfig c;
  c.epochs = 90;
  c.warmup_epochs = 10;
  c.batch_size = 128;
  c.lr_w = 0.1;
  c.lr_alpha = 1e-3;
  c.lr_lambda = 5e-4;
  return c;
}

nlohmann::json search_config_to_json(const SearchConfig& c) {
  return {{"objective", to_string(c.objective)},
          {"mode", to_string(c.mode)},
          {"target_ms", c.target},
          {"lambda_fixed", c.lambda_fixed},
          {"lambda_init", c.lambda_init},
          {"epochs", c.epochs},
          {"warmup_epochs", c.warmup_epochs},
          {"batch_size", c.batch_size},
          {"lr_w", c.lr_w},
          {"momentum_w", c.momentum_w},
          {"wd_w", c.wd_w},
          {"grad_clip_w", c.grad_clip_w},
          {"lr_alpha", c.lr_alpha},
          {"wd_alpha", c.wd_alpha},
          {"lr_lambda", c.lr_lambda},
          {"tau_init", c.tau_init},
          {"tau_min", c.tau_min},
          {"gumbel_input", c.gumbel_input == GumbelInput::kLogProbabilities ? "log_probabilities" : "probabilities"},
          {"lambda_signal", c.lambda_signal == LambdaSignal::kSampled ? "sampled" : "finalized"}};
}

SearchConfig search_config_from_json(const nlohmann::json& j, SearchConfig c) {
  if (!j.is_object()) throw ConfigError("search section must be an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "objective") c.objective = objective_from_string(v.get<std::string>());
      else if (key == "mode") c.mode = supernet_mode_from_string(v.get<std::string>());
      else if (key == "target_ms") c.target = v.get<double>();
      else if (key == "lambda_fixed") c.lambda_fixed = v.get<double>();
      else if (key == "lambda_init") c.lambda_init = v.get<double>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "warmup_epochs") c.warmup_epochs = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "lr_w") c.lr_w = v.get<double>();
      else if (key == "momentum_w") c.momentum_w = v.get<double>();
      else if (key == "wd_w") c.wd_w = v.get<double>();
      else if (key == "grad_clip_w") c.grad_clip_w = v.get<double>();
      else if (key == "lr_alpha") c.lr_alpha = v.get<double>();
      else if (key == "wd_alpha") c.wd_alpha = v.get<double>();
      else if (key == "lr_lambda") c.lr_lambda = v.get<double>();
      else if (key == "tau_init") c.tau_init = v.get<double>();
      else if (key == "tau_min") c.tau_min = v.get<double>();
      else if (key == "gumbel_input") {
        const auto s = v.get<std::string>();
        if (s == "log_probabilities") c.gumbel_input = GumbelInput::kLogProbabilities;
        else if (s == "probabilities") c.gumbel_input = GumbelInput::kProbabilities;
        else throw ConfigError("unknown gumbel_input '" + s + "'");
      } else if (key == "lambda_signal") {
        const auto s = v.get<std::string>();
        if (s == "sampled") c.lambda_signal = LambdaSignal::kSampled;
        else if (s == "finalized") c.lambda_signal = LambdaSignal::kFinalized;
        else throw ConfigError("unknown lambda_signal '" + s + "'");
      } else {
        throw ConfigError("unknown key 'search." + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("search section: ") + e.what());
  }
  return c;
}

SearchState::SearchState(const ArchSpace& space, std::size_t input_dim, std::size_t num_classes,
                         const SearchConfig& config)
    : net(space, input_dim, num_classes, config.seed + kNetSeedOffset),
      alpha(ArchParams::zeros(space)),
      lambda(config.objective == Objective::kLearnableLambda ? config.lambda_init
             : config.objective == Objective::kFixedLambda  ? config.lambda_fixed
                                                            : 0.0),
      tau(config.tau_init),
      rng(config.seed + kRngSeedOffset),
      w_opt(net.parameters(), config.momentum_w, config.wd_w),
      alpha_opt(alpha_params(alpha), config.lr_alpha, config.wd_alpha) {}

void sample_selection(SearchState& state, const SearchConfig& config) {
  const ArchSpace& space = state.net.space();
  state.current = gumbel_sample(state.alpha.values(), state.tau, state.rng, config.gumbel_input);
  if (space.first_layer_fixed) {
    for (std::size_t k = 0; k < space.ops_per_layer(); ++k) {
      state.current.hard.at(0, k) = k == space.fixed_first_op ? 1.0 : 0.0;
    }
  }
}

namespace {

void add_hardware_term(ObjectiveTerms& t, const ad::NodeRef& encoding, const Predictor* predictor,
                       const SearchConfig& config, double lambda) {
  switch (config.objective) {
    case Objective::kAccuracyOnly:
      t.total = t.task;
      break;
    case Objective::kFixedLambda:
      t.latency = predictor->graph(encoding);
      t.total = ad::add(t.task, ad::scale(t.latency, config.lambda_fixed));
      break;
    case Objective::kLearnableLambda: {
      t.latency = predictor->graph(encoding);
      ad::NodeRef ratio = ad::sub(ad::scale(t.latency, 1.0 / config.target), ad::constant(Tensor::scalar(1.0)));
      t.total = ad::add(t.task, ad::scale(ratio, lambda));
      break;
    }
  }
}

void require_predictor(const Predictor* predictor, const SearchConfig& config) {
  if (config.objective != Objective::kAccuracyOnly && predictor == nullptr) {
    throw ConfigError("a hardware predictor is required for objective " + std::string(to_string(config.objective)));
  }
}

}  // namespace

ObjectiveTerms relaxed_objective(const Supernet& net, const ad::NodeRef& alpha, const Batch& batch,
                                 const Predictor* predictor, const SearchConfig& config, double lambda) {
  require_predictor(predictor, config);
  ObjectiveTerms t;
  t.task = ad::cross_entropy(multipath_forward(net, ad::constant(batch.features), alpha), batch.labels);
  add_hardware_term(t, mixture_encoding(alpha, net.space()), predictor, config, lambda);
  return t;
}

ObjectiveTerms objective_value(SearchState& state, const Batch& batch, const Predictor* predictor,
                               const SearchConfig& config) {
  if (config.mode == SupernetMode::kMultiPath) {
    return relaxed_objective(state.net, state.alpha.node(), batch, predictor, config, state.lambda);
  }
  require_predictor(predictor, config);
  ObjectiveTerms t;
  ad::NodeRef soft = relaxed_selection(state.alpha.node(), state.current.noise, state.tau, config.gumbel_input);
  ad::NodeRef encoding = ad::straight_through(state.current.hard, soft);
  t.task = ad::cross_entropy(supernet_forward(state.net, ad::constant(batch.features), encoding), batch.labels);
  add_hardware_term(t, encoding, predictor, config, state.lambda);
  return t;
}

double step_w(SearchState& state, const Batch& batch, const SearchConfig& config, double lr) {
  sample_selection(state, config);
  auto x = ad::constant(batch.features);
  ad::NodeRef logits;
  if (config.mode == SupernetMode::kSinglePath) {
    logits = supernet_forward(state.net, x, ad::constant(state.current.hard));
  } else {
    logits = multipath_forward(state.net, x, ad::constant(state.alpha.values()));
  }
  ad::NodeRef loss = ad::cross_entropy(logits, batch.labels);
  state.w_opt.zero_grad();
  ad::backward(loss);
  clip_grad_norm(state.w_opt.params(), config.grad_clip_w);
  state.w_opt.step(lr);
  return loss->value()[0];
}

double step_alpha(SearchState& state, const Batch& batch, const Predictor* predictor, const SearchConfig& config) {
  sample_selection(state, config);
  ObjectiveTerms t = objective_value(state, batch, predictor, config);
  state.alpha_opt.zero_grad();
  ad::backward(t.total);
  mask_fixed_row_grad(state.alpha, state.net.space());
  state.alpha_opt.step();
  return t.task->value()[0];
}

double step_lambda(double lambda, double latency, double target, double lr_lambda) {
  return lambda + lr_lambda * (latency / target - 1.0);
}

double step_lambda(SearchState& state, const Predictor& predictor, const SearchConfig& config) {
  const double lat = selection_latency(state, predictor, config);
  const double signal = config.lambda_signal == LambdaSignal::kSampled ? lat : finalized_latency(state, &predictor);
  state.lambda = step_lambda(state.lambda, signal, config.target, config.lr_lambda);
  return lat;
}

double anneal_tau(std::size_t epoch, const SearchConfig& config) {
  if (config.epochs <= 1) return config.tau_min;
  const double r = std::log(config.tau_init / config.tau_min) / static_cast<double>(config.epochs - 1);
  return std::max(config.tau_min, config.tau_init * std::exp(-r * static_cast<double>(epoch)));
}

SearchResult run_search(const SearchConfig& config, const ArchSpace& space, const DataSplit& data,
                        const Predictor* predictor) {
  config.validate();
  space.validate();
  if (config.objective != Objective::kAccuracyOnly && predictor == nullptr) {
    throw ConfigError("a hardware predictor is required for objective " + std::string(to_string(config.objective)));
  }
  if (predictor && (predictor->layers() != space.num_layers || predictor->ops() != space.ops_per_layer())) {
    throw ConfigError("predictor dimensions do not match the search space");
  }
  if (data.train.dim() != data.valid.dim() || data.train.num_classes != data.valid.num_classes) {
    throw ConfigError("search-train and search-valid halves disagree in shape");
  }
  const auto start = std::chrono::steady_clock::now();
  SearchState state(space, data.train.dim(), data.train.num_classes, config);
  const std::size_t train_batches = (data.train.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_w_steps = train_batches * config.epochs;
  std::size_t w_step = 0;

  try {
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      state.epoch = epoch;
      state.tau = anneal_tau(epoch, config);
      for (const auto& idx : epoch_batches(data.train.size(), config.batch_size, state.rng)) {
        step_w(state, make_batch(data.train, idx), config, cosine_lr(config.lr_w, w_step++, total_w_steps));
      }
      const bool warm = epoch < config.warmup_epochs;
      double loss_sum = 0.0, lat_sum = 0.0;
      std::size_t steps = 0;
      for (const auto& idx : epoch_batches(data.valid.size(), config.batch_size, state.rng)) {
        const Batch batch = make_batch(data.valid, idx);
        if (warm) {
          sample_selection(state, config);
          auto x = ad::constant(batch.features);
          ad::NodeRef logits = config.mode == SupernetMode::kSinglePath
                                   ? supernet_forward(state.net, x, ad::constant(state.current.hard))
                                   : multipath_forward(state.net, x, ad::constant(state.alpha.values()));
          loss_sum += ad::cross_entropy(logits, batch.labels)->value()[0];
          if (predictor) lat_sum += selection_latency(state, *predictor, config);
        } else {
          loss_sum += step_alpha(state, batch, predictor, config);
          if (config.objective == Objective::kLearnableLambda) {
            lat_sum += step_lambda(state, *predictor, config);
            if (!std::isfinite(state.lambda)) throw DomainError("multiplier diverged");
          } else if (predictor) {
            lat_sum += selection_latency(state, *predictor, config);
          }
        }
        ++steps;
      }
      HistoryRow row;
      row.epoch = epoch;
      row.valid_loss = loss_sum / static_cast<double>(steps);
      row.pred_latency = finalized_latency(state, predictor);
      row.sampled_latency = predictor ? lat_sum / static_cast<double>(steps) : std::numeric_limits<double>::quiet_NaN();
      row.lambda = state.lambda;
      row.tau = state.tau;
      if (!std::isfinite(row.valid_loss)) throw DomainError("validation loss diverged");
      state.history.push_back(row);
    }
  } catch (const DomainError& e) {
    throw DivergenceError("search diverged at epoch " + std::to_string(state.epoch) + ": " + e.what(),
                          state.history);
  }

  SearchResult result;
  result.architecture = finalize(state.alpha.values(), space);
  result.alpha = state.alpha.values();
  result.history = std::move(state.history);
  result.final_latency = finalized_latency(state, predictor);
  result.final_lambda = state.lambda;
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::string history_to_csv(const std::vector<HistoryRow>& history, const std::string& comment) {
  std::string out;
  if (!comment.empty()) out += "# " + comment + "\n";
  out += "epoch,valid_loss,pred_latency_ms,lambda,tau,sampled_latency_ms\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + ',' + format_double(r.valid_loss) + ',' + format_double(r.pred_latency) + ',' +
           format_double(r.lambda) + ',' + format_double(r.tau) + ',' + format_double(r.sampled_latency) + '\n';
  }
  return out;
}

}  // namespace nasc
