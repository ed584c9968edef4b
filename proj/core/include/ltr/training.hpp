// Copyright (c) 2026 The ltr Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <chrono>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "ltr/checkpoint.hpp"
#include "ltr/dataset.hpp"
#include "ltr/losses.hpp"
#include "ltr/metrics.hpp"
#include "ltr/scorers.hpp"

namespace ltr {

enum class Precision { f32, f64 };

struct TrainConfig {
  ScorerSpec scorer;
  LossSpec loss;
  double learning_rate = 0.005;
  int batch_size = 128;
  long max_steps = 1000;
  long eval_every = 0;  // 0: evaluate only at the end
  std::uint64_t seed = 0;
  int max_docs = 200;  // training-time list truncation; 0 disables
  bool normalize = true;
  bool shuffle = true;
  Precision precision = Precision::f32;
  std::string best_metric = "ndcg@5";
  double clip_norm = 0.0;  // 0: off
  double bn_momentum = 0.1;
  double adagrad_eps = 1e-8;
  std::vector<std::string> eval_metrics = {"ndcg@1", "ndcg@5", "ndcg@10"};
  int eval_batch_size = 64;

  void validate() const {
    scorer.validate();
    loss.validate();
    if (learning_rate <= 0) throw ConfigError("learning rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (max_steps < 0) throw ConfigError("max steps must be >= 0");
    if (clip_norm < 0) throw ConfigError("clip norm must be >= 0");
  }
};

// Per-query metric dispatch by name ("ndcg@5", "mrr", "arp").
inline double metric_value(const std::string& name, std::span<const int> labels,
                           std::span<const double> scores) {
  if (name.rfind("ndcg@", 0) == 0) return ndcg_at_k(labels, scores, std::stoi(name.substr(5)));
  if (name == "mrr") return reciprocal_rank(labels, scores);
  if (name == "arp") return relevance_position(labels, scores);
  throw ConfigError("unknown metric: " + name);
}

// Larger is better for every supported metric except arp.
inline bool metric_improved(const std::string& name, double candidate, double incumbent) {
  return name == "arp" ? candidate < incumbent : candidate > incumbent;
}

template <class Real>
class Adagrad {
 public:
  Adagrad(Real lr, Real eps) : lr_(lr), eps_(eps) {}

  // accum += g^2; param -= lr * g / (sqrt(accum) + eps)
  void step(ParamStore<Real>& params) {
    if (accum_.empty()) {
      accum_.reserve(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& v = params.value_at(i);
        accum_.emplace_back(v.rows, v.cols);
      }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& value = params.value_at(i);
      const auto& grad = params.grad_at(i);
      auto& acc = accum_[i];
      for (std::size_t j = 0; j < value.data.size(); ++j) {
        const Real g = grad.data[j];
        acc.data[j] += g * g;
        value.data[j] -= lr_ * g / (Real(std::sqrt(double(acc.data[j]))) + eps_);
      }
    }
  }

 private:
  Real lr_, eps_;
  std::vector<Mat<Real>> accum_;
};

struct StepLog {
  long step = 0;
  double loss = 0;
  double lr = 0;
  double wall_ms = 0;
};

template <class Real>
struct TrainState {
  ScorerSpec spec;
  ParamStore<Real> params;
  StatStore<Real> stats;
  FeatureStats feature_stats;
  std::uint64_t step = 0;
  std::uint64_t rng_state = 0;
};

struct EvalRecord {
  long step = 0;
  MetricReport report;
};

template <class Real>
struct TrainResult {
  TrainState<Real> best;
  TrainState<Real> final;
  std::vector<StepLog> step_logs;
  std::vector<EvalRecord> evals;
  double best_value = 0;
  long best_step = -1;
};

// Infer-mode scoring over full (untruncated) lists; queries without
// relevant documents are skipped, mirroring the training filter.
template <class Real>
MetricReport evaluate(const ScorerSpec& spec, ParamStore<Real>& params,
                      StatStore<Real>& stats, const Dataset& data,
                      const std::vector<std::string>& metric_names,
                      int eval_batch_size = 64, std::uint64_t ci_seed = 0) {
  Dataset usable = filter_no_relevant(data);
  if (usable.queries.empty()) throw DataError("evaluate: no queries with relevant documents");
  std::vector<std::vector<double>> per_metric(metric_names.size());
  auto batches = make_batches(usable, eval_batch_size, 0, false);
  for (const auto& b : batches) {
    Graph<Real> g;
    g.params = &params;
    g.stats = &stats;
    g.mode = Mode::infer;
    g.build_grads = false;
    auto fwd = score_batch(g, spec, b, static_cast<const Mat<Real>*>(nullptr), 0);
    Mat<double> scores = extract_scores(g, fwd);
    for (int q = 0; q < b.n_queries; ++q) {
      std::vector<int> labels;
      std::vector<double> s;
      for (int slot = 0; slot < b.max_list; ++slot)
        if (b.valid(q, slot)) {
          labels.push_back(b.label(q, slot));
          s.push_back(scores(q, slot));
        }
      for (std::size_t mi = 0; mi < metric_names.size(); ++mi)
        per_metric[mi].push_back(metric_value(metric_names[mi], labels, s));
    }
  }
  MetricReport report;
  report.n_queries = usable.queries.size();
  for (std::size_t mi = 0; mi < metric_names.size(); ++mi)
    report.metrics.push_back(
        bootstrap_metric(metric_names[mi], std::move(per_metric[mi]), 1000, ci_seed));
  return report;
}

// Adagrad loop over list batches. Deterministic given the config seeds: the
// batch order, initialization and dropout streams all derive from
// config.seed. Aborts with DivergenceError on a non-finite loss.
template <class Real>
TrainResult<Real> train(const TrainConfig& config, Dataset train_data, Dataset eval_data,
                        std::ostream* run_log = nullptr) {
  config.validate();

  // Truncate before filtering: cutting a list can remove its only relevant
  // documents, and every list the loss sees must have one.
  if (config.max_docs > 0) train_data = truncate_lists(std::move(train_data), config.max_docs);
  train_data = filter_no_relevant(std::move(train_data));
  if (train_data.queries.empty()) throw DataError("train: no usable training queries");
  eval_data = filter_no_relevant(std::move(eval_data));
  if (eval_data.queries.empty()) throw DataError("train: no usable evaluation queries");

  FeatureStats fstats;
  if (config.normalize) {
    fstats = fit_feature_stats(train_data);
    train_data = apply_normalization(std::move(train_data), fstats);
    eval_data = apply_normalization(std::move(eval_data), fstats);
  }

  RngStream root(config.seed);
  TrainResult<Real> result;
  result.final.spec = config.scorer;
  result.final.params = init_scorer_params<Real>(config.scorer, root.fork("init").state());
  result.final.stats = init_scorer_stats<Real>(config.scorer);
  result.final.feature_stats = fstats;

  std::vector<std::string> eval_metrics = config.eval_metrics;
  if (std::find(eval_metrics.begin(), eval_metrics.end(), config.best_metric) ==
      eval_metrics.end())
    eval_metrics.push_back(config.best_metric);

  Adagrad<Real> opt(Real(config.learning_rate), Real(config.adagrad_eps));
  double last_finite_loss = std::numeric_limits<double>::quiet_NaN();

  auto run_eval = [&](long at_step) {
    MetricReport rep = evaluate(config.scorer, result.final.params, result.final.stats,
                                eval_data, eval_metrics, config.eval_batch_size,
                                config.seed);
    const MetricValue* mv = rep.find(config.best_metric);
    const double value = mv ? mv->mean : 0.0;
    if (result.best_step < 0 || metric_improved(config.best_metric, value, result.best_value)) {
      result.best_value = value;
      result.best_step = at_step;
      result.best = result.final;
      result.best.step = std::uint64_t(at_step);
    }
    result.evals.push_back({at_step, std::move(rep)});
  };

  long step = 0;
  for (long epoch = 0; step < config.max_steps; ++epoch) {
    auto batches = make_batches(train_data, config.batch_size,
                                root.fork("epoch").fork(std::uint64_t(epoch)).state(),
                                config.shuffle);
    for (const auto& batch : batches) {
      if (step >= config.max_steps) break;
      const auto t0 = std::chrono::steady_clock::now();
      const std::uint64_t step_seed = root.fork("step").fork(std::uint64_t(step)).state();

      Graph<Real> g;
      g.params = &result.final.params;
      g.stats = &result.final.stats;
      g.mode = Mode::train;
      g.bn_momentum = Real(config.bn_momentum);
      g.dropout_rng = RngStream(step_seed);
      auto fwd = score_batch(g, config.scorer, batch,
                             static_cast<const Mat<Real>*>(nullptr), step_seed);
      NodeId loss_node = batch_loss(g, config.loss, fwd, batch);
      const double loss = double(g.tape.value(loss_node).data[0]);
      if (!std::isfinite(loss))
        throw DivergenceError("training diverged at step " + std::to_string(step) +
                                  " (last finite loss " + std::to_string(last_finite_loss) + ")",
                              step, last_finite_loss);
      last_finite_loss = loss;

      result.final.params.zero_grads();
      g.tape.backward(loss_node);
      g.collect();

      double clipped_from = 0;
      if (config.clip_norm > 0) {
        double norm_sq = 0;
        for (std::size_t i = 0; i < result.final.params.size(); ++i)
          for (Real v : result.final.params.grad_at(i).data) norm_sq += double(v) * double(v);
        const double norm = std::sqrt(norm_sq);
        if (norm > config.clip_norm) {
          const Real scale = Real(config.clip_norm / norm);
          for (std::size_t i = 0; i < result.final.params.size(); ++i)
            for (Real& v : result.final.params.grad_at(i).data) v *= scale;
          clipped_from = norm;
        }
      }
      opt.step(result.final.params);

      const double wall_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
              .count();
      result.step_logs.push_back({step, loss, config.learning_rate, wall_ms});
      if (run_log) {
        (*run_log) << "step=" << step << " loss=" << loss << " lr=" << config.learning_rate
                   << " wall_ms=" << wall_ms;
        if (clipped_from > 0) (*run_log) << " clipped_from=" << clipped_from;
        (*run_log) << "\n";
      }
      ++step;
      result.final.step = std::uint64_t(step);
      result.final.rng_state = step_seed;

      if (config.eval_every > 0 && step % config.eval_every == 0 && step < config.max_steps)
        run_eval(step);
    }
    if (batches.empty()) break;
  }

  run_eval(step);
  return result;
}

// ---- checkpoint bridging ----

template <class Real>
CheckpointData to_checkpoint(const TrainState<Real>& state, const LossSpec& loss) {
  CheckpointData ckpt;
  ckpt.step = state.step;
  ckpt.rng_state = state.rng_state;
  ckpt.spec_text = state.spec.to_text() + "loss.kind = " + loss.name() +
                   "\nloss.eta = " + std::to_string(loss.eta) + "\n";
  pack_model(state.params, state.stats, ckpt);
  pack_feature_stats(state.feature_stats, ckpt);
  return ckpt;
}

template <class Real>
TrainState<Real> from_checkpoint(const CheckpointData& ckpt) {
  TrainState<Real> state;
  state.spec = ScorerSpec::from_text(ckpt.spec_text);
  state.params = init_scorer_params<Real>(state.spec, 0);
  state.stats = init_scorer_stats<Real>(state.spec);
  unpack_model(ckpt, state.params, state.stats);
  if (has_feature_stats(ckpt)) state.feature_stats = unpack_feature_stats(ckpt);
  state.step = ckpt.step;
  state.rng_state = ckpt.rng_state;
  return state;
}

// ---- synthetic cross-document task ----

// Lists of i.i.d. uniform feature vectors where the single relevant
// document is the one holding the `target_rank`-th largest value of
// feature 0. Identifying it requires comparing documents, so univariate
// scorers are capped well below a cross-document model.
inline Dataset make_order_stat_task(int n_queries, int list_size, int n_features,
                                    std::uint64_t seed, int target_rank = 3) {
  if (list_size < 2) throw ConfigError("synthetic task needs list_size >= 2");
  if (target_rank < 1 || target_rank > list_size)
    throw ConfigError("target rank must be in [1, list_size]");
  if (n_features < 1) throw ConfigError("synthetic task needs n_features >= 1");
  RngStream root(seed);
  Dataset ds;
  ds.n_features = n_features;
  ds.queries.reserve(n_queries);
  for (int q = 0; q < n_queries; ++q) {
    RngStream rng = root.fork(std::uint64_t(q));
    RankedQuery rq;
    rq.qid = std::to_string(q);
    rq.features = Mat<double>(list_size, n_features);
    for (auto& v : rq.features.data) v = rng.next_uniform();
    // index of the target_rank-th largest feature-0 value (first on ties)
    std::vector<int> order(list_size);
    for (int i = 0; i < list_size; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return rq.features(a, 0) > rq.features(b, 0);
    });
    rq.labels.assign(list_size, 0);
    rq.labels[order[target_rank - 1]] = 1;
    ds.queries.push_back(std::move(rq));
  }
  return ds;
}

// Best NDCG@1 a per-document scorer can reach on the task above, estimated
// by scoring each document with its posterior probability of being the
// target order statistic given only its own feature-0 value:
// P(exactly target_rank-1 of the n-1 others are larger | v).
inline double univariate_posterior_ndcg1(const Dataset& task, int target_rank) {
  std::size_t hits = 0;
  for (const auto& q : task.queries) {
    const int n = q.n_docs();
    int best = 0;
    double best_score = -1;
    for (int i = 0; i < n; ++i) {
      const double v = q.features(i, 0);
      const double score =
          std::pow(v, double(n - target_rank)) * std::pow(1.0 - v, double(target_rank - 1));
      if (score > best_score) {
        best_score = score;
        best = i;
      }
    }
    hits += q.labels[best] == 1;
  }
  return double(hits) / double(task.queries.size());
}

}  // namespace ltr
