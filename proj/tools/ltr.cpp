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

// Command-line front end: train, evaluate, predict, benchmark, params.
// Exit codes: 0 success, 2 usage/config error, 3 data error, 4 divergence.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ltr/checkpoint.hpp"
#include "ltr/config.hpp"
#include "ltr/training.hpp"

namespace fs = std::filesystem;
using namespace ltr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::int64_t seed = -1;  // -1: take from config
};

KvConfig load_config(const CommonArgs& args) {
  KvConfig cfg;
  if (!args.config_path.empty()) cfg = KvConfig::parse_file(args.config_path);
  for (const auto& ov : args.overrides) cfg.set_override(ov);
  if (args.seed >= 0) cfg.set("train.seed", std::to_string(args.seed));
  return cfg;
}

void require_file(const std::string& path, const std::string& key) {
  if (path.empty()) throw ConfigError("missing required config key: " + key);
  if (!fs::exists(path))
    throw ConfigError("dataset path does not exist: " + path + " (" + key + ")");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

ScorerSpec default_scorer() {
  ScorerSpec s;
  s.dense.hidden = {1024, 512, 256, 128, 64, 32, 16};
  s.dense.input_batch_norm = true;
  return s;
}

struct TrainSetup {
  TrainConfig config;
  std::string train_path, vali_path, test_path;
};

TrainSetup read_train_setup(const KvConfig& cfg) {
  TrainSetup ts;
  ts.train_path = cfg.get_string("data.train_path", "");
  ts.vali_path = cfg.get_string("data.vali_path", "");
  ts.test_path = cfg.get_string("data.test_path", "");

  TrainConfig& tc = ts.config;
  tc.scorer = scorer_spec_from_config(cfg, default_scorer());
  tc.loss = LossSpec::from_name(cfg.get_string("loss.kind", "softmax"),
                                cfg.get_double("loss.eta", 0.1));
  tc.learning_rate = cfg.get_double("train.lr", 0.005);
  tc.batch_size = cfg.get_int("train.batch_size", 128);
  tc.max_steps = cfg.get_int("train.max_steps", 1000);
  tc.eval_every = cfg.get_int("train.eval_every", 0);
  tc.seed = cfg.get_u64("train.seed", 0);
  tc.max_docs = cfg.get_int("data.max_docs", 200);
  tc.normalize = cfg.get_bool("data.normalize", true);
  tc.shuffle = cfg.get_bool("train.shuffle", true);
  const std::string prec = cfg.get_string("train.precision", "f32");
  if (prec == "f32")
    tc.precision = Precision::f32;
  else if (prec == "f64")
    tc.precision = Precision::f64;
  else
    throw ConfigError("train.precision must be f32 or f64, got: " + prec);
  tc.best_metric = cfg.get_string("train.best_metric", "ndcg@5");
  tc.clip_norm = cfg.get_double("train.clip_norm", 0.0);
  tc.bn_momentum = cfg.get_double("train.bn_momentum", 0.1);
  tc.adagrad_eps = cfg.get_double("train.adagrad_eps", 1e-8);
  tc.eval_batch_size = cfg.get_int("train.eval_batch_size", 64);
  tc.eval_metrics = cfg.get_string_list("eval.metrics", {"ndcg@1", "ndcg@5", "ndcg@10"});
  return ts;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Echo of every effective setting; rerunning from this file reproduces the run.
KvConfig effective_config(const TrainSetup& ts) {
  KvConfig out;
  std::istringstream spec_in(ts.config.scorer.to_text());
  KvConfig spec_cfg = KvConfig::parse_stream(spec_in);
  for (const auto& [k, v] : spec_cfg.entries()) out.set(k, v);
  out.set("data.train_path", ts.train_path);
  out.set("data.vali_path", ts.vali_path);
  out.set("data.test_path", ts.test_path);
  out.set("data.max_docs", std::to_string(ts.config.max_docs));
  out.set("data.normalize", ts.config.normalize ? "true" : "false");
  out.set("loss.kind", ts.config.loss.name());
  out.set("loss.eta", fmt_double(ts.config.loss.eta));
  out.set("train.lr", fmt_double(ts.config.learning_rate));
  out.set("train.batch_size", std::to_string(ts.config.batch_size));
  out.set("train.max_steps", std::to_string(ts.config.max_steps));
  out.set("train.eval_every", std::to_string(ts.config.eval_every));
  out.set("train.seed", std::to_string(ts.config.seed));
  out.set("train.precision", ts.config.precision == Precision::f32 ? "f32" : "f64");
  out.set("train.best_metric", ts.config.best_metric);
  out.set("train.clip_norm", fmt_double(ts.config.clip_norm));
  out.set("train.bn_momentum", fmt_double(ts.config.bn_momentum));
  out.set("train.adagrad_eps", fmt_double(ts.config.adagrad_eps));
  out.set("train.eval_batch_size", std::to_string(ts.config.eval_batch_size));
  out.set("train.shuffle", ts.config.shuffle ? "true" : "false");
  std::string metrics;
  for (const auto& m : ts.config.eval_metrics) metrics += (metrics.empty() ? "" : ",") + m;
  out.set("eval.metrics", metrics);
  return out;
}

template <class Real>
int run_train_typed(TrainSetup ts, const fs::path& out_dir) {
  Dataset train_data = parse_ranking_file(ts.train_path);
  if (ts.config.scorer.n_features == 0) ts.config.scorer.n_features = train_data.n_features;
  Dataset eval_data = ts.vali_path.empty()
                          ? train_data
                          : parse_ranking_file(ts.vali_path, ts.config.scorer.n_features);

  write_text(out_dir / "config.txt", effective_config(ts).serialize());

  std::ofstream run_log(out_dir / "run_log.txt");
  auto result = train<Real>(ts.config, std::move(train_data), std::move(eval_data), &run_log);

  save_checkpoint_file(to_checkpoint(result.best, ts.config.loss),
                       (out_dir / "checkpoint_best.bin").string());
  save_checkpoint_file(to_checkpoint(result.final, ts.config.loss),
                       (out_dir / "checkpoint_final.bin").string());
  if (result.final.feature_stats.fitted)
    save_feature_stats(result.final.feature_stats, (out_dir / "feature_stats.txt").string());

  const MetricReport& final_report = result.evals.back().report;
  write_text(out_dir / "metrics.txt", format_table(final_report));
  write_text(out_dir / "metrics_records.txt", format_records(final_report));
  std::cout << "trained " << result.step_logs.size() << " steps; best " << ts.config.best_metric
            << " = " << result.best_value << " at step " << result.best_step << "\n"
            << format_table(final_report);
  return kExitOk;
}

int cmd_train(const CommonArgs& args) {
  KvConfig cfg = load_config(args);
  TrainSetup ts = read_train_setup(cfg);
  cfg.reject_unknown_keys();
  require_file(ts.train_path, "data.train_path");
  if (!ts.vali_path.empty()) require_file(ts.vali_path, "data.vali_path");
  if (args.out_dir.empty()) throw ConfigError("train needs --out-dir");
  fs::create_directories(args.out_dir);
  if (ts.config.precision == Precision::f64)
    return run_train_typed<double>(std::move(ts), args.out_dir);
  return run_train_typed<float>(std::move(ts), args.out_dir);
}

template <class Real>
int run_evaluate_typed(const CheckpointData& ckpt, const std::string& data_path,
                       const std::vector<std::string>& metrics, const std::string& out_dir) {
  auto state = from_checkpoint<Real>(ckpt);
  Dataset data = parse_ranking_file(data_path, state.spec.n_features);
  if (data.n_features != state.spec.n_features)
    throw DataError("dataset has " + std::to_string(data.n_features) +
                    " features, checkpoint expects " + std::to_string(state.spec.n_features));
  if (state.feature_stats.fitted)
    data = apply_normalization(std::move(data), state.feature_stats);
  MetricReport report = evaluate(state.spec, state.params, state.stats, data, metrics);
  std::cout << format_table(report) << format_records(report);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "metrics.txt", format_table(report));
    write_text(fs::path(out_dir) / "metrics_records.txt", format_records(report));
  }
  return kExitOk;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data_path,
                 std::vector<std::string> metrics, const std::string& out_dir) {
  require_file(ckpt_path, "--checkpoint");
  require_file(data_path, "--data");
  CheckpointData ckpt = load_checkpoint_file(ckpt_path);
  if (metrics.empty()) metrics = {"ndcg@1", "ndcg@5", "ndcg@10"};
  if (ckpt.precision == 'd')
    return run_evaluate_typed<double>(ckpt, data_path, metrics, out_dir);
  return run_evaluate_typed<float>(ckpt, data_path, metrics, out_dir);
}

template <class Real>
int run_predict_typed(const CheckpointData& ckpt, const std::string& data_path,
                      std::ostream& out) {
  auto state = from_checkpoint<Real>(ckpt);
  Dataset data = parse_ranking_file(data_path, state.spec.n_features);
  if (state.feature_stats.fitted)
    data = apply_normalization(std::move(data), state.feature_stats);
  out << "qid\tdoc\tscore\trank\n";
  for (const auto& q : data.queries) {
    auto scores = score_single_list(state.spec, state.params, state.stats, q);
    auto order = rank_order(scores);
    std::vector<int> rank(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = int(r) + 1;
    for (int d = 0; d < q.n_docs(); ++d)
      out << q.qid << "\t" << d << "\t" << scores[d] << "\t" << rank[d] << "\n";
  }
  return kExitOk;
}

int cmd_predict(const std::string& ckpt_path, const std::string& data_path,
                const std::string& out_path) {
  require_file(ckpt_path, "--checkpoint");
  require_file(data_path, "--data");
  CheckpointData ckpt = load_checkpoint_file(ckpt_path);
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw DataError("cannot write " + out_path);
  }
  std::ostream& out = out_path.empty() ? std::cout : file;
  if (ckpt.precision == 'd') return run_predict_typed<double>(ckpt, data_path, out);
  return run_predict_typed<float>(ckpt, data_path, out);
}

// ---- benchmark ----

struct BenchEntry {
  std::string family;
  int list_size = 0;
  double median_ms = 0;
  double p95_ms = 0;
  std::size_t params = 0;
  bool refused = false;
  std::string note;
};

double quantile_ms(std::vector<double>& samples, double q) {
  std::sort(samples.begin(), samples.end());
  const double pos = q * double(samples.size() - 1);
  const std::size_t lo = std::size_t(pos);
  const std::size_t hi = std::min(samples.size() - 1, lo + 1);
  return samples[lo] + (samples[hi] - samples[lo]) * (pos - double(lo));
}

int cmd_benchmark(const CommonArgs& args, std::vector<std::string> families,
                  std::vector<int> list_sizes, int reps, int warmup) {
  KvConfig cfg = load_config(args);
  ScorerSpec base;
  base.n_features = 136;
  base.dense.hidden = {64, 32};
  base.dense.input_batch_norm = true;
  base.attn.model_width = 64;
  base = scorer_spec_from_config(cfg, base);
  const std::uint64_t seed = cfg.get_u64("train.seed", 1);
  cfg.reject_unknown_keys();
  if (families.empty()) families = {"univariate", "gsf", "attn_din"};
  if (list_sizes.empty()) list_sizes = {50, 100, 200};
  if (warmup < 20) throw ConfigError("benchmark needs at least 20 warmup iterations");

  std::vector<BenchEntry> entries;
  for (const auto& fam : families) {
    ScorerSpec spec = base;
    spec.family = scorer_family_from(fam);
    if (spec.family == ScorerFamily::gsf) {
      spec.gsf_mode = GsfMode::exact;
      spec.gsf_group_size = 2;
    }
    auto params = init_scorer_params<float>(spec, seed);
    auto stats = init_scorer_stats<float>(spec);

    for (int n : list_sizes) {
      BenchEntry e;
      e.family = fam;
      e.list_size = n;
      e.params = param_count(spec);

      RankedQuery q;
      q.qid = "bench";
      q.features = Mat<double>::uniform(n, spec.n_features, RngStream(seed).fork(n), -1.0, 1.0);
      q.labels.assign(n, 0);
      q.labels[0] = 1;

      try {
        for (int w = 0; w < warmup; ++w)
          score_single_list(spec, params, stats, q);
        std::vector<double> samples;
        samples.reserve(reps);
        for (int r = 0; r < reps; ++r) {
          const auto t0 = std::chrono::steady_clock::now();
          score_single_list(spec, params, stats, q);
          samples.push_back(std::chrono::duration<double, std::milli>(
                                std::chrono::steady_clock::now() - t0)
                                .count());
        }
        e.median_ms = quantile_ms(samples, 0.5);
        e.p95_ms = quantile_ms(samples, 0.95);
      } catch (const ContractError& ex) {
        e.refused = true;
        e.note = ex.what();
      }
      entries.push_back(std::move(e));
    }
  }

  std::ostringstream table, records;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-12s %10s %12s %12s %12s\n", "scorer", "list_size",
                "median_ms", "p95_ms", "params");
  table << buf;
  for (const auto& e : entries) {
    if (e.refused) {
      std::snprintf(buf, sizeof buf, "%-12s %10d %25s (%s)\n", e.family.c_str(), e.list_size,
                    "refused", e.note.c_str());
      table << buf;
      records << "scorer=" << e.family << " list_size=" << e.list_size << " refused=1\n";
      continue;
    }
    std::snprintf(buf, sizeof buf, "%-12s %10d %12.3f %12.3f %12zu\n", e.family.c_str(),
                  e.list_size, e.median_ms, e.p95_ms, e.params);
    table << buf;
    records << "scorer=" << e.family << " list_size=" << e.list_size
            << " median_ms=" << e.median_ms << " p95_ms=" << e.p95_ms
            << " params=" << e.params << "\n";
  }
  std::cout << table.str() << records.str();
  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    write_text(fs::path(args.out_dir) / "benchmark.txt", table.str());
    write_text(fs::path(args.out_dir) / "benchmark_records.txt", records.str());
  }
  return kExitOk;
}

int cmd_params(const CommonArgs& args, std::vector<std::string> families,
               std::vector<int> group_sizes) {
  KvConfig cfg = load_config(args);
  ScorerSpec base;
  base.n_features = 136;
  base.dense.hidden = {1024, 512, 256, 128, 64, 32, 16};
  base.dense.input_batch_norm = true;
  base.attn.model_width = 100;
  base = scorer_spec_from_config(cfg, base);
  cfg.reject_unknown_keys();
  if (families.empty()) families = {"univariate", "attn_din", "gsf"};
  if (group_sizes.empty()) group_sizes = {2, 4, 8, 16, 32, 64};

  std::cout << "scorer\tparams\n";
  for (const auto& fam : families) {
    ScorerSpec spec = base;
    spec.family = scorer_family_from(fam);
    if (spec.family == ScorerFamily::gsf) {
      for (int m : group_sizes) {
        spec.gsf_group_size = m;
        std::cout << "gsf(m=" << m << ")\t" << param_count(spec) << "\n";
      }
    } else {
      std::cout << fam << "\t" << param_count(spec) << "\n";
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"listwise learning-to-rank engine"};
  app.require_subcommand(1);

  CommonArgs common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "key/value config file");
    sub->add_option("--override", common.overrides, "key=value override (repeatable)");
    sub->add_option("--out-dir", common.out_dir, "output directory");
    sub->add_option("--seed", common.seed, "seed override");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train a scorer");
  add_common(train_cmd);

  std::string ckpt_path, data_path, out_path;
  std::vector<std::string> metrics;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  eval_cmd->add_option("--data", data_path, "ranking data file")->required();
  eval_cmd->add_option("--metrics", metrics, "metric names");
  eval_cmd->add_option("--out-dir", common.out_dir, "output directory");

  CLI::App* predict_cmd = app.add_subcommand("predict", "score documents");
  predict_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  predict_cmd->add_option("--data", data_path, "ranking data file")->required();
  predict_cmd->add_option("--out", out_path, "output file (default stdout)");

  std::vector<std::string> families;
  std::vector<int> list_sizes, group_sizes;
  int reps = 50, warmup = 20;
  CLI::App* bench_cmd = app.add_subcommand("benchmark", "measure inference latency");
  add_common(bench_cmd);
  bench_cmd->add_option("--families", families, "scorer families");
  bench_cmd->add_option("--list-sizes", list_sizes, "document list sizes");
  bench_cmd->add_option("--reps", reps, "timed repetitions per point");
  bench_cmd->add_option("--warmup", warmup, "warmup iterations (excluded)");

  CLI::App* params_cmd = app.add_subcommand("params", "print parameter counts");
  add_common(params_cmd);
  params_cmd->add_option("--families", families, "scorer families");
  params_cmd->add_option("--group-sizes", group_sizes, "gsf group sizes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(common);
    if (*eval_cmd) return cmd_evaluate(ckpt_path, data_path, metrics, common.out_dir);
    if (*predict_cmd) return cmd_predict(ckpt_path, data_path, out_path);
    if (*bench_cmd) return cmd_benchmark(common, families, list_sizes, reps, warmup);
    if (*params_cmd) return cmd_params(common, families, group_sizes);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitConfig;
}
