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

#include "ltr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ltr/error.hpp"
#include "ltr/rng.hpp"

namespace ltr {

std::vector<int> rank_order(std::span<const double> scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  return order;
}

namespace {

double gain(int label) { return std::pow(2.0, double(label)) - 1.0; }
double discount(int rank_1based) { return 1.0 / std::log2(1.0 + double(rank_1based)); }

}  // namespace

double ndcg_at_k(std::span<const int> labels, std::span<const double> scores, int k) {
  if (k < 1) throw ContractError("ndcg_at_k: k must be >= 1");
  if (labels.size() != scores.size())
    throw DimensionError("ndcg_at_k: " + std::to_string(labels.size()) + " labels vs " +
                         std::to_string(scores.size()) + " scores");
  const int n = int(labels.size());
  auto order = rank_order(scores);
  double dcg = 0;
  for (int r = 0; r < std::min(k, n); ++r) dcg += gain(labels[order[r]]) * discount(r + 1);

  std::vector<int> sorted(labels.begin(), labels.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double idcg = 0;
  for (int r = 0; r < std::min(k, n); ++r) idcg += gain(sorted[r]) * discount(r + 1);
  if (idcg == 0)
    throw ContractError("ndcg_at_k: query has no relevant documents");
  return dcg / idcg;
}

double reciprocal_rank(std::span<const int> labels, std::span<const double> scores) {
  auto order = rank_order(scores);
  for (std::size_t r = 0; r < order.size(); ++r)
    if (labels[order[r]] > 0) return 1.0 / double(r + 1);
  throw ContractError("reciprocal_rank: query has no relevant documents");
}

double relevance_position(std::span<const int> labels, std::span<const double> scores) {
  auto order = rank_order(scores);
  double sum = 0;
  int count = 0;
  for (std::size_t r = 0; r < order.size(); ++r)
    if (labels[order[r]] > 0) {
      sum += double(r + 1);
      ++count;
    }
  if (count == 0)
    throw ContractError("relevance_position: query has no relevant documents");
  return sum / count;
}

const MetricValue* MetricReport::find(const std::string& name) const {
  for (const auto& m : metrics)
    if (m.name == name) return &m;
  return nullptr;
}

MetricValue bootstrap_metric(std::string name, std::vector<double> per_query,
                             int resamples, std::uint64_t seed, double confidence) {
  if (per_query.empty()) throw ContractError("bootstrap_metric: no per-query values");
  MetricValue mv;
  mv.name = std::move(name);
  mv.mean = std::accumulate(per_query.begin(), per_query.end(), 0.0) / double(per_query.size());

  RngStream rng = RngStream(seed).fork(mv.name);
  std::vector<double> means(resamples);
  const std::size_t n = per_query.size();
  for (int b = 0; b < resamples; ++b) {
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += per_query[rng.next_below(n)];
    means[b] = acc / double(n);
  }
  std::sort(means.begin(), means.end());
  const double alpha = (1.0 - confidence) / 2.0;
  auto quantile = [&](double q) {
    const double pos = q * double(resamples - 1);
    const std::size_t lo = std::size_t(pos);
    const std::size_t hi = std::min(std::size_t(resamples - 1), lo + 1);
    const double frac = pos - double(lo);
    return means[lo] * (1.0 - frac) + means[hi] * frac;
  };
  mv.ci_low = quantile(alpha);
  mv.ci_high = quantile(1.0 - alpha);
  mv.per_query = std::move(per_query);
  return mv;
}

std::string format_table(const MetricReport& report) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-10s %10s %10s %10s   (queries: %zu)\n", "metric",
                "mean", "ci_low", "ci_high", report.n_queries);
  out += buf;
  for (const auto& m : report.metrics) {
    std::snprintf(buf, sizeof buf, "%-10s %10.5f %10.5f %10.5f\n", m.name.c_str(),
                  m.mean, m.ci_low, m.ci_high);
    out += buf;
  }
  return out;
}

std::string format_records(const MetricReport& report) {
  std::string out;
  char buf[200];
  for (const auto& m : report.metrics) {
    std::string base = m.name;
    int k = -1;
    if (auto at = base.find('@'); at != std::string::npos) {
      k = std::stoi(base.substr(at + 1));
      base.resize(at);
    }
    if (k >= 0)
      std::snprintf(buf, sizeof buf,
                    "metric=%s k=%d mean=%.6f ci_low=%.6f ci_high=%.6f\n", base.c_str(),
                    k, m.mean, m.ci_low, m.ci_high);
    else
      std::snprintf(buf, sizeof buf, "metric=%s mean=%.6f ci_low=%.6f ci_high=%.6f\n",
                    base.c_str(), m.mean, m.ci_low, m.ci_high);
    out += buf;
  }
  return out;
}

}  // namespace ltr
