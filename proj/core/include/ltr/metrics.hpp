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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ltr {

// Document indices in rank order: descending score, ties broken by the
// original index (stable). Shared by metrics and prediction output.
std::vector<int> rank_order(std::span<const double> scores);

// NDCG@k with gains 2^y - 1 and discount 1/log2(1+rank). Requires at least
// one positive label; queries without one are skipped upstream.
double ndcg_at_k(std::span<const int> labels, std::span<const double> scores, int k);

// Reciprocal rank of the first relevant document (y > 0).
double reciprocal_rank(std::span<const int> labels, std::span<const double> scores);

// Mean 1-based position of relevant documents within the ranking.
double relevance_position(std::span<const int> labels, std::span<const double> scores);

struct MetricValue {
  std::string name;
  double mean = 0;
  double ci_low = 0;
  double ci_high = 0;
  std::vector<double> per_query;
};

struct MetricReport {
  std::size_t n_queries = 0;
  std::vector<MetricValue> metrics;

  const MetricValue* find(const std::string& name) const;
};

// Percentile bootstrap over queries (1000 resamples by default).
MetricValue bootstrap_metric(std::string name, std::vector<double> per_query,
                             int resamples = 1000, std::uint64_t seed = 0,
                             double confidence = 0.95);

// Human-readable table.
std::string format_table(const MetricReport& report);
// Line-delimited records: metric=<name> k=<k> mean=… ci_low=… ci_high=…
std::string format_records(const MetricReport& report);

}  // namespace ltr
