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
#include <iosfwd>
#include <string>
#include <vector>

#include "ltr/matrix.hpp"

namespace ltr {

// One query's documents: a dense feature matrix (one row per document, file
// order preserved) and integer relevance grades.
struct RankedQuery {
  std::string qid;
  std::vector<int> labels;       // grades >= 0, one per document
  Mat<double> features;          // n_docs x n_features

  int n_docs() const { return features.rows; }
  bool has_relevant() const {
    for (int y : labels)
      if (y > 0) return true;
    return false;
  }
};

struct Dataset {
  std::vector<RankedQuery> queries;
  int n_features = 0;

  std::size_t total_docs() const {
    std::size_t n = 0;
    for (const auto& q : queries) n += std::size_t(q.n_docs());
    return n;
  }
};

// LibSVM-with-qid ranking format: `<grade> qid:<id> <idx>:<val> ...` with
// 1-based feature indices. Lines of one qid need not be contiguous. Text
// after '#' is ignored. Feature width is the maximum index seen unless
// min_features forces a wider matrix; absent indices are 0.
Dataset parse_ranking_file(const std::string& path, int min_features = 0);
Dataset parse_ranking_stream(std::istream& in, int min_features = 0);

void serialize_ranking_file(const Dataset& ds, const std::string& path);
void serialize_ranking_stream(const Dataset& ds, std::ostream& out);

// Drops queries whose labels are all zero.
Dataset filter_no_relevant(Dataset ds);

// Keeps the first max_docs documents per query, in file order. Evaluation
// paths skip this.
Dataset truncate_lists(Dataset ds, int max_docs);

// Per-feature z-score statistics fitted on the training split only.
struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> std_dev;           // population
  std::vector<std::uint8_t> constant;    // std == 0
  bool fitted = false;
};

FeatureStats fit_feature_stats(const Dataset& train);
// (x - mean) / std per feature; constant features map to 0.
Dataset apply_normalization(Dataset ds, const FeatureStats& stats);

// Versioned key/value sidecar.
void save_feature_stats(const FeatureStats& stats, const std::string& path);
FeatureStats load_feature_stats(const std::string& path);

// Fixed-shape stack of queries, padded to the longest list in the batch.
// Padded slots have zero features, label 0 and mask 0.
struct ListBatch {
  std::vector<std::string> qids;
  int n_queries = 0;
  int max_list = 0;
  int n_features = 0;
  std::vector<double> features;       // n_queries * max_list * n_features
  std::vector<int> labels;            // n_queries * max_list
  std::vector<std::uint8_t> mask;     // n_queries * max_list

  double feature(int q, int slot, int f) const {
    return features[(std::size_t(q) * max_list + slot) * n_features + f];
  }
  int label(int q, int slot) const { return labels[std::size_t(q) * max_list + slot]; }
  bool valid(int q, int slot) const { return mask[std::size_t(q) * max_list + slot] != 0; }
  int list_size(int q) const {
    int n = 0;
    for (int s = 0; s < max_list; ++s) n += valid(q, s);
    return n;
  }
};

// Deterministic given seed. Shuffling permutes query order only; document
// order within a query is never changed.
std::vector<ListBatch> make_batches(const Dataset& ds, int batch_size,
                                    std::uint64_t seed, bool shuffle);

ListBatch batch_from_queries(const std::vector<const RankedQuery*>& queries, int n_features);

}  // namespace ltr
