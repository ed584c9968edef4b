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
#include <sstream>
#include <string>
#include <vector>

#include "ltr/config.hpp"
#include "ltr/dataset.hpp"
#include "ltr/layers.hpp"

namespace ltr {

// Sort-safe stand-in for -inf at padded slots; excluded from losses and
// metrics via masks.
inline constexpr double kPaddedScore = -1e30;

enum class ScorerFamily { univariate, gsf, attn_din };
enum class GsfMode { exact, subsample };

std::string to_string(ScorerFamily f);
ScorerFamily scorer_family_from(const std::string& name);

// Topology of one scoring function. All three families share the dense
// head; gsf adds group pooling, attn_din adds the self-attention stack.
struct ScorerSpec {
  ScorerFamily family = ScorerFamily::univariate;
  int n_features = 0;
  int query_features = 0;
  DenseBlockSpec dense;
  AttentionBlockSpec attn;
  int gsf_group_size = 2;
  GsfMode gsf_mode = GsfMode::exact;
  int gsf_stride = 1;
  std::uint64_t gsf_budget = 100000;

  void validate() const {
    if (n_features < 1) throw ConfigError("scorer needs n_features >= 1");
    if (query_features < 0) throw ConfigError("query_features must be >= 0");
    dense.validate();
    if (family == ScorerFamily::attn_din) attn.validate();
    if (family == ScorerFamily::gsf) {
      if (gsf_group_size < 1) throw ConfigError("gsf group size must be >= 1");
      if (gsf_stride < 1 || gsf_stride > gsf_group_size)
        throw ConfigError("gsf window stride must be in [1, group_size]");
    }
  }

  // Dense-head input width per family.
  int head_in_features() const {
    switch (family) {
      case ScorerFamily::univariate: return query_features + n_features;
      case ScorerFamily::gsf: return query_features + gsf_group_size * n_features;
      case ScorerFamily::attn_din:
        return query_features + n_features + attn.model_width;
    }
    return 0;
  }
  int head_out_cols() const { return family == ScorerFamily::gsf ? gsf_group_size : 1; }

  std::string to_text() const;
  static ScorerSpec from_text(const std::string& text);
};

// Reads scorer.* keys, falling back to `defaults` for absent ones.
ScorerSpec scorer_spec_from_config(const KvConfig& cfg, const ScorerSpec& defaults);

// ---- parameters ----

void for_each_scorer_param(const ScorerSpec& spec, const ParamShapeFn& fn);
std::size_t param_count(const ScorerSpec& spec);

template <class Real>
ParamStore<Real> init_scorer_params(const ScorerSpec& spec, std::uint64_t seed) {
  ParamStore<Real> store;
  RngStream root(seed);
  for_each_scorer_param(spec, [&](const std::string& name, int rows, int cols) {
    init_param(store, name, rows, cols, root);
  });
  return store;
}

// Running batch-norm states start at mean 0, variance 1 so a freshly
// initialized model is servable; checkpoints overwrite them.
template <class Real>
StatStore<Real> init_scorer_stats(const ScorerSpec& spec) {
  StatStore<Real> stats;
  register_dense_stats(stats, spec.dense, spec.head_in_features(), "dense");
  for (auto& name : stats.names()) stats.get(name).initialized = true;
  return stats;
}

// ---- GSF group enumeration ----

// Number of ordered m-tuples of distinct elements from n, saturating.
std::uint64_t ordered_group_count(int n, int m);

// All ordered m-permutations of [0, n), lexicographic. Refuses (naming the
// count) when it exceeds the budget.
std::vector<std::vector<int>> gsf_exact_groups(int n, int m, std::uint64_t budget);

// Rolling windows of size m over a shuffled order (circular), starting at
// multiples of stride. O(n) groups; not permutation-equivariant.
std::vector<std::vector<int>> gsf_window_groups(int n, int m, int stride, RngStream rng);

// ---- forward pass ----

template <class Real>
struct BatchForward {
  // One 1 x max_list score row per query; padded columns carry junk and are
  // excluded by `masks`.
  std::vector<NodeId> score_rows;
  std::vector<std::vector<std::uint8_t>> masks;
};

namespace detail {

// Stacks per-document input rows (query context + features) for a batch;
// padded rows are zeroed regardless of their stored feature values.
template <class Real>
Mat<Real> doc_input_rows(const ListBatch& b, int q, const Mat<Real>* query_ctx) {
  const int qf = query_ctx ? query_ctx->cols : 0;
  Mat<Real> x(b.max_list, qf + b.n_features);
  for (int s = 0; s < b.max_list; ++s) {
    if (!b.valid(q, s)) continue;
    Real* row = x.row(s);
    for (int c = 0; c < qf; ++c) row[c] = (*query_ctx)(q, c);
    for (int c = 0; c < b.n_features; ++c)
      row[qf + c] = Real(b.feature(q, s, c));
  }
  return x;
}

template <class Real>
std::vector<std::uint8_t> query_mask(const ListBatch& b, int q) {
  std::vector<std::uint8_t> m(b.max_list);
  for (int s = 0; s < b.max_list; ++s) m[s] = b.valid(q, s) ? 1 : 0;
  return m;
}

// Pads a 1 x n row node to 1 x max_list with zero columns.
template <class Real>
NodeId pad_row(Graph<Real>& g, NodeId row, int max_list) {
  const int n = g.tape.value(row).cols;
  if (n == max_list) return row;
  return g.tape.concat_cols(row, g.input(Mat<Real>(1, max_list - n)));
}

}  // namespace detail

// Builds the scoring graph for a whole batch. `step_seed` feeds dropout and
// the gsf subsample shuffle; infer mode ignores it except for subsample
// windows (which are part of the serving definition for that mode).
template <class Real>
BatchForward<Real> score_batch(Graph<Real>& g, const ScorerSpec& spec, const ListBatch& b,
                               const Mat<Real>* query_ctx = nullptr,
                               std::uint64_t step_seed = 0) {
  spec.validate();
  if (b.n_features != spec.n_features)
    throw DimensionError("scorer expects " + std::to_string(spec.n_features) +
                         " features, batch has " + std::to_string(b.n_features));
  if (query_ctx && query_ctx->cols != spec.query_features)
    throw DimensionError("scorer expects " + std::to_string(spec.query_features) +
                         " query features, got " + std::to_string(query_ctx->cols));
  if (spec.query_features > 0 && !query_ctx)
    throw DimensionError("scorer expects query context features");
  auto& t = g.tape;
  const int L = b.max_list;

  BatchForward<Real> out;
  out.masks.reserve(b.n_queries);
  for (int q = 0; q < b.n_queries; ++q) out.masks.push_back(detail::query_mask<Real>(b, q));

  std::vector<std::uint8_t> flat_valid(b.mask.begin(), b.mask.end());

  if (spec.family == ScorerFamily::univariate) {
    Mat<Real> stacked(b.n_queries * L, spec.query_features + b.n_features);
    for (int q = 0; q < b.n_queries; ++q) {
      Mat<Real> x = detail::doc_input_rows(b, q, query_ctx);
      std::copy(x.data.begin(), x.data.end(), stacked.row(q * L));
    }
    NodeId h = dense_block(g, g.input(std::move(stacked)), spec.dense, flat_valid, "dense");
    for (int q = 0; q < b.n_queries; ++q)
      out.score_rows.push_back(t.transpose(t.slice_rows(h, q * L, (q + 1) * L)));
    return out;
  }

  if (spec.family == ScorerFamily::attn_din) {
    std::vector<NodeId> per_query;
    per_query.reserve(b.n_queries);
    for (int q = 0; q < b.n_queries; ++q) {
      NodeId x = g.input(detail::doc_input_rows(b, q, query_ctx));
      NodeId e = attention_stack(g, x, spec.attn, out.masks[q], "attn");
      per_query.push_back(t.concat_cols(x, e));
    }
    NodeId stacked = per_query.size() == 1 ? per_query[0] : t.concat_rows(per_query);
    NodeId h = dense_block(g, stacked, spec.dense, flat_valid, "dense");
    for (int q = 0; q < b.n_queries; ++q)
      out.score_rows.push_back(t.transpose(t.slice_rows(h, q * L, (q + 1) * L)));
    return out;
  }

  // GSF: evaluate the sub-network on document groups, pool per document.
  const int m = spec.gsf_group_size;
  const int qf = spec.query_features;
  std::vector<std::vector<std::vector<int>>> groups_per_query(b.n_queries);
  std::vector<int> n_docs(b.n_queries);
  std::size_t total_rows = 0;
  for (int q = 0; q < b.n_queries; ++q) {
    n_docs[q] = b.list_size(q);
    if (spec.gsf_mode == GsfMode::exact) {
      if (n_docs[q] < m)
        throw DataError("exact GSF(m=" + std::to_string(m) + ") needs lists of >= m documents, got " +
                        std::to_string(n_docs[q]));
      groups_per_query[q] = gsf_exact_groups(n_docs[q], m, spec.gsf_budget);
    } else {
      RngStream rng = RngStream(step_seed).fork("gsf_window").fork(std::uint64_t(q));
      groups_per_query[q] = gsf_window_groups(n_docs[q], m, spec.gsf_stride, rng);
    }
    total_rows += groups_per_query[q].size();
  }

  Mat<Real> grows(int(total_rows), qf + m * spec.n_features);
  std::size_t r = 0;
  for (int q = 0; q < b.n_queries; ++q) {
    for (const auto& grp : groups_per_query[q]) {
      Real* row = grows.row(int(r++));
      for (int c = 0; c < qf; ++c) row[c] = (*query_ctx)(q, c);
      for (int s = 0; s < m; ++s)
        for (int c = 0; c < spec.n_features; ++c)
          row[qf + s * spec.n_features + c] = Real(b.feature(q, grp[s], c));
    }
  }
  std::vector<std::uint8_t> group_valid(total_rows, 1);
  NodeId subscores =
      dense_block(g, g.input(std::move(grows)), spec.dense, group_valid, "dense", m);
  int off = 0;
  for (int q = 0; q < b.n_queries; ++q) {
    const int gq = int(groups_per_query[q].size());
    NodeId sq = t.slice_rows(subscores, off, off + gq);
    NodeId pooled = t.group_pool(sq, groups_per_query[q], n_docs[q]);
    out.score_rows.push_back(detail::pad_row(g, pooled, L));
    off += gq;
  }
  return out;
}

// Score values with the padded-slot sentinel filled in.
template <class Real>
Mat<double> extract_scores(const Graph<Real>& g, const BatchForward<Real>& fwd) {
  const int nq = int(fwd.score_rows.size());
  const int L = nq ? int(fwd.masks[0].size()) : 0;
  Mat<double> scores(nq, L);
  for (int q = 0; q < nq; ++q) {
    const auto& row = g.tape.value(fwd.score_rows[q]);
    for (int s = 0; s < L; ++s)
      scores(q, s) = fwd.masks[q][s] ? double(row.data[s]) : kPaddedScore;
  }
  return scores;
}

// Convenience single-list scoring (serving path).
template <class Real>
std::vector<double> score_single_list(const ScorerSpec& spec, ParamStore<Real>& params,
                                      StatStore<Real>& stats, const RankedQuery& query,
                                      Mode mode = Mode::infer,
                                      std::uint64_t step_seed = 0,
                                      bool build_grads = false) {
  Graph<Real> g;
  g.params = &params;
  g.stats = &stats;
  g.mode = mode;
  g.build_grads = build_grads;
  g.dropout_rng = RngStream(step_seed);
  std::vector<const RankedQuery*> one = {&query};
  ListBatch b = batch_from_queries(one, query.features.cols);
  auto fwd = score_batch(g, spec, b, static_cast<const Mat<Real>*>(nullptr), step_seed);
  Mat<double> s = extract_scores(g, fwd);
  return {s.data.begin(), s.data.begin() + query.n_docs()};
}

}  // namespace ltr
