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

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ltr/scorers.hpp"

namespace ltr {

struct LossSpec {
  enum class Kind { softmax, approx_ndcg };
  Kind kind = Kind::softmax;
  double eta = 0.1;  // approx_ndcg rank sharpness

  void validate() const {
    if (eta <= 0.0) throw ConfigError("loss eta must be > 0");
  }
  std::string name() const { return kind == Kind::softmax ? "softmax" : "approx_ndcg"; }
  static LossSpec from_name(const std::string& n, double eta = 0.1) {
    LossSpec s;
    s.eta = eta;
    if (n == "softmax")
      s.kind = Kind::softmax;
    else if (n == "approx_ndcg")
      s.kind = Kind::approx_ndcg;
    else
      throw ConfigError("unknown loss kind: " + n);
    s.validate();
    return s;
  }
};

namespace detail {

inline void check_labels(std::span<const int> labels,
                         const std::vector<std::uint8_t>& valid) {
  if (labels.size() != valid.size())
    throw DimensionError("loss: " + std::to_string(labels.size()) + " labels vs " +
                         std::to_string(valid.size()) + " mask flags");
  bool any = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw DataError("loss: negative relevance grade");
    any |= valid[i] && labels[i] > 0;
  }
  if (!any)
    throw DataError("loss: query has no relevant documents (filter upstream)");
}

}  // namespace detail

// Ideal DCG over the full valid list: gains 2^y - 1 sorted descending,
// discount 1/log2(1+rank).
inline double ideal_dcg(std::span<const int> labels, const std::vector<std::uint8_t>& valid) {
  std::vector<int> grades;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (valid[i]) grades.push_back(labels[i]);
  std::sort(grades.begin(), grades.end(), std::greater<>());
  double dcg = 0;
  for (std::size_t r = 0; r < grades.size(); ++r)
    dcg += (std::pow(2.0, double(grades[r])) - 1.0) / std::log2(2.0 + double(r));
  return dcg;
}

// Listwise cross entropy between grade-normalized labels and the score
// softmax, over valid slots. This is the negated likelihood, so lower is
// better.
template <class Real>
NodeId softmax_ce_loss(Graph<Real>& g, NodeId score_row, std::span<const int> labels,
                       const std::vector<std::uint8_t>& valid) {
  detail::check_labels(labels, valid);
  auto& t = g.tape;
  double label_sum = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (valid[i]) label_sum += labels[i];
  std::vector<Real> w(labels.size(), Real(0));
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (valid[i]) w[i] = Real(double(labels[i]) / label_sum);
  NodeId log_probs = t.log_softmax_rows(score_row, valid);
  return t.scale(t.weighted_sum(log_probs, std::move(w)), Real(-1));
}

// Differentiable NDCG surrogate: gains discounted by approximate ranks,
// normalized by the ideal DCG, negated so lower is better. The negation
// keeps -loss <= 1 with equality at a perfect sharp ranking.
template <class Real>
NodeId approx_ndcg_loss(Graph<Real>& g, NodeId score_row, std::span<const int> labels,
                        const std::vector<std::uint8_t>& valid, Real eta) {
  detail::check_labels(labels, valid);
  auto& t = g.tape;
  const double dcg_star = ideal_dcg(labels, valid);
  std::vector<Real> gains(labels.size(), Real(0));
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (valid[i]) gains[i] = Real(std::pow(2.0, double(labels[i])) - 1.0);
  NodeId ranks = t.approx_rank(score_row, valid, eta);
  NodeId inv_discount = t.reciprocal(t.log2p1(ranks));
  return t.scale(t.weighted_sum(inv_discount, std::move(gains)), Real(-1.0 / dcg_star));
}

template <class Real>
NodeId ranking_loss(Graph<Real>& g, const LossSpec& spec, NodeId score_row,
                    std::span<const int> labels, const std::vector<std::uint8_t>& valid) {
  spec.validate();
  return spec.kind == LossSpec::Kind::softmax
             ? softmax_ce_loss(g, score_row, labels, valid)
             : approx_ndcg_loss(g, score_row, labels, valid, Real(spec.eta));
}

// Mean per-query loss over a scored batch.
template <class Real>
NodeId batch_loss(Graph<Real>& g, const LossSpec& spec, const BatchForward<Real>& fwd,
                  const ListBatch& b) {
  std::vector<NodeId> per_query;
  per_query.reserve(fwd.score_rows.size());
  for (std::size_t q = 0; q < fwd.score_rows.size(); ++q) {
    std::span<const int> labels(b.labels.data() + q * std::size_t(b.max_list),
                                std::size_t(b.max_list));
    per_query.push_back(ranking_loss(g, spec, fwd.score_rows[q], labels, fwd.masks[q]));
  }
  return g.tape.scale(g.tape.sum_scalars(per_query), Real(1.0 / double(per_query.size())));
}

}  // namespace ltr
