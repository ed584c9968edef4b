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

#include <functional>
#include <string>
#include <vector>

#include "ltr/param_store.hpp"
#include "ltr/rng.hpp"
#include "ltr/tape.hpp"

namespace ltr {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kBatchNormEps = 1e-5;

// Feedforward stack: per hidden layer dropout -> linear -> batch-norm ->
// ReLU, then a plain linear projection. Optionally batch-normalizes the
// input first.
struct DenseBlockSpec {
  std::vector<int> hidden;
  double dropout = 0.0;
  bool input_batch_norm = false;

  void validate() const {
    for (int w : hidden)
      if (w < 1) throw ConfigError("dense layer widths must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0)
      throw ConfigError("dropout rate must be in [0,1)");
  }
};

// Stack of self-attention blocks. model_width is the total width across
// heads; each head projects to model_width / n_heads.
struct AttentionBlockSpec {
  int model_width = 100;
  int n_heads = 1;
  int n_layers = 1;

  int head_width() const { return model_width / n_heads; }
  void validate() const {
    if (model_width < 1 || n_heads < 1 || n_layers < 1)
      throw ConfigError("attention spec fields must be >= 1");
    if (model_width % n_heads != 0)
      throw ConfigError("attention width " + std::to_string(model_width) +
                        " not divisible by " + std::to_string(n_heads) + " heads");
  }
};

// One forward computation: a tape bound to the parameter and batch-norm
// stores. Parameters enter the tape as leaves on first use and are
// remembered so gradients can be collected back by name.
template <class Real>
struct Graph {
  Tape<Real> tape;
  ParamStore<Real>* params = nullptr;
  StatStore<Real>* stats = nullptr;
  Mode mode = Mode::infer;
  bool build_grads = true;
  Real bn_momentum = Real(0.1);
  RngStream dropout_rng;

  std::vector<std::pair<std::string, NodeId>> param_nodes;

  NodeId param(const std::string& name) {
    for (const auto& [n, id] : param_nodes)
      if (n == name) return id;
    NodeId id = tape.leaf(params->value(name), build_grads);
    param_nodes.emplace_back(name, id);
    return id;
  }

  NodeId input(Mat<Real> value) { return tape.leaf(std::move(value), false); }

  // Accumulates tape gradients into the store after backward().
  void collect() { collect_gradients(tape, param_nodes, *params); }
};

template <class Real>
std::vector<Real> mask_factors(const std::vector<std::uint8_t>& valid) {
  std::vector<Real> f(valid.size());
  for (std::size_t i = 0; i < valid.size(); ++i) f[i] = valid[i] ? Real(1) : Real(0);
  return f;
}

// ---- parameter shape enumeration (single source for init and counting) ----

using ParamShapeFn = std::function<void(const std::string&, int, int)>;

inline void for_each_dense_param(const DenseBlockSpec& spec, int in_features,
                                 int out_cols, const std::string& prefix,
                                 const ParamShapeFn& fn) {
  spec.validate();
  if (spec.input_batch_norm) {
    fn(prefix + "/in_bn/gamma", 1, in_features);
    fn(prefix + "/in_bn/beta", 1, in_features);
  }
  int width = in_features;
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    const std::string layer = prefix + "/fc" + std::to_string(i);
    fn(layer + "/w", width, spec.hidden[i]);
    fn(layer + "/b", 1, spec.hidden[i]);
    fn(layer + "/bn/gamma", 1, spec.hidden[i]);
    fn(layer + "/bn/beta", 1, spec.hidden[i]);
    width = spec.hidden[i];
  }
  fn(prefix + "/out/w", width, out_cols);
  fn(prefix + "/out/b", 1, out_cols);
}

inline void for_each_attention_param(const AttentionBlockSpec& spec, int in_features,
                                     const std::string& prefix, const ParamShapeFn& fn) {
  spec.validate();
  for (int l = 0; l < spec.n_layers; ++l) {
    const std::string layer = prefix + "/l" + std::to_string(l);
    const int in_width = l == 0 ? in_features : spec.model_width;
    for (int h = 0; h < spec.n_heads; ++h) {
      const std::string head = layer + "/h" + std::to_string(h);
      fn(head + "/wq", in_width, spec.head_width());
      fn(head + "/wk", in_width, spec.head_width());
      fn(head + "/wv", in_width, spec.head_width());
    }
    fn(layer + "/wo", spec.model_width, spec.model_width);
    fn(layer + "/ln/gain", 1, spec.model_width);
    fn(layer + "/ln/bias", 1, spec.model_width);
  }
}

// Glorot-uniform weight matrices, zero biases, unit batch-norm/layer-norm
// gains. The draw for each parameter is keyed by its name, so layout
// changes elsewhere never shift another parameter's initial values.
template <class Real>
void init_param(ParamStore<Real>& store, const std::string& name, int rows, int cols,
                RngStream root) {
  Mat<Real> m(rows, cols);
  const bool is_weight = name.ends_with("/w") || name.ends_with("/wq") ||
                         name.ends_with("/wk") || name.ends_with("/wv") ||
                         name.ends_with("/wo");
  if (is_weight) {
    RngStream rng = root.fork(name);
    const double limit = std::sqrt(6.0 / double(rows + cols));
    for (auto& x : m.data) x = Real((rng.next_uniform() * 2.0 - 1.0) * limit);
  } else if (name.ends_with("gamma") || name.ends_with("gain")) {
    for (auto& x : m.data) x = Real(1);
  }
  store.add(name, std::move(m));
}

// ---- graph builders ----

// softmax(Q K^T / sqrt(width(K)), key mask) * V
template <class Real>
NodeId scaled_dot_attention(Graph<Real>& g, NodeId q, NodeId k, NodeId v,
                            const std::vector<std::uint8_t>& key_valid) {
  auto& t = g.tape;
  const int key_width = t.value(k).cols;
  if (t.value(q).cols != key_width)
    throw DimensionError("attention: query width " + t.value(q).shape_str() +
                         " vs key width " + t.value(k).shape_str());
  if (t.value(k).rows != t.value(v).rows)
    throw DimensionError("attention: keys " + t.value(k).shape_str() + " vs values " +
                         t.value(v).shape_str());
  NodeId logits = t.scale(t.matmul(q, t.transpose(k)), Real(1.0 / std::sqrt(double(key_width))));
  NodeId weights = t.softmax_rows(logits, key_valid);
  return t.matmul(weights, v);
}

namespace detail {

template <class Real>
struct MhaParts {
  NodeId mha;   // concat(head_1..head_H) W_O, rows = docs
  NodeId vcat;  // concat of per-head value projections, rows = docs
};

template <class Real>
MhaParts<Real> multi_head_parts(Graph<Real>& g, NodeId x, const AttentionBlockSpec& spec,
                                const std::vector<std::uint8_t>& doc_valid,
                                const std::string& layer_prefix) {
  auto& t = g.tape;
  std::vector<NodeId> heads, vprojs;
  for (int h = 0; h < spec.n_heads; ++h) {
    const std::string head = layer_prefix + "/h" + std::to_string(h);
    NodeId q = t.matmul(x, g.param(head + "/wq"));
    NodeId k = t.matmul(x, g.param(head + "/wk"));
    NodeId v = t.matmul(x, g.param(head + "/wv"));
    heads.push_back(scaled_dot_attention(g, q, k, v, doc_valid));
    vprojs.push_back(v);
  }
  NodeId hcat = heads[0];
  NodeId vcat = vprojs[0];
  for (int h = 1; h < spec.n_heads; ++h) {
    hcat = t.concat_cols(hcat, heads[h]);
    vcat = t.concat_cols(vcat, vprojs[h]);
  }
  return {t.matmul(hcat, g.param(layer_prefix + "/wo")), vcat};
}

}  // namespace detail

// Multi-head self-attention (Q=K=V=X) for one stack layer.
template <class Real>
NodeId multi_head_self_attention(Graph<Real>& g, NodeId x, const AttentionBlockSpec& spec,
                                 const std::vector<std::uint8_t>& doc_valid,
                                 const std::string& prefix, int layer = 0) {
  spec.validate();
  return detail::multi_head_parts(g, x, spec, doc_valid,
                                  prefix + "/l" + std::to_string(layer))
      .mha;
}

// Residual + layer norm around multi-head self-attention. When the input
// width differs from the model width (first layer on raw features), the
// residual path is the concatenated per-head value projection so the shapes
// agree. Masked document rows are zeroed after each block so padding cannot
// leak through residuals.
template <class Real>
NodeId attention_block(Graph<Real>& g, NodeId x, const AttentionBlockSpec& spec,
                       const std::vector<std::uint8_t>& doc_valid,
                       const std::string& prefix, int layer) {
  auto& t = g.tape;
  const std::string layer_prefix = prefix + "/l" + std::to_string(layer);
  auto parts = detail::multi_head_parts(g, x, spec, doc_valid, layer_prefix);
  NodeId residual = t.value(x).cols == spec.model_width ? x : parts.vcat;
  NodeId summed = t.add(residual, parts.mha);
  NodeId normed = t.layer_norm_rows(summed, g.param(layer_prefix + "/ln/gain"),
                                    g.param(layer_prefix + "/ln/bias"),
                                    Real(kLayerNormEps));
  return t.scale_rows(normed, mask_factors<Real>(doc_valid));
}

// Full stack: composition preserves permutation equivariance.
template <class Real>
NodeId attention_stack(Graph<Real>& g, NodeId x, const AttentionBlockSpec& spec,
                       const std::vector<std::uint8_t>& doc_valid,
                       const std::string& prefix) {
  spec.validate();
  NodeId cur = x;
  for (int l = 0; l < spec.n_layers; ++l)
    cur = attention_block(g, cur, spec, doc_valid, prefix, l);
  return cur;
}

// Dense head. Rows are documents (possibly stacked across queries);
// row_valid excludes padded rows from batch-norm statistics. Returns an
// N x out_cols matrix with no output activation.
template <class Real>
NodeId dense_block(Graph<Real>& g, NodeId x, const DenseBlockSpec& spec,
                   const std::vector<std::uint8_t>& row_valid, const std::string& prefix,
                   int out_cols = 1) {
  spec.validate();
  auto& t = g.tape;
  NodeId cur = x;
  if (spec.input_batch_norm) {
    auto& st = g.stats->get(prefix + "/in_bn");
    cur = t.batch_norm(cur, g.param(prefix + "/in_bn/gamma"),
                       g.param(prefix + "/in_bn/beta"), st, g.mode, g.bn_momentum,
                       Real(kBatchNormEps), &row_valid);
  }
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    const std::string layer = prefix + "/fc" + std::to_string(i);
    cur = t.dropout(cur, Real(spec.dropout), g.mode, g.dropout_rng.fork(layer));
    cur = t.add_rowvec(t.matmul(cur, g.param(layer + "/w")), g.param(layer + "/b"));
    auto& st = g.stats->get(layer + "/bn");
    cur = t.batch_norm(cur, g.param(layer + "/bn/gamma"), g.param(layer + "/bn/beta"),
                       st, g.mode, g.bn_momentum, Real(kBatchNormEps), &row_valid);
    cur = t.relu(cur);
  }
  NodeId proj = g.param(prefix + "/out/w");
  if (t.value(proj).cols != out_cols)
    throw DimensionError("dense block projects to " + std::to_string(t.value(proj).cols) +
                         " columns, caller expected " + std::to_string(out_cols));
  return t.add_rowvec(t.matmul(cur, proj), g.param(prefix + "/out/b"));
}

// Registers the batch-norm states a dense block will use.
template <class Real>
void register_dense_stats(StatStore<Real>& stats, const DenseBlockSpec& spec,
                          int in_features, const std::string& prefix) {
  if (spec.input_batch_norm) stats.get_or_add(prefix + "/in_bn", in_features);
  for (std::size_t i = 0; i < spec.hidden.size(); ++i)
    stats.get_or_add(prefix + "/fc" + std::to_string(i) + "/bn", spec.hidden[i]);
}

}  // namespace ltr
