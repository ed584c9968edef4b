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

#include "ltr/scorers.hpp"

#include <numeric>

namespace ltr {

std::string to_string(ScorerFamily f) {
  switch (f) {
    case ScorerFamily::univariate: return "univariate";
    case ScorerFamily::gsf: return "gsf";
    case ScorerFamily::attn_din: return "attn_din";
  }
  return "?";
}

ScorerFamily scorer_family_from(const std::string& name) {
  if (name == "univariate") return ScorerFamily::univariate;
  if (name == "gsf") return ScorerFamily::gsf;
  if (name == "attn_din") return ScorerFamily::attn_din;
  throw ConfigError("unknown scorer family: " + name);
}

std::string ScorerSpec::to_text() const {
  std::ostringstream out;
  out << "scorer.family = " << ltr::to_string(family) << "\n";
  out << "scorer.n_features = " << n_features << "\n";
  out << "scorer.query_features = " << query_features << "\n";
  out << "scorer.dense.widths =";
  for (std::size_t i = 0; i < dense.hidden.size(); ++i)
    out << (i ? "," : " ") << dense.hidden[i];
  out << "\n";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", dense.dropout);
  out << "scorer.dense.dropout = " << buf << "\n";
  out << "scorer.dense.input_batch_norm = " << (dense.input_batch_norm ? "true" : "false")
      << "\n";
  out << "scorer.attn.width = " << attn.model_width << "\n";
  out << "scorer.attn.heads = " << attn.n_heads << "\n";
  out << "scorer.attn.layers = " << attn.n_layers << "\n";
  out << "scorer.gsf.group_size = " << gsf_group_size << "\n";
  out << "scorer.gsf.mode = " << (gsf_mode == GsfMode::exact ? "exact" : "subsample")
      << "\n";
  out << "scorer.gsf.stride = " << gsf_stride << "\n";
  out << "scorer.gsf.budget = " << gsf_budget << "\n";
  return out.str();
}

ScorerSpec scorer_spec_from_config(const KvConfig& cfg, const ScorerSpec& defaults) {
  ScorerSpec s = defaults;
  s.family = scorer_family_from(cfg.get_string("scorer.family", to_string(defaults.family)));
  s.n_features = cfg.get_int("scorer.n_features", defaults.n_features);
  s.query_features = cfg.get_int("scorer.query_features", defaults.query_features);
  s.dense.hidden = cfg.get_int_list("scorer.dense.widths", defaults.dense.hidden);
  s.dense.dropout = cfg.get_double("scorer.dense.dropout", defaults.dense.dropout);
  s.dense.input_batch_norm =
      cfg.get_bool("scorer.dense.input_batch_norm", defaults.dense.input_batch_norm);
  s.attn.model_width = cfg.get_int("scorer.attn.width", defaults.attn.model_width);
  s.attn.n_heads = cfg.get_int("scorer.attn.heads", defaults.attn.n_heads);
  s.attn.n_layers = cfg.get_int("scorer.attn.layers", defaults.attn.n_layers);
  s.gsf_group_size = cfg.get_int("scorer.gsf.group_size", defaults.gsf_group_size);
  const std::string mode =
      cfg.get_string("scorer.gsf.mode", defaults.gsf_mode == GsfMode::exact ? "exact" : "subsample");
  if (mode == "exact")
    s.gsf_mode = GsfMode::exact;
  else if (mode == "subsample")
    s.gsf_mode = GsfMode::subsample;
  else
    throw ConfigError("scorer.gsf.mode must be exact or subsample, got: " + mode);
  s.gsf_stride = cfg.get_int("scorer.gsf.stride", defaults.gsf_stride);
  s.gsf_budget = cfg.get_u64("scorer.gsf.budget", defaults.gsf_budget);
  return s;
}

ScorerSpec ScorerSpec::from_text(const std::string& text) {
  std::istringstream in(text);
  KvConfig cfg = KvConfig::parse_stream(in);
  return scorer_spec_from_config(cfg, ScorerSpec{});
}

void for_each_scorer_param(const ScorerSpec& spec, const ParamShapeFn& fn) {
  spec.validate();
  if (spec.family == ScorerFamily::attn_din)
    for_each_attention_param(spec.attn, spec.query_features + spec.n_features, "attn", fn);
  for_each_dense_param(spec.dense, spec.head_in_features(), spec.head_out_cols(), "dense", fn);
}

std::size_t param_count(const ScorerSpec& spec) {
  std::size_t total = 0;
  for_each_scorer_param(spec, [&](const std::string&, int r, int c) {
    total += std::size_t(r) * std::size_t(c);
  });
  return total;
}

std::uint64_t ordered_group_count(int n, int m) {
  std::uint64_t count = 1;
  for (int i = 0; i < m; ++i) {
    const std::uint64_t factor = std::uint64_t(n - i);
    if (factor == 0) return 0;
    if (count > UINT64_MAX / factor) return UINT64_MAX;  // saturate
    count *= factor;
  }
  return count;
}

std::vector<std::vector<int>> gsf_exact_groups(int n, int m, std::uint64_t budget) {
  if (m < 1 || n < m)
    throw ContractError("exact groups need 1 <= m <= n, got m=" + std::to_string(m) +
                        ", n=" + std::to_string(n));
  const std::uint64_t count = ordered_group_count(n, m);
  if (count > budget)
    throw ContractError("exact GSF(m=" + std::to_string(m) + ") on " + std::to_string(n) +
                        " documents needs " + std::to_string(count) +
                        " group evaluations, over the budget of " + std::to_string(budget));
  std::vector<std::vector<int>> groups;
  groups.reserve(count);
  std::vector<int> cur(m);
  std::vector<char> used(n, 0);
  // Depth-first lexicographic enumeration of ordered tuples.
  std::function<void(int)> rec = [&](int depth) {
    if (depth == m) {
      groups.push_back(cur);
      return;
    }
    for (int i = 0; i < n; ++i) {
      if (used[i]) continue;
      used[i] = 1;
      cur[depth] = i;
      rec(depth + 1);
      used[i] = 0;
    }
  };
  rec(0);
  return groups;
}

std::vector<std::vector<int>> gsf_window_groups(int n, int m, int stride, RngStream rng) {
  if (m < 1 || stride < 1 || stride > m)
    throw ContractError("window groups need m >= 1 and stride in [1, m]");
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  std::vector<std::vector<int>> groups;
  for (int start = 0; start < n; start += stride) {
    std::vector<int> grp(m);
    for (int j = 0; j < m; ++j) grp[j] = perm[(start + j) % n];
    groups.push_back(std::move(grp));
  }
  return groups;
}

}  // namespace ltr
