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

#include "ltr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "ltr/error.hpp"
#include "ltr/rng.hpp"

namespace ltr {

namespace {

struct SparseDoc {
  int grade = 0;
  std::vector<std::pair<int, double>> feats;  // 1-based index, value
};

const char* skip_ws(const char* p, const char* end) {
  while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
  return p;
}

bool parse_int(const char*& p, const char* end, int& out) {
  auto [ptr, ec] = std::from_chars(p, end, out);
  if (ec != std::errc()) return false;
  p = ptr;
  return true;
}

bool parse_double(const char*& p, const char* end, double& out) {
  auto [ptr, ec] = std::from_chars(p, end, out);
  if (ec != std::errc()) return false;
  p = ptr;
  return true;
}

}  // namespace

Dataset parse_ranking_stream(std::istream& in, int min_features) {
  std::vector<std::string> qid_order;
  std::unordered_map<std::string, std::size_t> qid_index;
  std::vector<std::vector<SparseDoc>> docs_by_query;
  int max_feature = min_features;

  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const char* p = line.data();
    const char* end = line.data() + line.size();
    p = skip_ws(p, end);
    if (p == end) continue;  // blank line

    SparseDoc doc;
    if (!parse_int(p, end, doc.grade))
      throw ParseError("expected integer relevance grade", line_no);
    if (doc.grade < 0) throw ParseError("negative relevance grade", line_no);

    p = skip_ws(p, end);
    if (end - p < 4 || std::string_view(p, 4) != "qid:")
      throw ParseError("expected qid:<id>", line_no);
    p += 4;
    const char* qstart = p;
    while (p < end && *p != ' ' && *p != '\t') ++p;
    if (p == qstart) throw ParseError("empty qid", line_no);
    std::string qid(qstart, p);

    while (true) {
      p = skip_ws(p, end);
      if (p == end) break;
      int idx;
      if (!parse_int(p, end, idx) || p == end || *p != ':')
        throw ParseError("expected <index>:<value>", line_no);
      ++p;
      double val;
      if (!parse_double(p, end, val))
        throw ParseError("expected numeric feature value", line_no);
      if (idx < 1) throw ParseError("feature indices are 1-based", line_no);
      max_feature = std::max(max_feature, idx);
      doc.feats.emplace_back(idx, val);
    }

    auto it = qid_index.find(qid);
    std::size_t qi;
    if (it == qid_index.end()) {
      qi = qid_order.size();
      qid_index.emplace(qid, qi);
      qid_order.push_back(qid);
      docs_by_query.emplace_back();
    } else {
      qi = it->second;
    }
    docs_by_query[qi].push_back(std::move(doc));
  }

  Dataset ds;
  ds.n_features = max_feature;
  ds.queries.reserve(qid_order.size());
  for (std::size_t qi = 0; qi < qid_order.size(); ++qi) {
    RankedQuery rq;
    rq.qid = qid_order[qi];
    const auto& docs = docs_by_query[qi];
    rq.features = Mat<double>(int(docs.size()), max_feature);
    rq.labels.reserve(docs.size());
    for (std::size_t d = 0; d < docs.size(); ++d) {
      rq.labels.push_back(docs[d].grade);
      for (const auto& [idx, val] : docs[d].feats)
        rq.features(int(d), idx - 1) = val;
    }
    ds.queries.push_back(std::move(rq));
  }
  return ds;
}

Dataset parse_ranking_file(const std::string& path, int min_features) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ranking file: " + path);
  return parse_ranking_stream(in, min_features);
}

void serialize_ranking_stream(const Dataset& ds, std::ostream& out) {
  char buf[64];
  for (const auto& q : ds.queries) {
    for (int d = 0; d < q.n_docs(); ++d) {
      out << q.labels[d] << " qid:" << q.qid;
      for (int f = 0; f < ds.n_features; ++f) {
        std::snprintf(buf, sizeof buf, "%.17g", q.features(d, f));
        out << ' ' << (f + 1) << ':' << buf;
      }
      out << '\n';
    }
  }
}

void serialize_ranking_file(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write ranking file: " + path);
  serialize_ranking_stream(ds, out);
}

Dataset filter_no_relevant(Dataset ds) {
  std::erase_if(ds.queries, [](const RankedQuery& q) { return !q.has_relevant(); });
  return ds;
}

Dataset truncate_lists(Dataset ds, int max_docs) {
  if (max_docs < 1) throw ConfigError("truncate_lists: max_docs must be >= 1");
  for (auto& q : ds.queries) {
    if (q.n_docs() <= max_docs) continue;
    q.labels.resize(max_docs);
    Mat<double> kept(max_docs, q.features.cols);
    std::copy(q.features.data.begin(),
              q.features.data.begin() + kept.data.size(), kept.data.begin());
    q.features = std::move(kept);
  }
  return ds;
}

FeatureStats fit_feature_stats(const Dataset& train) {
  FeatureStats st;
  const int f = train.n_features;
  st.mean.assign(f, 0.0);
  st.std_dev.assign(f, 0.0);
  st.constant.assign(f, 0);
  std::size_t n = train.total_docs();
  if (n == 0) throw DataError("fit_feature_stats: empty dataset");
  for (const auto& q : train.queries)
    for (int d = 0; d < q.n_docs(); ++d)
      for (int c = 0; c < f; ++c) st.mean[c] += q.features(d, c);
  for (int c = 0; c < f; ++c) st.mean[c] /= double(n);
  for (const auto& q : train.queries)
    for (int d = 0; d < q.n_docs(); ++d)
      for (int c = 0; c < f; ++c) {
        const double dv = q.features(d, c) - st.mean[c];
        st.std_dev[c] += dv * dv;
      }
  for (int c = 0; c < f; ++c) {
    st.std_dev[c] = std::sqrt(st.std_dev[c] / double(n));
    st.constant[c] = st.std_dev[c] == 0.0;
  }
  st.fitted = true;
  return st;
}

Dataset apply_normalization(Dataset ds, const FeatureStats& stats) {
  if (!stats.fitted) throw DataError("apply_normalization: statistics not fitted");
  if (int(stats.mean.size()) != ds.n_features)
    throw DimensionError("apply_normalization: stats cover " +
                         std::to_string(stats.mean.size()) + " features, data has " +
                         std::to_string(ds.n_features));
  for (auto& q : ds.queries)
    for (int d = 0; d < q.n_docs(); ++d)
      for (int c = 0; c < ds.n_features; ++c) {
        double& x = q.features(d, c);
        x = stats.constant[c] ? 0.0 : (x - stats.mean[c]) / stats.std_dev[c];
      }
  return ds;
}

void save_feature_stats(const FeatureStats& stats, const std::string& path) {
  if (!stats.fitted) throw DataError("save_feature_stats: statistics not fitted");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write feature stats: " + path);
  out << "ltr.feature_stats.v1\n";
  out << "n_features = " << stats.mean.size() << "\n";
  char buf[64];
  for (std::size_t c = 0; c < stats.mean.size(); ++c) {
    std::snprintf(buf, sizeof buf, "%.17g", stats.mean[c]);
    out << "mean." << c << " = " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", stats.std_dev[c]);
    out << "std." << c << " = " << buf << "\n";
  }
}

FeatureStats load_feature_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature stats: " + path);
  std::string header;
  std::getline(in, header);
  if (header != "ltr.feature_stats.v1")
    throw ParseError("unrecognized feature stats header: " + header, 1);
  FeatureStats st;
  std::string line;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line_no);
    std::string key = line.substr(0, eq);
    while (!key.empty() && key.back() == ' ') key.pop_back();
    const std::string value = line.substr(eq + 1);
    if (key == "n_features") {
      const std::size_t n_features = std::stoul(value);
      st.mean.assign(n_features, 0.0);
      st.std_dev.assign(n_features, 0.0);
      st.constant.assign(n_features, 0);
    } else if (key.rfind("mean.", 0) == 0) {
      st.mean.at(std::stoul(key.substr(5))) = std::stod(value);
    } else if (key.rfind("std.", 0) == 0) {
      const auto idx = std::stoul(key.substr(4));
      st.std_dev.at(idx) = std::stod(value);
      st.constant.at(idx) = st.std_dev[idx] == 0.0;
    } else {
      throw ParseError("unknown feature stats key: " + key, line_no);
    }
  }
  st.fitted = true;
  return st;
}

ListBatch batch_from_queries(const std::vector<const RankedQuery*>& queries, int n_features) {
  ListBatch b;
  b.n_queries = int(queries.size());
  b.n_features = n_features;
  for (const auto* q : queries) b.max_list = std::max(b.max_list, q->n_docs());
  const std::size_t slots = std::size_t(b.n_queries) * b.max_list;
  b.features.assign(slots * n_features, 0.0);
  b.labels.assign(slots, 0);
  b.mask.assign(slots, 0);
  for (int qi = 0; qi < b.n_queries; ++qi) {
    const RankedQuery& q = *queries[qi];
    b.qids.push_back(q.qid);
    for (int d = 0; d < q.n_docs(); ++d) {
      const std::size_t slot = std::size_t(qi) * b.max_list + d;
      b.labels[slot] = q.labels[d];
      b.mask[slot] = 1;
      std::copy(q.features.row(d), q.features.row(d) + n_features,
                b.features.begin() + slot * n_features);
    }
  }
  return b;
}

std::vector<ListBatch> make_batches(const Dataset& ds, int batch_size,
                                    std::uint64_t seed, bool shuffle) {
  if (batch_size < 1) throw ConfigError("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(ds.queries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (shuffle) RngStream(seed).shuffle(order);

  std::vector<ListBatch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t stop = std::min(order.size(), start + std::size_t(batch_size));
    std::vector<const RankedQuery*> group;
    group.reserve(stop - start);
    for (std::size_t i = start; i < stop; ++i) group.push_back(&ds.queries[order[i]]);
    batches.push_back(batch_from_queries(group, ds.n_features));
  }
  return batches;
}

}  // namespace ltr
