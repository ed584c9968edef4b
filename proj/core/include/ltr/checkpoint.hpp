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
#include <cstring>
#include <string>
#include <vector>

#include "ltr/dataset.hpp"
#include "ltr/error.hpp"
#include "ltr/matrix.hpp"
#include "ltr/param_store.hpp"

namespace ltr {

// One named tensor: raw little-endian payload tagged with its dtype.
struct TensorBlob {
  std::string name;
  char dtype = 'f';  // 'f' float32, 'd' float64
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<unsigned char> bytes;

  template <class Real>
  static TensorBlob from(const std::string& name, const Mat<Real>& m) {
    TensorBlob t;
    t.name = name;
    t.dtype = sizeof(Real) == 4 ? 'f' : 'd';
    t.rows = std::uint32_t(m.rows);
    t.cols = std::uint32_t(m.cols);
    t.bytes.resize(m.data.size() * sizeof(Real));
    std::memcpy(t.bytes.data(), m.data.data(), t.bytes.size());
    return t;
  }

  template <class Real>
  Mat<Real> to_mat() const {
    const char want = sizeof(Real) == 4 ? 'f' : 'd';
    if (dtype != want)
      throw DataError("tensor " + name + " stored as " + std::string(1, dtype) +
                      ", requested " + std::string(1, want));
    auto m = Mat<Real>(int(rows), int(cols));
    if (bytes.size() != m.data.size() * sizeof(Real))
      throw DataError("tensor " + name + " payload size mismatch");
    std::memcpy(m.data.data(), bytes.data(), bytes.size());
    return m;
  }
};

// Single-file container: magic, version, precision tag, training step, RNG
// state, one embedded key/value text block (scorer spec and run metadata),
// then a named tensor table.
struct CheckpointData {
  std::uint32_t version = 1;
  char precision = 'f';
  std::uint64_t step = 0;
  std::uint64_t rng_state = 0;
  std::string spec_text;
  std::vector<TensorBlob> tensors;

  const TensorBlob* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

void save_checkpoint_file(const CheckpointData& ckpt, const std::string& path);
CheckpointData load_checkpoint_file(const std::string& path);

// ---- packing helpers ----

template <class Real>
void pack_model(const ParamStore<Real>& params, const StatStore<Real>& stats,
                CheckpointData& ckpt) {
  ckpt.precision = sizeof(Real) == 4 ? 'f' : 'd';
  for (const auto& name : params.names())
    ckpt.tensors.push_back(TensorBlob::from("param/" + name, params.value(name)));
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto& name = stats.names()[i];
    const auto& st = stats.at(i);
    ckpt.tensors.push_back(TensorBlob::from("bn/" + name + "/mean", st.mean));
    ckpt.tensors.push_back(TensorBlob::from("bn/" + name + "/var", st.var));
    Mat<Real> flag(1, 1);
    flag.data[0] = st.initialized ? Real(1) : Real(0);
    ckpt.tensors.push_back(TensorBlob::from("bn/" + name + "/init", flag));
  }
}

// Fills existing stores (shapes come from the scorer spec) from the blob
// table; every expected tensor must be present.
template <class Real>
void unpack_model(const CheckpointData& ckpt, ParamStore<Real>& params,
                  StatStore<Real>& stats) {
  for (const auto& name : params.names()) {
    const TensorBlob* t = ckpt.find("param/" + name);
    if (!t) throw DataError("checkpoint is missing parameter: " + name);
    Mat<Real> m = t->template to_mat<Real>();
    Mat<Real>& dst = params.value(name);
    if (m.rows != dst.rows || m.cols != dst.cols)
      throw DimensionError("checkpoint parameter " + name + " has shape " +
                           m.shape_str() + ", expected " + dst.shape_str());
    dst = std::move(m);
  }
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto& name = stats.names()[i];
    auto& st = stats.at(i);
    const TensorBlob* mean = ckpt.find("bn/" + name + "/mean");
    const TensorBlob* var = ckpt.find("bn/" + name + "/var");
    const TensorBlob* init = ckpt.find("bn/" + name + "/init");
    if (!mean || !var || !init)
      throw DataError("checkpoint is missing batch-norm state: " + name);
    st.mean = mean->template to_mat<Real>();
    st.var = var->template to_mat<Real>();
    st.initialized = init->template to_mat<Real>().data[0] != Real(0);
  }
}

void pack_feature_stats(const FeatureStats& fs, CheckpointData& ckpt);
FeatureStats unpack_feature_stats(const CheckpointData& ckpt);
bool has_feature_stats(const CheckpointData& ckpt);

}  // namespace ltr
