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

#include <string>
#include <unordered_map>
#include <vector>

#include "ltr/error.hpp"
#include "ltr/matrix.hpp"

namespace ltr {

// Named trainable parameters plus per-parameter gradient accumulators.
// Iteration follows insertion order so updates, checkpoints and
// finite-difference sweeps are deterministic.
template <class Real>
class ParamStore {
 public:
  void add(const std::string& name, Mat<Real> value) {
    if (index_.count(name)) throw ContractError("duplicate parameter: " + name);
    index_[name] = names_.size();
    names_.push_back(name);
    grads_.emplace_back(value.rows, value.cols);
    values_.push_back(std::move(value));
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Mat<Real>& value(const std::string& name) { return values_[at(name)]; }
  const Mat<Real>& value(const std::string& name) const { return values_[at(name)]; }
  Mat<Real>& grad(const std::string& name) { return grads_[at(name)]; }
  const Mat<Real>& grad(const std::string& name) const { return grads_[at(name)]; }

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

  Mat<Real>& value_at(std::size_t i) { return values_[i]; }
  const Mat<Real>& value_at(std::size_t i) const { return values_[i]; }
  Mat<Real>& grad_at(std::size_t i) { return grads_[i]; }
  const Mat<Real>& grad_at(std::size_t i) const { return grads_[i]; }

  void zero_grads() {
    for (auto& g : grads_) std::fill(g.data.begin(), g.data.end(), Real(0));
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  template <class Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (std::size_t i = 0; i < names_.size(); ++i)
      out.add(names_[i], values_[i].template cast<Other>());
    return out;
  }

 private:
  std::size_t at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
  }

  std::vector<std::string> names_;
  std::vector<Mat<Real>> values_;
  std::vector<Mat<Real>> grads_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Running batch-norm statistics. Not trainable; saved in checkpoints.
template <class Real>
struct BatchNormState {
  Mat<Real> mean;  // 1 x features
  Mat<Real> var;   // 1 x features
  bool initialized = false;
};

// Named batch-norm states, insertion-ordered like ParamStore.
template <class Real>
class StatStore {
 public:
  BatchNormState<Real>& get_or_add(const std::string& name, int features) {
    auto it = index_.find(name);
    if (it != index_.end()) return states_[it->second];
    index_[name] = names_.size();
    names_.push_back(name);
    BatchNormState<Real> s;
    s.mean = Mat<Real>(1, features);
    s.var = Mat<Real>::full(1, features, Real(1));
    states_.push_back(std::move(s));
    return states_.back();
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  BatchNormState<Real>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown batch-norm state: " + name);
    return states_[it->second];
  }
  const BatchNormState<Real>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown batch-norm state: " + name);
    return states_[it->second];
  }

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  BatchNormState<Real>& at(std::size_t i) { return states_[i]; }
  const BatchNormState<Real>& at(std::size_t i) const { return states_[i]; }

  template <class Other>
  StatStore<Other> cast() const {
    StatStore<Other> out;
    for (std::size_t i = 0; i < names_.size(); ++i) {
      auto& s = out.get_or_add(names_[i], states_[i].mean.cols);
      s.mean = states_[i].mean.template cast<Other>();
      s.var = states_[i].var.template cast<Other>();
      s.initialized = states_[i].initialized;
    }
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<BatchNormState<Real>> states_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace ltr
