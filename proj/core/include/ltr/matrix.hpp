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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <type_traits>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include "ltr/error.hpp"
#include "ltr/rng.hpp"

namespace ltr {

// Dense row-major matrix. Real is float (training) or double (gradient
// checks); the whole numeric stack is templated on it.
template <class Real>
struct Mat {
  static_assert(std::is_floating_point_v<Real>);

  int rows = 0;
  int cols = 0;
  std::vector<Real> data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(std::size_t(r) * std::size_t(c), Real(0)) {}
  Mat(int r, int c, std::initializer_list<Real> values) : Mat(r, c) {
    std::size_t i = 0;
    for (Real v : values) {
      if (i >= data.size()) break;
      data[i++] = v;
    }
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  Real& operator()(int r, int c) { return data[std::size_t(r) * cols + c]; }
  Real operator()(int r, int c) const { return data[std::size_t(r) * cols + c]; }

  Real* row(int r) { return data.data() + std::size_t(r) * cols; }
  const Real* row(int r) const { return data.data() + std::size_t(r) * cols; }

  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }

  static Mat zeros(int r, int c) { return Mat(r, c); }

  static Mat full(int r, int c, Real v) {
    Mat m(r, c);
    for (auto& x : m.data) x = v;
    return m;
  }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = Real(1);
    return m;
  }

  static Mat uniform(int r, int c, RngStream rng, Real lo, Real hi) {
    Mat m(r, c);
    for (auto& x : m.data) x = lo + Real(rng.next_uniform()) * (hi - lo);
    return m;
  }

  template <class Other>
  Mat<Other> cast() const {
    Mat<Other> out(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = Other(data[i]);
    return out;
  }
};

template <class Real>
bool all_finite(const Mat<Real>& m) {
  for (Real v : m.data)
    if (!std::isfinite(double(v))) return false;
  return true;
}

// C = op(A) * op(B), optionally accumulating into C. Row partitions are
// independent, so the per-element accumulation order is fixed and results
// are deterministic under any thread count.
template <class Real>
void gemm(bool trans_a, bool trans_b, const Mat<Real>& a, const Mat<Real>& b,
          Mat<Real>& c, bool accumulate = false) {
  const int m = trans_a ? a.cols : a.rows;
  const int k = trans_a ? a.rows : a.cols;
  const int kb = trans_b ? b.cols : b.rows;
  const int n = trans_b ? b.rows : b.cols;
  if (k != kb)
    throw DimensionError("gemm: inner dimensions differ: " + a.shape_str() +
                         (trans_a ? "^T" : "") + " * " + b.shape_str() +
                         (trans_b ? "^T" : ""));
  if (c.rows != m || c.cols != n) {
    if (accumulate)
      throw DimensionError("gemm: output shape " + c.shape_str() +
                           " does not match " + std::to_string(m) + "x" +
                           std::to_string(n));
    c = Mat<Real>(m, n);
  } else if (!accumulate) {
    std::fill(c.data.begin(), c.data.end(), Real(0));
  }

  const Real* pa = a.data.data();
  const Real* pb = b.data.data();
  Real* pc = c.data.data();
  const int lda = a.cols, ldb = b.cols;

  auto run_rows = [&](int i0, int i1) {
    for (int i = i0; i < i1; ++i) {
      Real* crow = pc + std::size_t(i) * n;
      if (!trans_a && !trans_b) {
        for (int p = 0; p < k; ++p) {
          const Real aip = pa[std::size_t(i) * lda + p];
          if (aip == Real(0)) continue;
          const Real* brow = pb + std::size_t(p) * ldb;
          for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
      } else if (!trans_a && trans_b) {
        const Real* arow = pa + std::size_t(i) * lda;
        for (int j = 0; j < n; ++j) {
          const Real* brow = pb + std::size_t(j) * ldb;
          Real acc = 0;
          for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
          crow[j] += acc;
        }
      } else if (trans_a && !trans_b) {
        for (int p = 0; p < k; ++p) {
          const Real aip = pa[std::size_t(p) * lda + i];
          if (aip == Real(0)) continue;
          const Real* brow = pb + std::size_t(p) * ldb;
          for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
      } else {
        for (int j = 0; j < n; ++j) {
          Real acc = 0;
          for (int p = 0; p < k; ++p)
            acc += pa[std::size_t(p) * lda + i] * pb[std::size_t(j) * ldb + p];
          crow[j] += acc;
        }
      }
    }
  };

#if defined(_OPENMP)
  // Small products never touch the OpenMP runtime; its per-call setup costs
  // more than the work below a few MFLOP.
  if (std::size_t(m) * std::size_t(n) * std::size_t(k) > 8000000) {
#pragma omp parallel
    {
      const int nt = omp_get_num_threads();
      const int tid = omp_get_thread_num();
      const int chunk = (m + nt - 1) / nt;
      const int i0 = tid * chunk;
      const int i1 = std::min(m, i0 + chunk);
      if (i0 < i1) run_rows(i0, i1);
    }
    return;
  }
#endif
  run_rows(0, m);
}

template <class Real>
Mat<Real> matmul_plain(const Mat<Real>& a, const Mat<Real>& b) {
  if (a.cols != b.rows)
    throw DimensionError("matmul: " + a.shape_str() + " * " + b.shape_str());
  Mat<Real> c(a.rows, b.cols);
  gemm(false, false, a, b, c);
  return c;
}

}  // namespace ltr
