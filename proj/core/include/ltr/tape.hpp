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
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "ltr/error.hpp"
#include "ltr/matrix.hpp"
#include "ltr/param_store.hpp"
#include "ltr/rng.hpp"

namespace ltr {

enum class Mode { train, infer };

using NodeId = int;

// Append-only reverse-mode differentiation record over Mat values.
// Nodes are created in topological order by construction; backward() is a
// single reverse sweep, so every node is visited exactly once.
template <class Real>
class Tape {
 public:
  struct Node {
    Mat<Real> value;
    Mat<Real> grad;  // allocated on first contribution
    bool requires_grad = false;
    std::function<void(Tape&, NodeId)> backward;
  };

  NodeId leaf(Mat<Real> value, bool requires_grad = false) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return NodeId(nodes_.size() - 1);
  }

  const Mat<Real>& value(NodeId id) const { return nodes_[id].value; }
  Mat<Real>& mutable_value(NodeId id) { return nodes_[id].value; }
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }

  // Gradient of the last backward() output w.r.t. node `id`. Zero matrix if
  // nothing flowed into it.
  const Mat<Real>& grad(NodeId id) {
    ensure_grad(id);
    return nodes_[id].grad;
  }

  std::size_t size() const { return nodes_.size(); }

  // ---- arithmetic ----

  NodeId add(NodeId a, NodeId b) {
    check_same_shape("add", a, b);
    Mat<Real> out = nodes_[a].value;
    const auto& vb = nodes_[b].value;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb.data[i];
    return make(std::move(out), {a, b}, [a, b](Tape& t, NodeId self) {
      const auto& g = t.nodes_[self].grad;
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  }

  NodeId sub(NodeId a, NodeId b) {
    check_same_shape("sub", a, b);
    Mat<Real> out = nodes_[a].value;
    const auto& vb = nodes_[b].value;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= vb.data[i];
    return make(std::move(out), {a, b}, [a, b](Tape& t, NodeId self) {
      const auto& g = t.nodes_[self].grad;
      t.accumulate(a, g);
      if (t.nodes_[b].requires_grad) {
        t.ensure_grad(b);
        auto& gb = t.nodes_[b].grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] -= g.data[i];
      }
    });
  }

  NodeId mul(NodeId a, NodeId b) {
    check_same_shape("mul", a, b);
    Mat<Real> out = nodes_[a].value;
    const auto& vb = nodes_[b].value;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= vb.data[i];
    return make(std::move(out), {a, b}, [a, b](Tape& t, NodeId self) {
      const auto& g = t.nodes_[self].grad;
      if (t.nodes_[a].requires_grad) {
        t.ensure_grad(a);
        auto& ga = t.nodes_[a].grad;
        const auto& vb = t.nodes_[b].value;
        for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * vb.data[i];
      }
      if (t.nodes_[b].requires_grad) {
        t.ensure_grad(b);
        auto& gb = t.nodes_[b].grad;
        const auto& va = t.nodes_[a].value;
        for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i] * va.data[i];
      }
    });
  }

  NodeId scale(NodeId a, Real c) {
    Mat<Real> out = nodes_[a].value;
    for (auto& x : out.data) x *= c;
    return make(std::move(out), {a}, [a, c](Tape& t, NodeId self) {
      if (!t.nodes_[a].requires_grad) return;
      const auto& g = t.nodes_[self].grad;
      t.ensure_grad(a);
      auto& ga = t.nodes_[a].grad;
      for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += c * g.data[i];
    });
  }

  // a + row vector broadcast over rows (bias addition).
  NodeId add_rowvec(NodeId a, NodeId bias) {
    const auto& va = nodes_[a].value;
    const auto& vb = nodes_[bias].value;
    if (vb.rows != 1 || vb.cols != va.cols)
      throw DimensionError("add_rowvec: " + va.shape_str() + " + " + vb.shape_str());
    Mat<Real> out = va;
    for (int r = 0; r < out.rows; ++r) {
      Real* orow = out.row(r);
      for (int c = 0; c < out.cols; ++c) orow[c] += vb.data[c];
    }
    return make(std::move(out), {a, bias}, [a, bias](Tape& t, NodeId self) {
      const auto& g = t.nodes_[self].grad;
      t.accumulate(a, g);
      if (t.nodes_[bias].requires_grad) {
        t.ensure_grad(bias);
        auto& gb = t.nodes_[bias].grad;
        for (int r = 0; r < g.rows; ++r) {
          const Real* grow = g.row(r);
          for (int c = 0; c < g.cols; ++c) gb.data[c] += grow[c];
        }
      }
    });
  }

  NodeId matmul(NodeId a, NodeId b) {
    const auto& va = nodes_[a].value;
    const auto& vb = nodes_[b].value;
    if (va.cols != vb.rows)
      throw DimensionError("matmul: " + va.shape_str() + " * " + vb.shape_str());
    Mat<Real> out(va.rows, vb.cols);
    gemm(false, false, va, vb, out);
    return make(std::move(out), {a, b}, [a, b](Tape& t, NodeId self) {
      const auto& g = t.nodes_[self].grad;
      if (t.nodes_[a].requires_grad) {
        t.ensure_grad(a);
        gemm(false, true, g, t.nodes_[b].value, t.nodes_[a].grad, true);
      }
      if (t.nodes_[b].requires_grad) {
        t.ensure_grad(b);
        gemm(true, false, t.nodes_[a].value, g, t.nodes_[b].grad, true);
      }
    });
  }

  NodeId transpose(NodeId a) {
    const auto& va = nodes_[a].value;
    Mat<Real> out(va.cols, va.rows);
    for (int r = 0; r < va.rows; ++r)
      for (int c = 0; c < va.cols; ++c) out(c, r) = va(r, c);
    return make(std::move(out), {a}, [a](Tape& t, NodeId self) {
      if (!t.nodes_[a].requires_grad) return;
      const auto& g = t.nodes_[self].grad;
      t.ensure_grad(a);
      auto& ga = t.nodes_[a].grad;
      for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c) ga(c, r) += g(r, c);
    });
  }

  // ---- nonlinearities ----

  NodeId relu(NodeId a) {
    Mat<Real> out = nodes_[a].value;
    for (auto& x : out.data) x = x > Real(0) ? x : Real(0);
    return make(std::move(out), {a}, [a](Tape& t, NodeId self) {
      if (!t.nodes_[a].requires_grad) return;
      const auto& g = t.nodes_[self].grad;
      const auto& va = t.nodes_[a].value;
      t.ensure_grad(a);
      auto& ga = t.nodes_[a].grad;
      for (std::size_t i = 0; i < g.data.size(); ++i)
        if (va.data[i] > Real(0)) ga.data[i] += g.data[i];
    });
  }

  // log2(1 + x); defined for x > -1.
  NodeId log2p1(NodeId a) {
    Mat<Real> out = nodes_[a].value;
    for (auto& x : out.data) x = Real(std::log2(1.0 + double(x)));
    return make(std::move(out), {a}, [a](Tape& t, NodeId self) {
      if (!t.nodes_[a].requires_grad) return;
      const auto& g = t.nodes_[self].grad;
      const auto& va = t.nodes_[a].value;
      t.ensure_grad(a);
      auto& ga = t.nodes_[a].grad;
      const Real ln2 = Real(0.6931471805599453);
      for (std::size_t i = 0; i < g.data.size(); ++i)
        ga.data[i] += g.data[i] / ((Real(1) + va.data[i]) * ln2);
    });
  }

  NodeId reciprocal(NodeId a) {
    Mat<Real> out = nodes_[a].value;
    for (auto& x : out.data) x = Real(1) / x;
    return make(std::move(out), {a}, [a](Tape& t, NodeId self) {
      if (!t.nodes_[a].requires_grad) return;
      const auto& g = t.nodes_[self].grad;
      const auto& y = t.nodes_[self].value;
      t.ensure_grad(a);
      auto& ga = t.nodes_[a].grad;
      for (std::size_t i = 0; i < g.data.size(); ++i)
        ga.data[i] -= g.data[i] * y.data[i] * y.data[i];
    });
  }

  // ---- structure ops ----

  NodeId concat_cols(NodeId a, NodeId b) {
    const auto& va = nodes_[a].value;
    const auto& vb = nodes_[b].value;
    if (va.rows != vb.rows)
      throw DimensionError("concat_cols: " + va.shape_str() + " | " + vb.shape_str());
    Mat<Real> out(va.rows, va.cols + vb.cols);
    for (int r = 0; r < out.rows; ++r) {
      std::copy(va.row(r), va.row(r) + va.cols, out.row(r));
      std::copy(vb.row(r), vb.row(r) + vb.cols, out.row(r) + va.cols);
    }
    const int ca = va.cols;
    return make(std::move(out), {a, b}, [a, b, ca](Tape& t, NodeId self) {
      const auto& g = t.nodes_[self].grad;
      if (t.nodes_[a].requires_grad) {
        t.ensure_grad(a);
        auto& ga = t.nodes_[a].grad;
        for (int r = 0; r < g.rows; ++r)
          for (int c = 0; c < ca; ++c) ga(r, c) += g(r, c);
      }
      if (t.nodes_[b].requires_grad) {
        t.ensure_grad(b);
        auto& gb = t.nodes_[b].grad;
        for (int r = 0; r < g.rows; ++r)
          for (int c = 0; c < gb.cols; ++c) gb(r, c) += g(r, ca + c);
      }
    });
  }

  NodeId concat_rows(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: empty input");
    int cols = nodes_[parts[0]].value.cols;
    int rows = 0;
    for (NodeId p : parts) {
      const auto& v = nodes_[p].value;
      if (v.cols != cols)
        throw DimensionError("concat_rows: column mismatch " + v.shape_str());
      rows += v.rows;
    }
    Mat<Real> out(rows, cols);
    int r0 = 0;
    for (NodeId p : parts) {
      const auto& v = nodes_[p].value;
      std::copy(v.data.begin(), v.data.end(), out.row(r0));
      r0 += v.rows;
    }
    std::vector<NodeId> deps = parts;
    return make(std::move(out), deps, [parts](Tape& t, NodeId self) {
      const auto& g = t.nodes_[self].grad;
      int r0 = 0;
      for (NodeId p : parts) {
        const int pr = t.nodes_[p].value.rows;
        if (t.nodes_[p].requires_grad) {
          t.ensure_grad(p);
          auto& gp = t.nodes_[p].grad;
          for (int r = 0; r < pr; ++r) {
            const Real* grow = g.row(r0 + r);
            Real* prow = gp.row(r);
            for (int c = 0; c < g.cols; ++c) prow[c] += grow[c];
          }
        }
        r0 += pr;
      }
    });
  }

  // Rows [r0, r1) of a.
  NodeId slice_rows(NodeId a, int r0, int r1) {
    const auto& va = nodes_[a].value;
    if (r0 < 0 || r1 > va.rows || r0 >= r1)
      throw DimensionError("slice_rows: [" + std::to_string(r0) + "," +
                           std::to_string(r1) + ") of " + va.shape_str());
    Mat<Real> out(r1 - r0, va.cols);
    std::copy(va.row(r0), va.row(r0) + out.size(), out.data.begin());
    return make(std::move(out), {a}, [a, r0](Tape& t, NodeId self) {
      if (!t.nodes_[a].requires_grad) return;
      const auto& g = t.nodes_[self].grad;
      t.ensure_grad(a);
      auto& ga = t.nodes_[a].grad;
      for (int r = 0; r < g.rows; ++r) {
        const Real* grow = g.row(r);
        Real* arow = ga.row(r0 + r);
        for (int c = 0; c < g.cols; ++c) arow[c] += grow[c];
      }
    });
  }

  // Row r of a scaled by constant factors[r] (e.g. validity masking).
  NodeId scale_rows(NodeId a, std::vector<Real> factors) {
    const auto& va = nodes_[a].value;
    if (int(factors.size()) != va.rows)
      throw DimensionError("scale_rows: " + std::to_string(factors.size()) +
                           " factors for " + va.shape_str());
    Mat<Real> out = va;
    for (int r = 0; r < out.rows; ++r) {
      Real* orow = out.row(r);
      for (int c = 0; c < out.cols; ++c) orow[c] *= factors[r];
    }
    return make(std::move(out), {a},
                [a, factors = std::move(factors)](Tape& t, NodeId self) {
                  if (!t.nodes_[a].requires_grad) return;
                  const auto& g = t.nodes_[self].grad;
                  t.ensure_grad(a);
                  auto& ga = t.nodes_[a].grad;
                  for (int r = 0; r < g.rows; ++r) {
                    const Real* grow = g.row(r);
                    Real* arow = ga.row(r);
                    for (int c = 0; c < g.cols; ++c) arow[c] += grow[c] * factors[r];
                  }
                });
  }

  // ---- reductions ----

  // Scalar node sum(w .* a) with constant weights (flattened, same size).
  NodeId weighted_sum(NodeId a, std::vector<Real> w) {
    const auto& va = nodes_[a].value;
    if (w.size() != va.data.size())
      throw DimensionError("weighted_sum: " + std::to_string(w.size()) +
                           " weights for " + va.shape_str());
    Real acc = 0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * va.data[i];
    Mat<Real> out(1, 1);
    out.data[0] = acc;
    return make(std::move(out), {a}, [a, w = std::move(w)](Tape& t, NodeId self) {
      if (!t.nodes_[a].requires_grad) return;
      const Real g = t.nodes_[self].grad.data[0];
      t.ensure_grad(a);
      auto& ga = t.nodes_[a].grad;
      for (std::size_t i = 0; i < w.size(); ++i) ga.data[i] += g * w[i];
    });
  }

  NodeId sum(NodeId a) {
    return weighted_sum(a, std::vector<Real>(nodes_[a].value.data.size(), Real(1)));
  }

  // Sum of scalar (1x1) nodes.
  NodeId sum_scalars(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ContractError("sum_scalars: empty input");
    Real acc = 0;
    for (NodeId p : parts) {
      const auto& v = nodes_[p].value;
      if (v.rows != 1 || v.cols != 1)
        throw ContractError("sum_scalars: non-scalar input " + v.shape_str());
      acc += v.data[0];
    }
    Mat<Real> out(1, 1);
    out.data[0] = acc;
    return make(std::move(out), parts, [parts](Tape& t, NodeId self) {
      const Real g = t.nodes_[self].grad.data[0];
      for (NodeId p : parts) {
        if (!t.nodes_[p].requires_grad) continue;
        t.ensure_grad(p);
        t.nodes_[p].grad.data[0] += g;
      }
    });
  }

  // ---- normalization ----

  // Row-wise softmax over valid columns. Masked columns get exactly 0.
  // Stabilized by row-max subtraction over valid entries.
  NodeId softmax_rows(NodeId a, const std::vector<std::uint8_t>& col_valid) {
    const auto& va = nodes_[a].value;
    check_col_mask(va, col_valid);
    Mat<Real> out(va.rows, va.cols);
    for (int r = 0; r < va.rows; ++r) {
      const Real* x = va.row(r);
      Real* y = out.row(r);
      Real mx = row_max_valid(x, col_valid, r);
      Real s = 0;
      for (int c = 0; c < va.cols; ++c) {
        y[c] = col_valid[c] ? Real(std::exp(double(x[c] - mx))) : Real(0);
        s += y[c];
      }
      for (int c = 0; c < va.cols; ++c) y[c] /= s;
    }
    return make(std::move(out), {a}, [a, col_valid](Tape& t, NodeId self) {
      if (!t.nodes_[a].requires_grad) return;
      const auto& g = t.nodes_[self].grad;
      const auto& y = t.nodes_[self].value;
      t.ensure_grad(a);
      auto& ga = t.nodes_[a].grad;
      for (int r = 0; r < g.rows; ++r) {
        const Real* grow = g.row(r);
        const Real* yrow = y.row(r);
        Real dot = 0;
        for (int c = 0; c < g.cols; ++c)
          if (col_valid[c]) dot += grow[c] * yrow[c];
        Real* arow = ga.row(r);
        for (int c = 0; c < g.cols; ++c)
          if (col_valid[c]) arow[c] += yrow[c] * (grow[c] - dot);
      }
    });
  }

  // Row-wise log-softmax over valid columns; masked columns get 0 (callers
  // must not read them).
  NodeId log_softmax_rows(NodeId a, const std::vector<std::uint8_t>& col_valid) {
    const auto& va = nodes_[a].value;
    check_col_mask(va, col_valid);
    Mat<Real> out(va.rows, va.cols);
    for (int r = 0; r < va.rows; ++r) {
      const Real* x = va.row(r);
      Real* y = out.row(r);
      Real mx = row_max_valid(x, col_valid, r);
      double s = 0;
      for (int c = 0; c < va.cols; ++c)
        if (col_valid[c]) s += std::exp(double(x[c] - mx));
      const Real lse = mx + Real(std::log(s));
      for (int c = 0; c < va.cols; ++c) y[c] = col_valid[c] ? x[c] - lse : Real(0);
    }
    return make(std::move(out), {a}, [a, col_valid](Tape& t, NodeId self) {
      if (!t.nodes_[a].requires_grad) return;
      const auto& g = t.nodes_[self].grad;
      const auto& y = t.nodes_[self].value;
      t.ensure_grad(a);
      auto& ga = t.nodes_[a].grad;
      for (int r = 0; r < g.rows; ++r) {
        const Real* grow = g.row(r);
        const Real* yrow = y.row(r);
        Real gsum = 0;
        for (int c = 0; c < g.cols; ++c)
          if (col_valid[c]) gsum += grow[c];
        Real* arow = ga.row(r);
        for (int c = 0; c < g.cols; ++c)
          if (col_valid[c])
            arow[c] += grow[c] - Real(std::exp(double(yrow[c]))) * gsum;
      }
    });
  }

  // Per-row standardization (population variance, eps-stabilized), then
  // elementwise gain/bias. gain/bias are 1 x cols nodes.
  NodeId layer_norm_rows(NodeId a, NodeId gain, NodeId bias, Real eps) {
    const auto& va = nodes_[a].value;
    const auto& vg = nodes_[gain].value;
    const auto& vb = nodes_[bias].value;
    if (vg.rows != 1 || vg.cols != va.cols || vb.rows != 1 || vb.cols != va.cols)
      throw DimensionError("layer_norm_rows: gain " + vg.shape_str() + ", bias " +
                           vb.shape_str() + " for " + va.shape_str());
    Mat<Real> xhat(va.rows, va.cols);
    std::vector<Real> inv_std(va.rows);
    Mat<Real> out(va.rows, va.cols);
    for (int r = 0; r < va.rows; ++r) {
      const Real* x = va.row(r);
      double mu = 0;
      for (int c = 0; c < va.cols; ++c) mu += x[c];
      mu /= va.cols;
      double var = 0;
      for (int c = 0; c < va.cols; ++c) {
        double d = x[c] - mu;
        var += d * d;
      }
      var /= va.cols;
      const Real inv = Real(1.0 / std::sqrt(var + double(eps)));
      inv_std[r] = inv;
      Real* xh = xhat.row(r);
      Real* y = out.row(r);
      for (int c = 0; c < va.cols; ++c) {
        xh[c] = (x[c] - Real(mu)) * inv;
        y[c] = xh[c] * vg.data[c] + vb.data[c];
      }
    }
    return make(std::move(out), {a, gain, bias},
                [a, gain, bias, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)](Tape& t, NodeId self) {
                  const auto& g = t.nodes_[self].grad;
                  const auto& vg = t.nodes_[gain].value;
                  const int cols = g.cols;
                  if (t.nodes_[gain].requires_grad) {
                    t.ensure_grad(gain);
                    auto& gg = t.nodes_[gain].grad;
                    for (int r = 0; r < g.rows; ++r) {
                      const Real* grow = g.row(r);
                      const Real* xh = xhat.row(r);
                      for (int c = 0; c < cols; ++c) gg.data[c] += grow[c] * xh[c];
                    }
                  }
                  if (t.nodes_[bias].requires_grad) {
                    t.ensure_grad(bias);
                    auto& gb = t.nodes_[bias].grad;
                    for (int r = 0; r < g.rows; ++r) {
                      const Real* grow = g.row(r);
                      for (int c = 0; c < cols; ++c) gb.data[c] += grow[c];
                    }
                  }
                  if (t.nodes_[a].requires_grad) {
                    t.ensure_grad(a);
                    auto& ga = t.nodes_[a].grad;
                    for (int r = 0; r < g.rows; ++r) {
                      const Real* grow = g.row(r);
                      const Real* xh = xhat.row(r);
                      Real m1 = 0, m2 = 0;
                      for (int c = 0; c < cols; ++c) {
                        const Real gy = grow[c] * vg.data[c];
                        m1 += gy;
                        m2 += gy * xh[c];
                      }
                      m1 /= Real(cols);
                      m2 /= Real(cols);
                      Real* arow = ga.row(r);
                      for (int c = 0; c < cols; ++c) {
                        const Real gy = grow[c] * vg.data[c];
                        arow[c] += inv_std[r] * (gy - m1 - xh[c] * m2);
                      }
                    }
                  }
                });
  }

  // Per-column batch normalization over valid rows. Train mode uses batch
  // statistics (population variance) and folds them into `state` with
  // `momentum`; infer mode applies the running statistics. Masked rows are
  // zeroed in the output and excluded from statistics and gradients.
  NodeId batch_norm(NodeId a, NodeId gamma, NodeId beta, BatchNormState<Real>& state,
                    Mode mode, Real momentum, Real eps,
                    const std::vector<std::uint8_t>* row_valid = nullptr) {
    const auto& va = nodes_[a].value;
    const auto& vg = nodes_[gamma].value;
    const auto& vb = nodes_[beta].value;
    if (vg.rows != 1 || vg.cols != va.cols || vb.rows != 1 || vb.cols != va.cols)
      throw DimensionError("batch_norm: gamma " + vg.shape_str() + ", beta " +
                           vb.shape_str() + " for " + va.shape_str());
    if (row_valid && int(row_valid->size()) != va.rows)
      throw DimensionError("batch_norm: row mask size " +
                           std::to_string(row_valid->size()) + " for " +
                           va.shape_str());
    if (state.mean.cols != va.cols)
      throw DimensionError("batch_norm: state width " + state.mean.shape_str() +
                           " for " + va.shape_str());

    std::vector<std::uint8_t> valid =
        row_valid ? *row_valid : std::vector<std::uint8_t>(va.rows, 1);
    int nvalid = 0;
    for (auto f : valid) nvalid += f != 0;

    Mat<Real> mean(1, va.cols), var(1, va.cols);
    if (mode == Mode::train) {
      if (nvalid == 0) throw DegenerateRowError("batch_norm: no valid rows");
      for (int c = 0; c < va.cols; ++c) {
        double mu = 0;
        for (int r = 0; r < va.rows; ++r)
          if (valid[r]) mu += va(r, c);
        mu /= nvalid;
        double v = 0;
        for (int r = 0; r < va.rows; ++r)
          if (valid[r]) {
            double d = va(r, c) - mu;
            v += d * d;
          }
        v /= nvalid;
        mean.data[c] = Real(mu);
        var.data[c] = Real(v);
      }
      for (int c = 0; c < va.cols; ++c) {
        state.mean.data[c] = (Real(1) - momentum) * state.mean.data[c] + momentum * mean.data[c];
        state.var.data[c] = (Real(1) - momentum) * state.var.data[c] + momentum * var.data[c];
      }
      state.initialized = true;
    } else {
      if (!state.initialized)
        throw UninitializedStatsError("batch_norm: inference requested before statistics were recorded");
      mean = state.mean;
      var = state.var;
    }

    std::vector<Real> inv_std(va.cols);
    for (int c = 0; c < va.cols; ++c)
      inv_std[c] = Real(1.0 / std::sqrt(double(var.data[c]) + double(eps)));

    Mat<Real> xhat(va.rows, va.cols);
    Mat<Real> out(va.rows, va.cols);
    for (int r = 0; r < va.rows; ++r) {
      if (!valid[r]) continue;  // masked rows stay zero
      const Real* x = va.row(r);
      Real* xh = xhat.row(r);
      Real* y = out.row(r);
      for (int c = 0; c < va.cols; ++c) {
        xh[c] = (x[c] - mean.data[c]) * inv_std[c];
        y[c] = xh[c] * vg.data[c] + vb.data[c];
      }
    }

    const bool train = mode == Mode::train;
    return make(std::move(out), {a, gamma, beta},
                [a, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std),
                 valid = std::move(valid), nvalid, train](Tape& t, NodeId self) {
                  const auto& g = t.nodes_[self].grad;
                  const auto& vg = t.nodes_[gamma].value;
                  const int cols = g.cols;
                  if (t.nodes_[gamma].requires_grad) {
                    t.ensure_grad(gamma);
                    auto& gg = t.nodes_[gamma].grad;
                    for (int r = 0; r < g.rows; ++r) {
                      if (!valid[r]) continue;
                      const Real* grow = g.row(r);
                      const Real* xh = xhat.row(r);
                      for (int c = 0; c < cols; ++c) gg.data[c] += grow[c] * xh[c];
                    }
                  }
                  if (t.nodes_[beta].requires_grad) {
                    t.ensure_grad(beta);
                    auto& gb = t.nodes_[beta].grad;
                    for (int r = 0; r < g.rows; ++r) {
                      if (!valid[r]) continue;
                      const Real* grow = g.row(r);
                      for (int c = 0; c < cols; ++c) gb.data[c] += grow[c];
                    }
                  }
                  if (!t.nodes_[a].requires_grad) return;
                  t.ensure_grad(a);
                  auto& ga = t.nodes_[a].grad;
                  if (!train) {
                    for (int r = 0; r < g.rows; ++r) {
                      if (!valid[r]) continue;
                      const Real* grow = g.row(r);
                      Real* arow = ga.row(r);
                      for (int c = 0; c < cols; ++c)
                        arow[c] += grow[c] * vg.data[c] * inv_std[c];
                    }
                    return;
                  }
                  // Train mode: differentiate through the batch statistics.
                  std::vector<Real> m1(cols, Real(0)), m2(cols, Real(0));
                  for (int r = 0; r < g.rows; ++r) {
                    if (!valid[r]) continue;
                    const Real* grow = g.row(r);
                    const Real* xh = xhat.row(r);
                    for (int c = 0; c < cols; ++c) {
                      const Real gy = grow[c] * vg.data[c];
                      m1[c] += gy;
                      m2[c] += gy * xh[c];
                    }
                  }
                  for (int c = 0; c < cols; ++c) {
                    m1[c] /= Real(nvalid);
                    m2[c] /= Real(nvalid);
                  }
                  for (int r = 0; r < g.rows; ++r) {
                    if (!valid[r]) continue;
                    const Real* grow = g.row(r);
                    const Real* xh = xhat.row(r);
                    Real* arow = ga.row(r);
                    for (int c = 0; c < cols; ++c) {
                      const Real gy = grow[c] * vg.data[c];
                      arow[c] += inv_std[c] * (gy - m1[c] - xh[c] * m2[c]);
                    }
                  }
                });
  }

  // Inverted dropout: train mode zeroes entries with probability `rate` and
  // scales survivors by 1/(1-rate); infer mode and rate 0 are exact
  // identities (the same node is returned).
  NodeId dropout(NodeId a, Real rate, Mode mode, RngStream rng) {
    if (!(rate >= Real(0) && rate < Real(1)))
      throw ConfigError("dropout rate must be in [0,1): " + std::to_string(double(rate)));
    if (mode == Mode::infer || rate == Real(0)) return a;
    const auto& va = nodes_[a].value;
    std::vector<std::uint8_t> keep(va.data.size());
    const Real inv_keep = Real(1) / (Real(1) - rate);
    Mat<Real> out = va;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      keep[i] = rng.next_uniform() >= double(rate);
      out.data[i] = keep[i] ? out.data[i] * inv_keep : Real(0);
    }
    return make(std::move(out), {a},
                [a, keep = std::move(keep), inv_keep](Tape& t, NodeId self) {
                  if (!t.nodes_[a].requires_grad) return;
                  const auto& g = t.nodes_[self].grad;
                  t.ensure_grad(a);
                  auto& ga = t.nodes_[a].grad;
                  for (std::size_t i = 0; i < g.data.size(); ++i)
                    if (keep[i]) ga.data[i] += g.data[i] * inv_keep;
                });
  }

  // Approximate ranks of a 1 x n score row: r[i] = 1 + sum over valid j != i
  // of sigmoid(eta * (y_j - y_i)), the smooth count of documents beating i.
  // Masked positions get rank 1 and no gradient.
  NodeId approx_rank(NodeId scores, const std::vector<std::uint8_t>& valid, Real eta) {
    const auto& vs = nodes_[scores].value;
    if (vs.rows != 1)
      throw ContractError("approx_rank: expected a 1xN score row, got " + vs.shape_str());
    check_col_mask(vs, valid);
    if (!(eta > Real(0))) throw ConfigError("approx_rank: eta must be > 0");
    const int n = vs.cols;
    // sig[i*n+j] = sigmoid(eta * (y_j - y_i)), the smooth [j beats i].
    std::vector<Real> sig(std::size_t(n) * n, Real(0));
    Mat<Real> out = Mat<Real>::full(1, n, Real(1));
    for (int i = 0; i < n; ++i) {
      if (!valid[i]) continue;
      Real acc = Real(1);
      for (int j = 0; j < n; ++j) {
        if (j == i || !valid[j]) continue;
        const double x = double(eta) * (double(vs.data[j]) - double(vs.data[i]));
        const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        sig[std::size_t(i) * n + j] = Real(s);
        acc += Real(s);
      }
      out.data[i] = acc;
    }
    return make(std::move(out), {scores},
                [scores, sig = std::move(sig), valid, eta, n](Tape& t, NodeId self) {
                  if (!t.nodes_[scores].requires_grad) return;
                  const auto& g = t.nodes_[self].grad;
                  t.ensure_grad(scores);
                  auto& gs = t.nodes_[scores].grad;
                  for (int k = 0; k < n; ++k) {
                    if (!valid[k]) continue;
                    Real acc = 0;
                    for (int i = 0; i < n; ++i) {
                      if (i == k || !valid[i]) continue;
                      const Real sik = sig[std::size_t(i) * n + k];
                      const Real ski = sig[std::size_t(k) * n + i];
                      // d r_i / d y_k  and  d r_k / d y_k contributions
                      acc += g.data[i] * eta * sik * (Real(1) - sik);
                      acc -= g.data[k] * eta * ski * (Real(1) - ski);
                    }
                    gs.data[k] += acc;
                  }
                });
  }

  // Pools per-slot sub-scores of document groups back onto documents:
  // out[d] = mean of subscores[g][s] over all (g, s) with groups[g][s] == d.
  NodeId group_pool(NodeId subscores, std::vector<std::vector<int>> groups, int n_docs) {
    const auto& vs = nodes_[subscores].value;
    if (int(groups.size()) != vs.rows)
      throw DimensionError("group_pool: " + std::to_string(groups.size()) +
                           " groups for " + vs.shape_str());
    std::vector<Real> counts(n_docs, Real(0));
    Mat<Real> out(1, n_docs);
    for (int gi = 0; gi < vs.rows; ++gi) {
      if (int(groups[gi].size()) != vs.cols)
        throw DimensionError("group_pool: group arity mismatch");
      for (int s = 0; s < vs.cols; ++s) {
        const int d = groups[gi][s];
        if (d < 0 || d >= n_docs) throw ContractError("group_pool: doc index out of range");
        out.data[d] += vs(gi, s);
        counts[d] += Real(1);
      }
    }
    for (int d = 0; d < n_docs; ++d) {
      if (counts[d] == Real(0))
        throw ContractError("group_pool: document " + std::to_string(d) +
                            " appears in no group");
      out.data[d] /= counts[d];
    }
    return make(std::move(out), {subscores},
                [subscores, groups = std::move(groups),
                 counts = std::move(counts)](Tape& t, NodeId self) {
                  if (!t.nodes_[subscores].requires_grad) return;
                  const auto& g = t.nodes_[self].grad;
                  t.ensure_grad(subscores);
                  auto& gs = t.nodes_[subscores].grad;
                  for (std::size_t gi = 0; gi < groups.size(); ++gi)
                    for (std::size_t s = 0; s < groups[gi].size(); ++s) {
                      const int d = groups[gi][s];
                      gs(int(gi), int(s)) += g.data[d] / counts[d];
                    }
                });
  }

  // Reverse sweep from a scalar output. Gradients accumulate into each
  // reachable node's grad; leaves created with requires_grad collect the
  // final adjoints.
  void backward(NodeId output) {
    const auto& v = nodes_[output].value;
    if (v.rows != 1 || v.cols != 1)
      throw ContractError("backward: output must be scalar, got " + v.shape_str());
    ensure_grad(output);
    nodes_[output].grad.data[0] = Real(1);
    for (NodeId id = output; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.requires_grad || !n.backward) continue;
      if (n.grad.empty()) continue;  // nothing flowed into this node
      n.backward(*this, id);
    }
  }

 private:
  NodeId make(Mat<Real> value, const std::vector<NodeId>& deps,
              std::function<void(Tape&, NodeId)> backward_fn) {
    Node n;
    n.value = std::move(value);
    for (NodeId d : deps)
      if (nodes_[d].requires_grad) {
        n.requires_grad = true;
        break;
      }
    if (n.requires_grad) n.backward = std::move(backward_fn);
    nodes_.push_back(std::move(n));
    return NodeId(nodes_.size() - 1);
  }

  void ensure_grad(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.empty() && !n.value.empty())
      n.grad = Mat<Real>(n.value.rows, n.value.cols);
  }

  void accumulate(NodeId id, const Mat<Real>& g) {
    if (!nodes_[id].requires_grad) return;
    ensure_grad(id);
    auto& dst = nodes_[id].grad;
    for (std::size_t i = 0; i < g.data.size(); ++i) dst.data[i] += g.data[i];
  }

  void check_same_shape(const char* op, NodeId a, NodeId b) const {
    const auto& va = nodes_[a].value;
    const auto& vb = nodes_[b].value;
    if (va.rows != vb.rows || va.cols != vb.cols)
      throw DimensionError(std::string(op) + ": " + va.shape_str() + " vs " + vb.shape_str());
  }

  void check_col_mask(const Mat<Real>& m, const std::vector<std::uint8_t>& mask) const {
    if (int(mask.size()) != m.cols)
      throw DimensionError("mask has " + std::to_string(mask.size()) +
                           " flags for " + m.shape_str());
    bool any = false;
    for (auto f : mask) any |= f != 0;
    if (!any) throw DegenerateRowError("all columns masked");
  }

  Real row_max_valid(const Real* x, const std::vector<std::uint8_t>& mask, int) const {
    Real mx = std::numeric_limits<Real>::lowest();
    bool found = false;
    for (std::size_t c = 0; c < mask.size(); ++c)
      if (mask[c]) {
        mx = found ? std::max(mx, x[c]) : x[c];
        found = true;
      }
    if (!found) throw DegenerateRowError("softmax row has no valid entries");
    return mx;
  }

  std::vector<Node> nodes_;
};

// Copies gradients accumulated on parameter leaves back into the store.
template <class Real>
void collect_gradients(Tape<Real>& tape, const std::vector<std::pair<std::string, NodeId>>& param_nodes,
                       ParamStore<Real>& store) {
  for (const auto& [name, id] : param_nodes) {
    const Mat<Real>& g = tape.grad(id);
    Mat<Real>& dst = store.grad(name);
    if (dst.rows != g.rows || dst.cols != g.cols)
      throw DimensionError("gradient shape " + g.shape_str() + " for parameter " +
                           name + " of shape " + dst.shape_str());
    for (std::size_t i = 0; i < g.data.size(); ++i) dst.data[i] += g.data[i];
  }
}

}  // namespace ltr
