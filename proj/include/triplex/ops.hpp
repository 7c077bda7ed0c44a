// Copyright 2026 The Triplex Authors
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
#include <limits>
#include <vector>

#include "triplex/autograd.hpp"
#include "triplex/errors.hpp"
#include "triplex/rng.hpp"
#include "triplex/tensor.hpp"

namespace triplex {

// ---------------------------------------------------------------------------
// elementwise / structural ops
// ---------------------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
  if (!a.value().same_shape(b.value()))
    throw ShapeMismatch("add: " + a.value().shape_str() + " vs " +
                        b.value().shape_str());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.value().data[i];
  detail::Node* an = a.node();
  detail::Node* bn = b.node();
  return make_op(std::move(out), {a, b}, [an, bn](const Tensor& g) {
    if (an->requires_grad) {
      Tensor& ga = detail::grad_of(an);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
    }
    if (bn->requires_grad) {
      Tensor& gb = detail::grad_of(bn);
      for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i];
    }
  });
}

// (T,N) + row vector (N), broadcast over rows
inline Var add_rowvec(const Var& x, const Var& b) {
  check_matrix(x.value(), "add_rowvec");
  const std::size_t t = x.value().dims[0], n = x.value().dims[1];
  if (b.value().size() != n)
    throw ShapeMismatch("add_rowvec: bias size " + b.value().shape_str());
  Tensor out = x.value();
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += b.value().data[j];
  detail::Node* xn = x.node();
  detail::Node* bn = b.node();
  return make_op(std::move(out), {x, b}, [xn, bn, t, n](const Tensor& g) {
    if (xn->requires_grad) {
      Tensor& gx = detail::grad_of(xn);
      for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i];
    }
    if (bn->requires_grad) {
      Tensor& gb = detail::grad_of(bn);
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < n; ++j) gb.data[j] += g.data[i * n + j];
    }
  });
}

inline Var scale(const Var& x, double c) {
  Tensor out = x.value();
  for (double& v : out.data) v *= c;
  detail::Node* xn = x.node();
  return make_op(std::move(out), {x}, [xn, c](const Tensor& g) {
    if (xn->requires_grad) {
      Tensor& gx = detail::grad_of(xn);
      for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += c * g.data[i];
    }
  });
}

// scalar = sum(w .* x); the usual scalarizer for gradient checks
inline Var weighted_sum(const Var& x, const Tensor& w) {
  if (!x.value().same_shape(w))
    throw ShapeMismatch("weighted_sum: weight shape " + w.shape_str());
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w.data[i] * x.value().data[i];
  detail::Node* xn = x.node();
  return make_op(Tensor::scalar(s), {x}, [xn, w](const Tensor& g) {
    if (xn->requires_grad) {
      Tensor& gx = detail::grad_of(xn);
      for (std::size_t i = 0; i < w.size(); ++i)
        gx.data[i] += g.data[0] * w.data[i];
    }
  });
}

inline Var matmul(const Var& a, const Var& b) {
  Tensor out = mm_nn(a.value(), b.value());
  detail::Node* an = a.node();
  detail::Node* bn = b.node();
  return make_op(std::move(out), {a, b}, [an, bn](const Tensor& g) {
    if (an->requires_grad) mm_nt_acc(g, bn->value, detail::grad_of(an));
    if (bn->requires_grad) mm_tn_acc(an->value, g, detail::grad_of(bn));
  });
}

// a * b^T, used for tied-embedding logits
inline Var matmul_nt(const Var& a, const Var& b) {
  Tensor out = mm_nt(a.value(), b.value());
  detail::Node* an = a.node();
  detail::Node* bn = b.node();
  return make_op(std::move(out), {a, b}, [an, bn](const Tensor& g) {
    if (an->requires_grad) mm_nn_acc(g, bn->value, detail::grad_of(an));
    if (bn->requires_grad) mm_tn_acc(g, an->value, detail::grad_of(bn));
  });
}

inline Var relu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  detail::Node* xn = x.node();
  return make_op(std::move(out), {x}, [xn](const Tensor& g) {
    if (!xn->requires_grad) return;
    Tensor& gx = detail::grad_of(xn);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xn->value.data[i] > 0.0) gx.data[i] += g.data[i];
  });
}

inline double gelu_fwd(double x) {
  return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}

inline double gelu_bwd(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

inline Var gelu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.data) v = gelu_fwd(v);
  detail::Node* xn = x.node();
  return make_op(std::move(out), {x}, [xn](const Tensor& g) {
    if (!xn->requires_grad) return;
    Tensor& gx = detail::grad_of(xn);
    for (std::size_t i = 0; i < g.size(); ++i)
      gx.data[i] += g.data[i] * gelu_bwd(xn->value.data[i]);
  });
}

// ---------------------------------------------------------------------------
// normalization / softmax
// ---------------------------------------------------------------------------

// Layer norm over the last dimension with learnable gain and bias.
inline Var layer_norm(const Var& x, const Var& gain, const Var& bias,
                      double eps = 1e-5) {
  check_matrix(x.value(), "layer_norm");
  const std::size_t t = x.value().dims[0], d = x.value().dims[1];
  if (gain.value().size() != d || bias.value().size() != d)
    throw ShapeMismatch("layer_norm: gain/bias must have size " +
                        std::to_string(d));
  Tensor out = Tensor::zeros({t, d});
  Tensor xhat = Tensor::zeros({t, d});
  std::vector<double> inv_std(t);
  for (std::size_t i = 0; i < t; ++i) {
    const double* row = x.value().data.data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (row[j] - mu) * is;
      xhat.data[i * d + j] = xh;
      out.data[i * d + j] = xh * gain.value().data[j] + bias.value().data[j];
    }
  }
  detail::Node* xn = x.node();
  detail::Node* gn = gain.node();
  detail::Node* bn = bias.node();
  return make_op(
      std::move(out), {x, gain, bias},
      [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), t,
       d](const Tensor& g) {
        if (bn->requires_grad) {
          Tensor& gb = detail::grad_of(bn);
          for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < d; ++j) gb.data[j] += g.data[i * d + j];
        }
        if (gn->requires_grad) {
          Tensor& gg = detail::grad_of(gn);
          for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < d; ++j)
              gg.data[j] += g.data[i * d + j] * xhat.data[i * d + j];
        }
        if (xn->requires_grad) {
          Tensor& gx = detail::grad_of(xn);
          for (std::size_t i = 0; i < t; ++i) {
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = g.data[i * d + j] * gn->value.data[j];
              mean_dxhat += dxh;
              mean_dxhat_xhat += dxh * xhat.data[i * d + j];
            }
            mean_dxhat /= static_cast<double>(d);
            mean_dxhat_xhat /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = g.data[i * d + j] * gn->value.data[j];
              gx.data[i * d + j] +=
                  inv_std[i] *
                  (dxh - mean_dxhat - xhat.data[i * d + j] * mean_dxhat_xhat);
            }
          }
        }
      });
}

inline void softmax_row_inplace(double* row, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, row[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    row[j] = std::exp(row[j] - mx);
    z += row[j];
  }
  for (std::size_t j = 0; j < n; ++j) row[j] /= z;
}

// log softmax of one row, stable; plain-tensor path used by decoding
inline std::vector<double> log_softmax_row(const double* row, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, row[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
  const double lz = mx + std::log(z);
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = row[j] - lz;
  return out;
}

inline Var softmax(const Var& x) {
  check_matrix(x.value(), "softmax");
  const std::size_t t = x.value().dims[0], n = x.value().dims[1];
  Tensor out = x.value();
  for (std::size_t i = 0; i < t; ++i)
    softmax_row_inplace(out.data.data() + i * n, n);
  detail::Node* xn = x.node();
  const Tensor y = out;
  return make_op(std::move(out), {x}, [xn, y, t, n](const Tensor& g) {
    if (!xn->requires_grad) return;
    Tensor& gx = detail::grad_of(xn);
    for (std::size_t i = 0; i < t; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        dot += g.data[i * n + j] * y.data[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        gx.data[i * n + j] += (g.data[i * n + j] - dot) * y.data[i * n + j];
    }
  });
}

// ---------------------------------------------------------------------------
// lookup / assembly
// ---------------------------------------------------------------------------

inline Var embedding_lookup(const Var& table, const std::vector<int>& ids) {
  check_matrix(table.value(), "embedding_lookup");
  const std::size_t v = table.value().dims[0], d = table.value().dims[1];
  Tensor out = Tensor::zeros({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v)
      throw ShapeMismatch("embedding_lookup: id out of range");
    std::copy_n(table.value().data.data() + static_cast<std::size_t>(ids[i]) * d,
                d, out.data.data() + i * d);
  }
  detail::Node* tn = table.node();
  return make_op(std::move(out), {table}, [tn, ids, d](const Tensor& g) {
    if (!tn->requires_grad) return;
    Tensor& gt = detail::grad_of(tn);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < d; ++j)
        gt.data[static_cast<std::size_t>(ids[i]) * d + j] += g.data[i * d + j];
  });
}

// stack matrices with equal column counts along the row axis
inline Var vcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeMismatch("vcat: no parts");
  const std::size_t n = parts[0].value().dims[1];
  std::size_t total = 0;
  for (const Var& p : parts) {
    check_matrix(p.value(), "vcat");
    if (p.value().dims[1] != n) throw ShapeMismatch("vcat: ragged columns");
    total += p.value().dims[0];
  }
  Tensor out = Tensor::zeros({total, n});
  std::size_t at = 0;
  std::vector<std::pair<detail::Node*, std::size_t>> spans;
  for (const Var& p : parts) {
    std::copy(p.value().data.begin(), p.value().data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(at * n));
    spans.emplace_back(p.node(), p.value().dims[0]);
    at += p.value().dims[0];
  }
  return make_op(std::move(out), parts, [spans, n](const Tensor& g) {
    std::size_t row = 0;
    for (auto [node, rows] : spans) {
      if (node->requires_grad) {
        Tensor& gp = detail::grad_of(node);
        for (std::size_t i = 0; i < rows * n; ++i)
          gp.data[i] += g.data[row * n + i];
      }
      row += rows;
    }
  });
}

// (T, H*Dh) -> (H, T, Dh)
inline Var split_heads(const Var& x, std::size_t heads) {
  check_matrix(x.value(), "split_heads");
  const std::size_t t = x.value().dims[0], d = x.value().dims[1];
  if (d % heads != 0) throw ShapeMismatch("split_heads: d not divisible");
  const std::size_t dh = d / heads;
  Tensor out = Tensor::zeros({heads, t, dh});
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < dh; ++j)
        out.data[(h * t + i) * dh + j] = x.value().data[i * d + h * dh + j];
  detail::Node* xn = x.node();
  return make_op(std::move(out), {x}, [xn, heads, t, d, dh](const Tensor& g) {
    if (!xn->requires_grad) return;
    Tensor& gx = detail::grad_of(xn);
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < dh; ++j)
          gx.data[i * d + h * dh + j] += g.data[(h * t + i) * dh + j];
  });
}

// (H, T, Dh) -> (T, H*Dh)
inline Var merge_heads(const Var& x) {
  if (x.value().rank() != 3) throw ShapeMismatch("merge_heads: expected rank-3");
  const std::size_t heads = x.value().dims[0], t = x.value().dims[1],
                    dh = x.value().dims[2];
  const std::size_t d = heads * dh;
  Tensor out = Tensor::zeros({t, d});
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < dh; ++j)
        out.data[i * d + h * dh + j] = x.value().data[(h * t + i) * dh + j];
  detail::Node* xn = x.node();
  return make_op(std::move(out), {x}, [xn, heads, t, d, dh](const Tensor& g) {
    if (!xn->requires_grad) return;
    Tensor& gx = detail::grad_of(xn);
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < dh; ++j)
          gx.data[(h * t + i) * dh + j] += g.data[i * d + h * dh + j];
  });
}

// ---------------------------------------------------------------------------
// attention
// ---------------------------------------------------------------------------

// softmax(q k^T / sqrt(Dh)) v per head; q, k, v shaped (H, T, Dh).
// causal=true masks keys j > i before the softmax.
inline Var scaled_dot_product_attention(const Var& q, const Var& k,
                                        const Var& v, bool causal) {
  const Tensor& qv = q.value();
  if (qv.rank() != 3 || !qv.same_shape(k.value()) || !qv.same_shape(v.value()))
    throw ShapeMismatch("attention: q/k/v must share shape (H,T,Dh)");
  const std::size_t heads = qv.dims[0], t = qv.dims[1], dh = qv.dims[2];
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor probs = Tensor::zeros({heads, t, t});
  Tensor out = Tensor::zeros({heads, t, dh});
  for (std::size_t h = 0; h < heads; ++h) {
    const double* qh = qv.data.data() + h * t * dh;
    const double* kh = k.value().data.data() + h * t * dh;
    const double* vh = v.value().data.data() + h * t * dh;
    double* ph = probs.data.data() + h * t * t;
    double* oh = out.data.data() + h * t * dh;
    for (std::size_t i = 0; i < t; ++i) {
      const std::size_t jmax = causal ? i + 1 : t;
      double* prow = ph + i * t;
      for (std::size_t j = 0; j < jmax; ++j) {
        double s = 0.0;
        for (std::size_t e = 0; e < dh; ++e)
          s += qh[i * dh + e] * kh[j * dh + e];
        prow[j] = s * scale;
      }
      // softmax over the visible prefix; masked entries stay exactly zero
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < jmax; ++j) mx = std::max(mx, prow[j]);
      double z = 0.0;
      for (std::size_t j = 0; j < jmax; ++j) {
        prow[j] = std::exp(prow[j] - mx);
        z += prow[j];
      }
      for (std::size_t j = 0; j < jmax; ++j) prow[j] /= z;
      for (std::size_t j = jmax; j < t; ++j) prow[j] = 0.0;
      for (std::size_t j = 0; j < jmax; ++j) {
        const double p = prow[j];
        if (p == 0.0) continue;
        for (std::size_t e = 0; e < dh; ++e) oh[i * dh + e] += p * vh[j * dh + e];
      }
    }
  }

  detail::Node* qn = q.node();
  detail::Node* kn = k.node();
  detail::Node* vn = v.node();
  return make_op(
      std::move(out), {q, k, v},
      [qn, kn, vn, probs = std::move(probs), heads, t, dh,
       scale](const Tensor& g) {
        for (std::size_t h = 0; h < heads; ++h) {
          const double* qh = qn->value.data.data() + h * t * dh;
          const double* kh = kn->value.data.data() + h * t * dh;
          const double* vh = vn->value.data.data() + h * t * dh;
          const double* ph = probs.data.data() + h * t * t;
          const double* gh = g.data.data() + h * t * dh;

          // dP = g V^T, then softmax backward row-wise to get dS
          std::vector<double> ds(t * t, 0.0);
          for (std::size_t i = 0; i < t; ++i) {
            for (std::size_t j = 0; j < t; ++j) {
              if (ph[i * t + j] == 0.0) continue;
              double s = 0.0;
              for (std::size_t e = 0; e < dh; ++e)
                s += gh[i * dh + e] * vh[j * dh + e];
              ds[i * t + j] = s;
            }
            double dot = 0.0;
            for (std::size_t j = 0; j < t; ++j)
              dot += ds[i * t + j] * ph[i * t + j];
            for (std::size_t j = 0; j < t; ++j)
              ds[i * t + j] = (ds[i * t + j] - dot) * ph[i * t + j];
          }

          if (vn->requires_grad) {
            Tensor& gv = detail::grad_of(vn);
            double* gvh = gv.data.data() + h * t * dh;
            for (std::size_t j = 0; j < t; ++j)
              for (std::size_t i = 0; i < t; ++i) {
                const double p = ph[i * t + j];
                if (p == 0.0) continue;
                for (std::size_t e = 0; e < dh; ++e)
                  gvh[j * dh + e] += p * gh[i * dh + e];
              }
          }
          if (qn->requires_grad) {
            Tensor& gq = detail::grad_of(qn);
            double* gqh = gq.data.data() + h * t * dh;
            for (std::size_t i = 0; i < t; ++i)
              for (std::size_t j = 0; j < t; ++j) {
                const double d = ds[i * t + j] * scale;
                if (d == 0.0) continue;
                for (std::size_t e = 0; e < dh; ++e)
                  gqh[i * dh + e] += d * kh[j * dh + e];
              }
          }
          if (kn->requires_grad) {
            Tensor& gk = detail::grad_of(kn);
            double* gkh = gk.data.data() + h * t * dh;
            for (std::size_t i = 0; i < t; ++i)
              for (std::size_t j = 0; j < t; ++j) {
                const double d = ds[i * t + j] * scale;
                if (d == 0.0) continue;
                for (std::size_t e = 0; e < dh; ++e)
                  gkh[j * dh + e] += d * qh[i * dh + e];
              }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// 1-D convolution over time, channels last: x (T, Cin), w (Cout, Cin, K)
// ---------------------------------------------------------------------------

inline Var conv1d(const Var& x, const Var& w, const Var& b, std::size_t stride,
                  std::size_t pad) {
  check_matrix(x.value(), "conv1d input");
  if (w.value().rank() != 3) throw ShapeMismatch("conv1d: weight rank");
  const std::size_t t = x.value().dims[0], cin = x.value().dims[1];
  const std::size_t cout = w.value().dims[0], k = w.value().dims[2];
  if (w.value().dims[1] != cin)
    throw ShapeMismatch("conv1d: channel mismatch");
  if (b.value().size() != cout) throw ShapeMismatch("conv1d: bias size");
  if (t + 2 * pad < k) throw ShapeMismatch("conv1d: input shorter than kernel");
  const std::size_t tout = (t + 2 * pad - k) / stride + 1;

  Tensor out = Tensor::zeros({tout, cout});
  const double* px = x.value().data.data();
  const double* pw = w.value().data.data();
  for (std::size_t i = 0; i < tout; ++i) {
    for (std::size_t o = 0; o < cout; ++o) {
      double s = b.value().data[o];
      for (std::size_t kk = 0; kk < k; ++kk) {
        const std::ptrdiff_t u =
            static_cast<std::ptrdiff_t>(i * stride + kk) -
            static_cast<std::ptrdiff_t>(pad);
        if (u < 0 || u >= static_cast<std::ptrdiff_t>(t)) continue;
        const double* xr = px + static_cast<std::size_t>(u) * cin;
        const double* wr = pw + (o * cin) * k + kk;
        for (std::size_t ci = 0; ci < cin; ++ci) s += xr[ci] * wr[ci * k];
      }
      out.data[i * cout + o] = s;
    }
  }

  detail::Node* xn = x.node();
  detail::Node* wn = w.node();
  detail::Node* bn = b.node();
  return make_op(
      std::move(out), {x, w, b},
      [xn, wn, bn, t, cin, cout, k, stride, pad, tout](const Tensor& g) {
        if (bn->requires_grad) {
          Tensor& gb = detail::grad_of(bn);
          for (std::size_t i = 0; i < tout; ++i)
            for (std::size_t o = 0; o < cout; ++o)
              gb.data[o] += g.data[i * cout + o];
        }
        const double* px = xn->value.data.data();
        const double* pw = wn->value.data.data();
        for (std::size_t i = 0; i < tout; ++i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            const std::ptrdiff_t u =
                static_cast<std::ptrdiff_t>(i * stride + kk) -
                static_cast<std::ptrdiff_t>(pad);
            if (u < 0 || u >= static_cast<std::ptrdiff_t>(t)) continue;
            for (std::size_t o = 0; o < cout; ++o) {
              const double go = g.data[i * cout + o];
              if (go == 0.0) continue;
              if (wn->requires_grad) {
                Tensor& gw = detail::grad_of(wn);
                double* gwr = gw.data.data() + (o * cin) * k + kk;
                const double* xr = px + static_cast<std::size_t>(u) * cin;
                for (std::size_t ci = 0; ci < cin; ++ci)
                  gwr[ci * k] += go * xr[ci];
              }
              if (xn->requires_grad) {
                Tensor& gx = detail::grad_of(xn);
                double* gxr = gx.data.data() + static_cast<std::size_t>(u) * cin;
                const double* wr = pw + (o * cin) * k + kk;
                for (std::size_t ci = 0; ci < cin; ++ci)
                  gxr[ci] += go * wr[ci * k];
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// dropout (train-time only; inverted scaling)
// ---------------------------------------------------------------------------

inline Var dropout(const Var& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ShapeMismatch("dropout: rate must be < 1");
  const double keep = 1.0 - rate;
  std::vector<std::uint8_t> mask(x.value().size());
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.uniform() >= rate ? 1 : 0;
    out.data[i] = mask[i] ? out.data[i] / keep : 0.0;
  }
  detail::Node* xn = x.node();
  return make_op(std::move(out), {x},
                 [xn, mask = std::move(mask), keep](const Tensor& g) {
                   if (!xn->requires_grad) return;
                   Tensor& gx = detail::grad_of(xn);
                   for (std::size_t i = 0; i < g.size(); ++i)
                     if (mask[i]) gx.data[i] += g.data[i] / keep;
                 });
}

// ---------------------------------------------------------------------------
// masked cross entropy
// ---------------------------------------------------------------------------

// Mean of -log softmax(logits_t)[target_t] over positions where mask is true.
// Positions with mask false contribute nothing: their logits and targets are
// never read, so the loss is bit-invariant to them.
inline Var masked_cross_entropy(const Var& logits,
                                const std::vector<int>& targets,
                                const std::vector<bool>& mask) {
  check_matrix(logits.value(), "masked_cross_entropy");
  const std::size_t t = logits.value().dims[0], v = logits.value().dims[1];
  if (targets.size() != t || mask.size() != t)
    throw ShapeMismatch("masked_cross_entropy: targets/mask length");
  std::size_t active = 0;
  for (bool m : mask) active += m ? 1 : 0;
  if (active == 0)
    throw EmptyMask("masked_cross_entropy: mask has no active positions");

  double loss = 0.0;
  std::vector<double> log_z(t, 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    if (!mask[i]) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v)
      throw ShapeMismatch("masked_cross_entropy: target id out of range");
    const double* row = logits.value().data.data() + i * v;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < v; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    log_z[i] = mx + std::log(z);
    loss += log_z[i] - row[static_cast<std::size_t>(targets[i])];
  }
  loss /= static_cast<double>(active);

  detail::Node* ln = logits.node();
  return make_op(
      Tensor::scalar(loss), {logits},
      [ln, targets, mask, log_z = std::move(log_z), t, v,
       active](const Tensor& g) {
        if (!ln->requires_grad) return;
        Tensor& gl = detail::grad_of(ln);
        const double c = g.data[0] / static_cast<double>(active);
        for (std::size_t i = 0; i < t; ++i) {
          if (!mask[i]) continue;
          const double* row = ln->value.data.data() + i * v;
          for (std::size_t j = 0; j < v; ++j) {
            double p = std::exp(row[j] - log_z[i]);
            gl.data[i * v + j] +=
                c * (p - (static_cast<std::size_t>(targets[i]) == j ? 1.0 : 0.0));
          }
        }
      });
}

}  // namespace triplex
