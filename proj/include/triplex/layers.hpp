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

#include <cmath>
#include <string>

#include "triplex/ops.hpp"
#include "triplex/param_store.hpp"

namespace triplex {

// Shared training context: dropout is active only when `training` is set
// and always draws from the supplied generator.
struct TrainContext {
  bool training = false;
  Rng* rng = nullptr;
};

// classic fixed sinusoidal table, (max_pos, d)
inline Tensor sinusoid_table(std::size_t max_pos, std::size_t d) {
  Tensor t = Tensor::zeros({max_pos, d});
  for (std::size_t pos = 0; pos < max_pos; ++pos)
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      const double a = static_cast<double>(pos) * freq;
      t(pos, i) = std::sin(a);
      if (i + 1 < d) t(pos, i + 1) = std::cos(a);
    }
  return t;
}

namespace model_detail {

inline Tensor init_linear(Rng& rng, std::size_t fan_in,
                          std::vector<std::size_t> dims) {
  return randn(rng, std::move(dims), 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

inline void insert_linear(ParamStore& store, const std::string& group,
                          const std::string& prefix, std::size_t d_in,
                          std::size_t d_out, std::uint64_t seed) {
  Rng rng(derive_seed(seed, prefix));
  store.insert(prefix + ".w", group, init_linear(rng, d_in, {d_in, d_out}));
  store.insert(prefix + ".b", group, Tensor::zeros({d_out}));
}

inline void insert_layer_norm(ParamStore& store, const std::string& group,
                              const std::string& prefix, std::size_t d) {
  store.insert(prefix + ".g", group, Tensor::full({d}, 1.0));
  store.insert(prefix + ".b", group, Tensor::zeros({d}));
}

// pre-LN block attention half; effective projection weights are passed in
// so callers can splice LoRA deltas into q/v.
struct AttnWeights {
  Var wq, bq, wk, bk, wv, bv, wo, bo;
};

inline Var attention_block(const Var& x, const AttnWeights& w, int heads,
                           bool causal) {
  Var q = split_heads(add_rowvec(matmul(x, w.wq), w.bq),
                      static_cast<std::size_t>(heads));
  Var k = split_heads(add_rowvec(matmul(x, w.wk), w.bk),
                      static_cast<std::size_t>(heads));
  Var v = split_heads(add_rowvec(matmul(x, w.wv), w.bv),
                      static_cast<std::size_t>(heads));
  Var ctx = merge_heads(scaled_dot_product_attention(q, k, v, causal));
  return add_rowvec(matmul(ctx, w.wo), w.bo);
}

inline Var maybe_dropout(const Var& x, double rate, const TrainContext& ctx) {
  if (!ctx.training || rate <= 0.0 || ctx.rng == nullptr) return x;
  return dropout(x, rate, *ctx.rng);
}

}  // namespace model_detail

}  // namespace triplex
