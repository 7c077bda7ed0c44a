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

#include "triplex/layers.hpp"
#include "triplex/ops.hpp"
#include "triplex/param_store.hpp"

namespace triplex {

struct AdapterConfig {
  int splice_k = 4;
  int d_in = 64;      // encoder d_model
  int d_hidden = 0;   // 0 -> 4 * d_in
  int d_llm = 128;

  int hidden() const { return d_hidden > 0 ? d_hidden : 4 * d_in; }

  void validate() const {
    if (splice_k < 1) throw ConfigError("adapter: splice_k must be >= 1");
    if (d_in < 1 || d_llm < 1 || hidden() < 1)
      throw ConfigError("adapter: dims must be >= 1");
  }
};

// Downsampling by frame splicing: consecutive groups of k frames are
// concatenated feature-wise. A ragged tail is right-padded with zero
// frames, so the output always has ceil(T/k) rows.
inline Tensor frame_splice(const Tensor& frames, int k) {
  check_matrix(frames, "frame_splice");
  if (k < 1) throw ConfigError("frame_splice: k must be >= 1");
  const std::size_t t = frames.dims[0], d = frames.dims[1];
  const auto kk = static_cast<std::size_t>(k);
  const std::size_t t_out = (t + kk - 1) / kk;
  Tensor out = Tensor::zeros({t_out, kk * d});
  for (std::size_t i = 0; i < t; ++i) {
    const std::size_t row = i / kk, slot = i % kk;
    std::copy_n(frames.data.data() + i * d, d,
                out.data.data() + row * kk * d + slot * d);
  }
  return out;
}

inline Var frame_splice(const Var& frames, int k) {
  Tensor out = frame_splice(frames.value(), k);
  const std::size_t t = frames.value().dims[0], d = frames.value().dims[1];
  const auto kk = static_cast<std::size_t>(k);
  detail::Node* fn = frames.node();
  return make_op(std::move(out), {frames}, [fn, t, d, kk](const Tensor& g) {
    if (!fn->requires_grad) return;
    Tensor& gf = detail::grad_of(fn);
    for (std::size_t i = 0; i < t; ++i) {
      const std::size_t row = i / kk, slot = i % kk;
      for (std::size_t j = 0; j < d; ++j)
        gf.data[i * d + j] += g.data[row * kk * d + slot * d + j];
    }
  });
}

inline void init_adapter_params(ParamStore& store, const AdapterConfig& cfg,
                                std::uint64_t seed) {
  cfg.validate();
  const auto d_in = static_cast<std::size_t>(cfg.splice_k * cfg.d_in);
  const auto d_h = static_cast<std::size_t>(cfg.hidden());
  const auto d_out = static_cast<std::size_t>(cfg.d_llm);
  model_detail::insert_linear(store, "adapter", "adp.fc1", d_in, d_h, seed);
  model_detail::insert_linear(store, "adapter", "adp.fc2", d_h, d_out, seed);
}

// Linear-ReLU-Linear projection into the LLM embedding space.
inline Var adapt(const Var& spliced, const ParamStore& store,
                 const AdapterConfig& cfg) {
  cfg.validate();
  check_matrix(spliced.value(), "adapt");
  const auto expect = static_cast<std::size_t>(cfg.splice_k * cfg.d_in);
  if (spliced.value().dims[1] != expect)
    throw ShapeMismatch("adapt: expected " + std::to_string(expect) +
                        " input features, got " +
                        std::to_string(spliced.value().dims[1]));
  Var h = add_rowvec(matmul(spliced, store.at("adp.fc1.w")), store.at("adp.fc1.b"));
  h = relu(h);
  return add_rowvec(matmul(h, store.at("adp.fc2.w")), store.at("adp.fc2.b"));
}

}  // namespace triplex
