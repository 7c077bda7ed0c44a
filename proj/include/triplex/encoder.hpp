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

#include "triplex/frontend.hpp"
#include "triplex/layers.hpp"
#include "triplex/ops.hpp"
#include "triplex/param_store.hpp"

namespace triplex {

struct EncoderConfig {
  int n_mels = 128;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int conv_stride = 2;
  int ff_mult = 4;
  int max_frames = 2000;  // positional-table length (post-subsampling)
  double dropout = 0.1;

  void validate() const {
    if (n_layers < 1) throw ConfigError("encoder: n_layers must be >= 1");
    if (n_heads < 1 || d_model % n_heads != 0)
      throw ConfigError("encoder: d_model must be divisible by n_heads");
    if (conv_stride < 1) throw ConfigError("encoder: conv_stride must be >= 1");
  }
};

// T' x d_model frame embeddings; frame_ms is the output frame period.
struct FrameEmbeddings {
  Tensor frames;
  double frame_ms = 20.0;
};

// Registers all encoder weights in group "encoder". Initialization is a
// pure function of (config, seed): every tensor draws from its own
// name-derived stream.
// Raw log-mel magnitudes are O(10) (the log floor alone is -23), so the
// first conv layer starts an order of magnitude smaller than plain
// 1/sqrt(fan_in) to keep early activations near unit scale.
constexpr double kMelInputScale = 12.0;

inline void init_encoder_params(ParamStore& store, const EncoderConfig& cfg,
                                std::uint64_t seed) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto mels = static_cast<std::size_t>(cfg.n_mels);
  const auto ff = static_cast<std::size_t>(cfg.ff_mult) * d;
  {
    Rng rng(derive_seed(seed, "enc.conv1.w"));
    Tensor w = model_detail::init_linear(rng, mels * 3, {d, mels, 3});
    for (double& v : w.data) v /= kMelInputScale;
    store.insert("enc.conv1.w", "encoder", std::move(w));
    store.insert("enc.conv1.b", "encoder", Tensor::zeros({d}));
  }
  {
    Rng rng(derive_seed(seed, "enc.conv2.w"));
    store.insert("enc.conv2.w", "encoder",
                 model_detail::init_linear(rng, d * 3, {d, d, 3}));
    store.insert("enc.conv2.b", "encoder", Tensor::zeros({d}));
  }
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "enc.l" + std::to_string(l);
    model_detail::insert_layer_norm(store, "encoder", p + ".ln1", d);
    for (const char* proj : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"}) {
      Rng rng(derive_seed(seed, p + proj));
      store.insert(p + proj, "encoder", model_detail::init_linear(rng, d, {d, d}));
    }
    for (const char* b : {".attn.bq", ".attn.bk", ".attn.bv", ".attn.bo"})
      store.insert(p + b, "encoder", Tensor::zeros({d}));
    model_detail::insert_layer_norm(store, "encoder", p + ".ln2", d);
    model_detail::insert_linear(store, "encoder", p + ".ffn.fc1", d, ff, seed);
    model_detail::insert_linear(store, "encoder", p + ".ffn.fc2", ff, d, seed);
  }
  model_detail::insert_layer_norm(store, "encoder", "enc.lnf", d);
}

// Whisper-style encoder: two k=3 convolutions over time (the second with
// stride `conv_stride`), GELU activations, additive sinusoidal positions,
// then pre-LN self-attention blocks and a final layer norm. Differentiable
// end to end, including w.r.t. the mel input.
inline Var encode(const Var& mel, const ParamStore& store,
                  const EncoderConfig& cfg, const TrainContext& ctx = {}) {
  cfg.validate();
  check_matrix(mel.value(), "encode input");
  if (mel.value().dims[1] != static_cast<std::size_t>(cfg.n_mels))
    throw ShapeMismatch("encode: expected " + std::to_string(cfg.n_mels) +
                        " mel bins, got " + std::to_string(mel.value().dims[1]));

  Var x = gelu(conv1d(mel, store.at("enc.conv1.w"), store.at("enc.conv1.b"),
                      /*stride=*/1, /*pad=*/1));
  x = gelu(conv1d(x, store.at("enc.conv2.w"), store.at("enc.conv2.b"),
                  static_cast<std::size_t>(cfg.conv_stride), /*pad=*/1));

  const std::size_t t_out = x.value().dims[0];
  if (t_out > static_cast<std::size_t>(cfg.max_frames))
    throw InputTooLong("encode: " + std::to_string(t_out) +
                       " frames exceed max_frames=" +
                       std::to_string(cfg.max_frames));

  Tensor pos = sinusoid_table(t_out, static_cast<std::size_t>(cfg.d_model));
  x = add(x, Var::constant(std::move(pos)));

  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "enc.l" + std::to_string(l);
    model_detail::AttnWeights w{
        store.at(p + ".attn.wq"), store.at(p + ".attn.bq"),
        store.at(p + ".attn.wk"), store.at(p + ".attn.bk"),
        store.at(p + ".attn.wv"), store.at(p + ".attn.bv"),
        store.at(p + ".attn.wo"), store.at(p + ".attn.bo")};
    Var h = layer_norm(x, store.at(p + ".ln1.g"), store.at(p + ".ln1.b"));
    h = model_detail::attention_block(h, w, cfg.n_heads, /*causal=*/false);
    x = add(x, model_detail::maybe_dropout(h, cfg.dropout, ctx));
    Var f = layer_norm(x, store.at(p + ".ln2.g"), store.at(p + ".ln2.b"));
    f = add_rowvec(matmul(f, store.at(p + ".ffn.fc1.w")),
                   store.at(p + ".ffn.fc1.b"));
    f = gelu(f);
    f = add_rowvec(matmul(f, store.at(p + ".ffn.fc2.w")),
                   store.at(p + ".ffn.fc2.b"));
    x = add(x, model_detail::maybe_dropout(f, cfg.dropout, ctx));
  }
  return layer_norm(x, store.at("enc.lnf.g"), store.at("enc.lnf.b"));
}

inline FrameEmbeddings encode(const MelSpectrogram& mel, const ParamStore& store,
                              const EncoderConfig& cfg) {
  Var out = encode(Var::constant(mel.frames), store, cfg);
  FrameEmbeddings fe;
  fe.frames = out.value();
  fe.frame_ms = mel.hop_ms * cfg.conv_stride;
  return fe;
}

}  // namespace triplex
