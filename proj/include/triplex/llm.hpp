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

#include <optional>
#include <string>
#include <vector>

#include "triplex/layers.hpp"
#include "triplex/ops.hpp"
#include "triplex/param_store.hpp"
#include "triplex/tokenizer.hpp"

namespace triplex {

struct LlmConfig {
  int d_llm = 128;
  int n_layers = 2;
  int n_heads = 4;
  int max_seq = 512;
  int ff_mult = 4;

  void validate() const {
    if (n_layers < 1) throw ConfigError("llm: n_layers must be >= 1");
    if (n_heads < 1 || d_llm % n_heads != 0)
      throw ConfigError("llm: d_llm must be divisible by n_heads");
    if (max_seq < 1) throw ConfigError("llm: max_seq must be >= 1");
  }
};

struct LoraConfig {
  int rank = 4;
  double alpha = 8.0;

  void validate() const {
    if (rank < 1) throw ConfigError("lora: rank must be >= 1");
    if (alpha <= 0.0) throw ConfigError("lora: alpha must be > 0");
  }

  double scaling() const { return alpha / static_cast<double>(rank); }
};

// One LLM input position: either a token id or a row of the projected
// audio embedding matrix.
struct PackedItem {
  bool is_audio = false;
  int token_id = -1;
  std::size_t audio_row = 0;
};

// The Fig-1 input layout plus teacher-forcing labels. targets[i] is the
// token the model must predict at position i (-1 when the next position
// holds an audio row or no loss applies); loss_mask marks exactly the
// positions whose prediction is a transcription token or EOS.
struct PackedSequence {
  std::vector<PackedItem> positions;
  std::vector<bool> loss_mask;
  std::vector<int> targets;
  std::size_t audio_rows = 0;

  std::size_t length() const { return positions.size(); }
};

// Train-time layout:  [BOS, prompt..., audio..., target...], the model
// predicts [prompt..., audio..., target..., EOS] shifted by one; loss is
// active from the last audio position (predicting the first target token)
// through the final position (predicting EOS).
// Decode-time layout: [BOS, prompt..., audio...] with an all-false mask.
inline PackedSequence build_packed_sequence(
    const std::vector<int>& prompt, std::size_t audio_rows,
    const std::optional<std::vector<int>>& target, int max_seq) {
  if (prompt.empty())
    throw ConfigError("build_packed_sequence: prompt must be non-empty");
  if (target.has_value() && target->empty())
    throw MissingTarget("build_packed_sequence: empty target");

  PackedSequence seq;
  seq.audio_rows = audio_rows;
  seq.positions.push_back({false, Tokenizer::kBos, 0});
  for (int id : prompt) seq.positions.push_back({false, id, 0});
  for (std::size_t r = 0; r < audio_rows; ++r)
    seq.positions.push_back({true, -1, r});
  if (target.has_value())
    for (int id : *target) seq.positions.push_back({false, id, 0});

  const std::size_t len = seq.positions.size();
  if (len > static_cast<std::size_t>(max_seq))
    throw SequenceTooLong("packed sequence length " + std::to_string(len) +
                          " exceeds max_seq=" + std::to_string(max_seq));

  seq.targets.assign(len, -1);
  seq.loss_mask.assign(len, false);
  if (target.has_value()) {
    for (std::size_t i = 0; i + 1 < len; ++i)
      if (!seq.positions[i + 1].is_audio)
        seq.targets[i] = seq.positions[i + 1].token_id;
    seq.targets[len - 1] = Tokenizer::kEos;
    const std::size_t first_loss = 1 + prompt.size() + audio_rows - 1;
    for (std::size_t i = first_loss; i < len; ++i) seq.loss_mask[i] = true;
  }
  return seq;
}

// Token embeddings and the positional table are kept at comparable norms
// so attention sees both content and position; with tied unembedding this
// scale also keeps a fresh model's logits near uniform.
constexpr double kEmbedInitStd = 0.1;
constexpr double kLlmPosScale = 0.1;

inline void init_llm_params(ParamStore& store, const LlmConfig& cfg, int vocab,
                            std::uint64_t seed) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.d_llm);
  const auto ff = static_cast<std::size_t>(cfg.ff_mult) * d;
  {
    Rng rng(derive_seed(seed, "llm.embed"));
    store.insert("llm.embed", "llm_core",
                 randn(rng, {static_cast<std::size_t>(vocab), d}, kEmbedInitStd));
  }
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "llm.l" + std::to_string(l);
    model_detail::insert_layer_norm(store, "llm_core", p + ".ln1", d);
    for (const char* proj : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"}) {
      Rng rng(derive_seed(seed, p + proj));
      store.insert(p + proj, "llm_core", model_detail::init_linear(rng, d, {d, d}));
    }
    for (const char* b : {".attn.bq", ".attn.bk", ".attn.bv", ".attn.bo"})
      store.insert(p + b, "llm_core", Tensor::zeros({d}));
    model_detail::insert_layer_norm(store, "llm_core", p + ".ln2", d);
    model_detail::insert_linear(store, "llm_core", p + ".ffn.fc1", d, ff, seed);
    model_detail::insert_linear(store, "llm_core", p + ".ffn.fc2", ff, d, seed);
  }
  model_detail::insert_layer_norm(store, "llm_core", "llm.lnf", d);
}

// LoRA factors for the attention query and value projections. B starts at
// zero so a freshly initialized LoRA model is behaviorally identical to
// the base model.
inline void init_lora_params(ParamStore& store, const LlmConfig& cfg,
                             const LoraConfig& lora, std::uint64_t seed) {
  cfg.validate();
  lora.validate();
  const auto d = static_cast<std::size_t>(cfg.d_llm);
  const auto r = static_cast<std::size_t>(lora.rank);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "lora.l" + std::to_string(l);
    for (const char* proj : {".q", ".v"}) {
      Rng rng(derive_seed(seed, p + proj + std::string(".a")));
      store.insert(p + proj + std::string(".a"), "llm_lora",
                   randn(rng, {r, d}, 0.01));
      store.insert(p + proj + std::string(".b"), "llm_lora",
                   Tensor::zeros({d, r}));
    }
  }
}

namespace model_detail {

inline Var lora_adjusted(const ParamStore& store, const std::string& w_name,
                         const std::string& lora_prefix, double scaling) {
  if (!store.has(lora_prefix + ".a") || !store.has(lora_prefix + ".b"))
    throw MissingLoraFactors("missing LoRA factors " + lora_prefix);
  Var delta = scale(
      matmul(store.at(lora_prefix + ".b"), store.at(lora_prefix + ".a")),
      scaling);
  return add(store.at(w_name), delta);
}

}  // namespace model_detail

// Decoder-only forward: token positions are embedded through the shared
// table, audio positions take the adapter output rows as-is, sinusoidal
// positions are added, then a causal pre-LN stack. The output projection
// is tied to the embedding table. With use_lora the q/v projections become
// W + (alpha/r) B A.
inline Var lm_forward(const PackedSequence& seq, const Var& audio,
                      const ParamStore& store, const LlmConfig& cfg,
                      const LoraConfig& lora, bool use_lora) {
  cfg.validate();
  if (seq.positions.empty()) throw ShapeMismatch("lm_forward: empty sequence");
  if (seq.audio_rows > 0) {
    check_matrix(audio.value(), "lm_forward audio");
    if (audio.value().dims[0] != seq.audio_rows)
      throw ShapeMismatch("lm_forward: sequence expects " +
                          std::to_string(seq.audio_rows) + " audio rows, got " +
                          std::to_string(audio.value().dims[0]));
    if (audio.value().dims[1] != static_cast<std::size_t>(cfg.d_llm))
      throw ShapeMismatch("lm_forward: audio width != d_llm");
  }

  const Var& embed = store.at("llm.embed");

  // the audio rows form one contiguous in-order block
  const std::size_t len = seq.length();
  std::size_t audio_start = len, audio_count = 0;
  for (std::size_t i = 0; i < len; ++i) {
    if (!seq.positions[i].is_audio) continue;
    if (audio_count == 0) audio_start = i;
    if (i != audio_start + audio_count ||
        seq.positions[i].audio_row != audio_count)
      throw ShapeMismatch("lm_forward: audio rows must be contiguous, in order");
    ++audio_count;
  }
  if (audio_count != seq.audio_rows)
    throw ShapeMismatch("lm_forward: audio row count mismatch");

  std::vector<int> pre, post;
  for (std::size_t i = 0; i < std::min(audio_start, len); ++i)
    pre.push_back(seq.positions[i].token_id);
  for (std::size_t i = audio_start + audio_count; i < len; ++i)
    post.push_back(seq.positions[i].token_id);

  std::vector<Var> segments;
  if (!pre.empty()) segments.push_back(embedding_lookup(embed, pre));
  if (audio_count > 0) segments.push_back(audio);
  if (!post.empty()) segments.push_back(embedding_lookup(embed, post));
  Var x = segments.size() == 1 ? segments[0] : vcat(segments);

  Tensor pos = sinusoid_table(seq.length(), static_cast<std::size_t>(cfg.d_llm));
  for (double& v : pos.data) v *= kLlmPosScale;
  x = add(x, Var::constant(std::move(pos)));

  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "llm.l" + std::to_string(l);
    const std::string lp = "lora.l" + std::to_string(l);
    model_detail::AttnWeights w{
        use_lora ? model_detail::lora_adjusted(store, p + ".attn.wq", lp + ".q",
                                               lora.scaling())
                 : store.at(p + ".attn.wq"),
        store.at(p + ".attn.bq"),
        store.at(p + ".attn.wk"),
        store.at(p + ".attn.bk"),
        use_lora ? model_detail::lora_adjusted(store, p + ".attn.wv", lp + ".v",
                                               lora.scaling())
                 : store.at(p + ".attn.wv"),
        store.at(p + ".attn.bv"),
        store.at(p + ".attn.wo"),
        store.at(p + ".attn.bo")};
    Var h = layer_norm(x, store.at(p + ".ln1.g"), store.at(p + ".ln1.b"));
    h = model_detail::attention_block(h, w, cfg.n_heads, /*causal=*/true);
    x = add(x, h);
    Var f = layer_norm(x, store.at(p + ".ln2.g"), store.at(p + ".ln2.b"));
    f = add_rowvec(matmul(f, store.at(p + ".ffn.fc1.w")),
                   store.at(p + ".ffn.fc1.b"));
    f = gelu(f);
    f = add_rowvec(matmul(f, store.at(p + ".ffn.fc2.w")),
                   store.at(p + ".ffn.fc2.b"));
    x = add(x, f);
  }
  x = layer_norm(x, store.at("llm.lnf.g"), store.at("llm.lnf.b"));
  return matmul_nt(x, embed);  // tied unembedding
}

// Tensor-in/tensor-out convenience for decoding paths.
inline Tensor lm_forward(const PackedSequence& seq, const Tensor& audio,
                         const ParamStore& store, const LlmConfig& cfg,
                         const LoraConfig& lora, bool use_lora) {
  return lm_forward(seq, Var::constant(audio), store, cfg, lora, use_lora)
      .value();
}

// Folds every LoRA delta into its base projection and drops the LoRA
// group: W <- W + (alpha/r) B A. Forwarding the merged store without LoRA
// matches the unmerged store with LoRA up to rounding.
inline ParamStore lora_merge(const ParamStore& store, const LlmConfig& cfg,
                             const LoraConfig& lora) {
  cfg.validate();
  lora.validate();
  ParamStore merged;
  for (const auto& [name, var] : store) {
    const std::string& group = store.group(name);
    if (group == "llm_lora") continue;
    merged.insert(name, group, var.value());
  }
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "llm.l" + std::to_string(l);
    const std::string lp = "lora.l" + std::to_string(l);
    for (const auto& [proj, w_name] :
         {std::pair{std::string(".q"), p + ".attn.wq"},
          std::pair{std::string(".v"), p + ".attn.wv"}}) {
      if (!store.has(lp + proj + ".a") || !store.has(lp + proj + ".b"))
        throw MissingLoraFactors("lora_merge: missing factors " + lp + proj);
      const Tensor& a = store.at(lp + proj + ".a").value();
      const Tensor& b = store.at(lp + proj + ".b").value();
      Tensor delta = mm_nn(b, a);
      Tensor w = store.at(w_name).value();
      for (std::size_t i = 0; i < w.size(); ++i)
        w.data[i] += lora.scaling() * delta.data[i];
      merged.load_tensor(w_name, w);
    }
  }
  return merged;
}

// "Transcribe the <lang> speech:" with the language code substituted.
inline std::string render_prompt(const std::string& tmpl,
                                 const std::string& lang) {
  std::string out = tmpl;
  const std::string key = "<lang>";
  const auto at = out.find(key);
  if (at != std::string::npos) out.replace(at, key.size(), lang);
  return out;
}

}  // namespace triplex
