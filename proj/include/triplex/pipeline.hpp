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

#include <set>
#include <string>
#include <vector>

#include "triplex/adapter.hpp"
#include "triplex/checkpoint.hpp"
#include "triplex/config.hpp"
#include "triplex/encoder.hpp"
#include "triplex/llm.hpp"
#include "triplex/manifest.hpp"
#include "triplex/tokenizer.hpp"

namespace triplex {

// Tokenizer for a training manifest: transcripts plus the rendered prompt
// for every language present, so prompts always tokenize. Deterministic
// for a given manifest + template.
inline Tokenizer tokenizer_for(const std::vector<ManifestEntry>& entries,
                               const std::string& prompt_template) {
  if (entries.empty()) throw EmptyCorpus("tokenizer: empty manifest");
  std::vector<std::string> texts;
  std::set<std::string> langs;
  for (const auto& e : entries) {
    texts.push_back(e.text);
    langs.insert(e.lang);
  }
  for (const auto& lang : langs)
    texts.push_back(render_prompt(prompt_template, lang));
  return build_tokenizer(texts);
}

// Stage-1 model: encoder plus a linear CTC head over vocab+1 classes
// (blank last). The head lives in group "heads" and is discarded after
// stage 1.
inline ParamStore build_stage1_model(const PipelineConfig& cfg, int vocab,
                                     std::uint64_t seed) {
  ParamStore store;
  init_encoder_params(store, cfg.encoder, seed);
  model_detail::insert_linear(store, "heads", "head.ctc",
                              static_cast<std::size_t>(cfg.encoder.d_model),
                              static_cast<std::size_t>(vocab) + 1, seed);
  return store;
}

// Full pipeline model: encoder, adapter, LLM core, LoRA factors.
inline ParamStore build_full_model(const PipelineConfig& cfg, int vocab,
                                   std::uint64_t seed) {
  ParamStore store;
  init_encoder_params(store, cfg.encoder, seed);
  init_adapter_params(store, cfg.adapter, seed);
  init_llm_params(store, cfg.llm, vocab, seed);
  init_lora_params(store, cfg.llm, cfg.lora, seed);
  return store;
}

// Copies every tensor of `group` from the checkpoint into the store; all
// of the group's tensors must be present.
inline void transplant_group(ParamStore& store, const Checkpoint& ckpt,
                             const std::string& group) {
  for (const auto& name : store.names_in_group(group)) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end())
      throw Corrupt("checkpoint lacks tensor " + name + " of group " + group);
    store.load_tensor(name, it->second);
  }
}

// A decodable model: config, tokenizer, weights.
struct Pipeline {
  PipelineConfig cfg;
  Tokenizer tokenizer;
  ParamStore params;
};

inline Checkpoint make_checkpoint(const ParamStore& params,
                                  const PipelineConfig& pcfg,
                                  const StageConfig& scfg, std::uint64_t step,
                                  const Tokenizer& tokenizer) {
  Checkpoint ckpt;
  ckpt.stage = static_cast<std::uint32_t>(scfg.stage);
  ckpt.step = step;
  ckpt.tokenizer_text = tokenizer.serialize();
  ckpt.tokenizer_hash = fnv1a64(ckpt.tokenizer_text);
  auto kv = pcfg.to_map();
  for (const auto& [k, v] : scfg.to_map()) kv[k] = v;
  ckpt.config_snapshot = render_kv(kv);
  ckpt.tensors = params.snapshot();
  return ckpt;
}

inline PipelineConfig pipeline_config_from_snapshot(const std::string& snapshot) {
  KvReader r(parse_kv_text(snapshot));
  PipelineConfig cfg;
  cfg.apply(r);
  r.ignore_prefix("stage.");
  r.finish();
  return cfg;
}

// Rebuilds a complete decodable pipeline from a checkpoint. Requires all
// full-model groups; a stage-1 checkpoint (encoder + CTC head only) is
// not decodable.
inline Pipeline pipeline_from_checkpoint(const Checkpoint& ckpt) {
  Pipeline p;
  p.cfg = pipeline_config_from_snapshot(ckpt.config_snapshot);
  if (ckpt.tokenizer_text.empty())
    throw Corrupt("checkpoint has no tokenizer; cannot decode");
  p.tokenizer = Tokenizer::deserialize(ckpt.tokenizer_text);
  p.params = build_full_model(p.cfg, p.tokenizer.vocab_size(), /*seed=*/0);
  for (const auto& group : {"encoder", "adapter", "llm_core", "llm_lora"})
    transplant_group(p.params, ckpt, group);
  return p;
}

// audio -> mel -> encoder -> splice -> adapter, the shared front half of
// training and decoding. Returns the LLM-space audio rows.
inline Var forward_audio(const Var& mel, const ParamStore& params,
                         const PipelineConfig& cfg,
                         const TrainContext& ctx = {}) {
  Var enc = encode(mel, params, cfg.encoder, ctx);
  Var spliced = frame_splice(enc, cfg.adapter.splice_k);
  return adapt(spliced, params, cfg.adapter);
}

}  // namespace triplex
