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
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "triplex/checkpoint.hpp"
#include "triplex/config.hpp"
#include "triplex/ctc.hpp"
#include "triplex/manifest.hpp"
#include "triplex/pipeline.hpp"

namespace triplex {

inline const std::vector<double>& speed_factors() {
  static const std::vector<double> f = {0.9, 1.0, 1.1};
  return f;
}

// One training draw: which utterance, at which speed, with which
// SpecAugment stream.
struct TrainItem {
  std::size_t index = 0;
  double speed_factor = 1.0;
  std::uint64_t specaug_seed = 0;
};

// Deterministic training stream: a fresh Fisher-Yates shuffle of the
// manifest per epoch, and when augmenting, a uniformly drawn speed factor
// plus a SpecAugment seed per item. Identical for a given (seed, n_items)
// regardless of how batches are consumed.
class BatchStream {
 public:
  BatchStream(std::size_t n_items, int batch_size, std::uint64_t seed,
              bool augment)
      : n_(n_items),
        batch_(batch_size),
        augment_(augment),
        seed_(seed),
        aug_rng_(derive_seed(seed, "augment")) {
    if (n_items == 0) throw EmptyCorpus("batch stream: no items");
    if (batch_size < 1) throw ConfigError("batch stream: batch_size must be >= 1");
    reshuffle();
  }

  TrainItem next_item() {
    if (pos_ >= order_.size()) reshuffle();
    TrainItem item;
    item.index = order_[pos_++];
    if (augment_) {
      item.speed_factor = speed_factors()[aug_rng_.below(speed_factors().size())];
      item.specaug_seed = aug_rng_.next_u64();
    }
    return item;
  }

  std::vector<TrainItem> next() {
    std::vector<TrainItem> batch;
    batch.reserve(static_cast<std::size_t>(batch_));
    for (int i = 0; i < batch_; ++i) batch.push_back(next_item());
    return batch;
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
    Rng rng(derive_seed(derive_seed(seed_, "epoch"), epoch_++));
    rng.shuffle(order_);
    pos_ = 0;
  }

  std::size_t n_;
  int batch_;
  bool augment_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  Rng aug_rng_;
};

inline BatchStream make_batches(const std::vector<ManifestEntry>& manifests,
                                int batch_size, std::uint64_t seed,
                                bool augment) {
  return BatchStream(manifests.size(), batch_size, seed, augment);
}

// Caches log-Mel features per (utterance, speed factor); SpecAugment is
// applied per item afterwards, so cached entries stay augmentation-free.
class FeatureCache {
 public:
  FeatureCache(const std::vector<ManifestEntry>& entries,
               const FrontendConfig& cfg)
      : entries_(entries), cfg_(cfg) {}

  const MelSpectrogram& mel(std::size_t index, double factor) {
    const auto key = std::make_pair(index, static_cast<int>(std::llround(factor * 100)));
    auto it = mels_.find(key);
    if (it != mels_.end()) return it->second;
    auto ait = audio_.find(index);
    if (ait == audio_.end())
      ait = audio_.emplace(index, load_wav(entries_.at(index).audio)).first;
    AudioBuffer buf = factor == 1.0 ? ait->second : speed_perturb(ait->second, factor);
    return mels_.emplace(key, log_mel_spectrogram(buf, cfg_)).first->second;
  }

 private:
  const std::vector<ManifestEntry>& entries_;
  FrontendConfig cfg_;
  std::map<std::size_t, AudioBuffer> audio_;
  std::map<std::pair<std::size_t, int>, MelSpectrogram> mels_;
};

// SpecAugment with the time-mask cap tied to the utterance length.
inline MelSpectrogram apply_item_augment(const MelSpectrogram& base,
                                         const SpecAugPolicy& policy,
                                         const TrainItem& item) {
  SpecAugPolicy p = policy;
  p.max_time_width = std::min(
      p.max_time_width,
      static_cast<int>(0.2 * static_cast<double>(base.num_frames())));
  return spec_augment(base, p, item.specaug_seed);
}

struct StepLog {
  long long step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepLog> log;
};

namespace trainer_detail {

// Gradient-accumulation training loop: batch_size items per optimizer
// step, loss averaged over the batch. Aborts on a non-finite loss.
inline std::vector<StepLog> run_loop(
    ParamStore& params, const StageConfig& scfg, std::size_t n_items,
    const std::function<Var(const TrainItem&, TrainContext&)>& item_loss) {
  BatchStream stream(n_items, scfg.batch_size, derive_seed(scfg.seed, "batches"),
                     scfg.augment);
  AdamState adam;
  adam.lr = scfg.lr;
  adam.warmup_steps = scfg.warmup_steps;

  std::vector<StepLog> log;
  for (long long step = 1; step <= scfg.max_steps; ++step) {
    Rng step_rng(derive_seed(derive_seed(scfg.seed, "dropout"), static_cast<std::uint64_t>(step)));
    TrainContext ctx{/*training=*/true, &step_rng};
    params.zero_grads();
    Var total;
    for (const TrainItem& item : stream.next()) {
      Var l = item_loss(item, ctx);
      total = total.defined() ? add(total, l) : l;
    }
    Var loss = scale(total, 1.0 / static_cast<double>(scfg.batch_size));
    const double loss_value = loss.value().item();
    if (!std::isfinite(loss_value))
      throw DivergedLoss("training diverged (non-finite loss) at step " +
                             std::to_string(step),
                         step);
    backward(loss);
    adam_step(params, params.collect_grads(), adam);
    log.push_back({step, loss_value, adam.effective_lr(adam.step)});
  }
  return log;
}

inline void set_stage_trainable(ParamStore& params, const StageConfig& scfg) {
  params.freeze_all();
  for (const auto& g : scfg.trainable_groups()) {
    // stage-1 models have no adapter/llm groups to toggle
    bool present = !params.names_in_group(g).empty();
    if (present) params.set_trainable(g, true);
  }
}

inline double init_lr_from_snapshot(const Checkpoint& ckpt) {
  KvReader r(parse_kv_text(ckpt.config_snapshot));
  const double lr = r.get_double("stage.lr", -1.0);
  if (lr <= 0.0) throw Corrupt("init checkpoint lacks a stage.lr record");
  return lr;
}

}  // namespace trainer_detail

// Stage 1: pre-train the encoder with a linear CTC head on character
// targets. The checkpoint's encoder group seeds the later stages; the
// head is discarded there.
inline TrainResult run_stage1(const std::vector<ManifestEntry>& manifests,
                              const PipelineConfig& pcfg,
                              const StageConfig& scfg) {
  if (scfg.stage != 1) throw ConfigError("run_stage1: config stage != 1");
  scfg.validate();
  if (manifests.empty()) throw EmptyCorpus("stage 1: empty manifest");

  const Tokenizer tokenizer = tokenizer_for(manifests, pcfg.prompt_template);
  const int vocab = tokenizer.vocab_size();
  ParamStore params =
      build_stage1_model(pcfg, vocab, derive_seed(scfg.seed, "stage1.init"));
  trainer_detail::set_stage_trainable(params, scfg);

  std::vector<std::vector<int>> targets;
  targets.reserve(manifests.size());
  for (const auto& e : manifests) targets.push_back(tokenizer.tokenize(e.text));

  FeatureCache cache(manifests, pcfg.frontend);
  auto item_loss = [&](const TrainItem& item, TrainContext& ctx) {
    MelSpectrogram mel = cache.mel(item.index, item.speed_factor);
    if (scfg.augment) mel = apply_item_augment(mel, pcfg.specaug, item);
    Var enc = encode(Var::constant(mel.frames), params, pcfg.encoder, ctx);
    Var logits =
        add_rowvec(matmul(enc, params.at("head.ctc.w")), params.at("head.ctc.b"));
    return ctc_loss(logits, targets[item.index], /*blank=*/vocab);
  };

  TrainResult result;
  result.log = trainer_detail::run_loop(params, scfg, manifests.size(), item_loss);
  result.checkpoint = make_checkpoint(params, pcfg, scfg,
                                      static_cast<std::uint64_t>(scfg.max_steps),
                                      tokenizer);
  return result;
}

namespace trainer_detail {

// Shared stage-2/3 objective: full pipeline forward, cross entropy only
// at transcription positions.
struct FullModelTrainer {
  const std::vector<ManifestEntry>& manifests;
  const PipelineConfig& pcfg;
  const Tokenizer& tokenizer;
  ParamStore& params;
  bool use_lora;
  FeatureCache cache;
  std::map<std::string, std::vector<int>> prompt_ids;
  std::vector<std::vector<int>> target_ids;

  FullModelTrainer(const std::vector<ManifestEntry>& m, const PipelineConfig& p,
                   const Tokenizer& t, ParamStore& ps, bool lora)
      : manifests(m), pcfg(p), tokenizer(t), params(ps), use_lora(lora),
        cache(m, p.frontend) {
    for (const auto& e : m) {
      if (!prompt_ids.count(e.lang))
        prompt_ids[e.lang] =
            tokenizer.tokenize(render_prompt(p.prompt_template, e.lang));
      target_ids.push_back(tokenizer.tokenize(e.text));
    }
  }

  Var operator()(const TrainItem& item, TrainContext& ctx) {
    const ManifestEntry& entry = manifests[item.index];
    MelSpectrogram mel = cache.mel(item.index, item.speed_factor);
    if (augment) mel = apply_item_augment(mel, pcfg.specaug, item);
    Var audio_rows = forward_audio(Var::constant(mel.frames), params, pcfg, ctx);
    PackedSequence seq = build_packed_sequence(
        prompt_ids.at(entry.lang), audio_rows.value().dims[0],
        target_ids[item.index], pcfg.llm.max_seq);
    Var logits = lm_forward(seq, audio_rows, params, pcfg.llm, pcfg.lora, use_lora);
    return masked_cross_entropy(logits, seq.targets, seq.loss_mask);
  }

  bool augment = true;
};

}  // namespace trainer_detail

// Stage 2: freeze the transplanted encoder, train the adapter to align
// encoder output with the LLM embedding space. The LLM runs without LoRA.
inline TrainResult run_stage2(const std::vector<ManifestEntry>& manifests,
                              const PipelineConfig& pcfg, const StageConfig& scfg,
                              const Checkpoint& init) {
  if (scfg.stage != 2) throw ConfigError("run_stage2: config stage != 2");
  scfg.validate();
  if (manifests.empty()) throw EmptyCorpus("stage 2: empty manifest");

  const Tokenizer tokenizer = tokenizer_for(manifests, pcfg.prompt_template);
  ParamStore params = build_full_model(pcfg, tokenizer.vocab_size(),
                                       derive_seed(scfg.seed, "stage2.init"));
  transplant_group(params, init, "encoder");
  trainer_detail::set_stage_trainable(params, scfg);

  trainer_detail::FullModelTrainer trainer(manifests, pcfg, tokenizer, params,
                                           /*lora=*/false);
  trainer.augment = scfg.augment;
  auto item_loss = [&](const TrainItem& item, TrainContext& ctx) {
    return trainer(item, ctx);
  };

  TrainResult result;
  result.log = trainer_detail::run_loop(params, scfg, manifests.size(), item_loss);
  result.checkpoint = make_checkpoint(params, pcfg, scfg,
                                      static_cast<std::uint64_t>(scfg.max_steps),
                                      tokenizer);
  return result;
}

// Stage 3: joint adapter + LoRA refinement at a learning rate strictly
// below the init checkpoint's, with encoder and LLM core frozen. The
// tokenizer is inherited from the init checkpoint so the LLM embedding
// stays compatible.
inline TrainResult run_stage3(const std::vector<ManifestEntry>& manifests,
                              const PipelineConfig& pcfg, const StageConfig& scfg,
                              const Checkpoint& init) {
  if (scfg.stage != 3) throw ConfigError("run_stage3: config stage != 3");
  scfg.validate();
  if (manifests.empty()) throw EmptyCorpus("stage 3: empty manifest");
  if (init.stage < 2)
    throw ConfigError("stage 3 must start from a stage-2 (or later) checkpoint");
  const double init_lr = trainer_detail::init_lr_from_snapshot(init);
  if (scfg.lr >= init_lr)
    throw LrNotReduced("stage-3 lr " + std::to_string(scfg.lr) +
                       " must be strictly below the previous stage's " +
                       std::to_string(init_lr));

  if (init.tokenizer_text.empty())
    throw Corrupt("init checkpoint has no tokenizer");
  const Tokenizer tokenizer = Tokenizer::deserialize(init.tokenizer_text);
  ParamStore params = build_full_model(pcfg, tokenizer.vocab_size(),
                                       derive_seed(scfg.seed, "stage3.init"));
  for (const auto& group : {"encoder", "adapter", "llm_core", "llm_lora"})
    transplant_group(params, init, group);
  trainer_detail::set_stage_trainable(params, scfg);

  trainer_detail::FullModelTrainer trainer(manifests, pcfg, tokenizer, params,
                                           /*lora=*/true);
  trainer.augment = scfg.augment;
  auto item_loss = [&](const TrainItem& item, TrainContext& ctx) {
    return trainer(item, ctx);
  };

  TrainResult result;
  result.log = trainer_detail::run_loop(params, scfg, manifests.size(), item_loss);
  result.checkpoint = make_checkpoint(params, pcfg, scfg,
                                      static_cast<std::uint64_t>(scfg.max_steps),
                                      tokenizer);
  return result;
}

}  // namespace triplex
