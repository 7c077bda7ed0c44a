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
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "triplex/pipeline.hpp"
#include "triplex/wer.hpp"

namespace triplex {

// A beam-search candidate; tokens are the generated ids only (no prefix).
struct Hypothesis {
  std::vector<int> tokens;
  double logprob = 0.0;
  bool finished = false;

  double score(double length_penalty) const {
    return logprob + length_penalty * static_cast<double>(tokens.size());
  }
};

// Next-token distribution given the generated ids so far; must return
// normalized log probabilities over the full vocabulary.
using StepFn = std::function<std::vector<double>(const std::vector<int>&)>;

namespace beam_detail {

// tie-break: lower token id at the first difference, then shorter length
inline bool tokens_less(const std::vector<int>& a, const std::vector<int>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace beam_detail

// Standard beam search. Every step expands each unfinished hypothesis
// with all vocab tokens; finished hypotheses stay in the pool and compete
// by cumulative log probability. A hypothesis finishes on EOS or at
// max_len. Ties break on lower token id, then shorter length. The result
// is sorted by logprob + length_penalty * length.
inline std::vector<Hypothesis> beam_search(const StepFn& step_fn, int vocab,
                                           int eos_id,
                                           const DecodeConfig& config) {
  config.validate();
  if (vocab < 1) throw ConfigError("beam_search: empty vocabulary");
  const auto beam_width = static_cast<std::size_t>(config.beam_size);

  auto rank_less = [](const Hypothesis& a, const Hypothesis& b) {
    if (a.logprob != b.logprob) return a.logprob > b.logprob;
    return beam_detail::tokens_less(a.tokens, b.tokens);
  };

  std::vector<Hypothesis> beam = {Hypothesis{}};
  for (int step = 0; step < config.max_len; ++step) {
    bool any_open = false;
    for (const auto& h : beam) any_open = any_open || !h.finished;
    if (!any_open) break;

    std::vector<Hypothesis> candidates;
    candidates.reserve(beam.size() * static_cast<std::size_t>(vocab));
    for (const auto& h : beam) {
      if (h.finished) {
        candidates.push_back(h);
        continue;
      }
      const std::vector<double> lp = step_fn(h.tokens);
      if (static_cast<int>(lp.size()) != vocab)
        throw ShapeMismatch("beam_search: step function returned " +
                            std::to_string(lp.size()) + " logprobs, expected " +
                            std::to_string(vocab));
      for (int v = 0; v < vocab; ++v) {
        Hypothesis nh = h;
        nh.tokens.push_back(v);
        nh.logprob += lp[static_cast<std::size_t>(v)];
        nh.finished = (v == eos_id) ||
                      (static_cast<int>(nh.tokens.size()) >= config.max_len);
        candidates.push_back(std::move(nh));
      }
    }
    std::sort(candidates.begin(), candidates.end(), rank_less);
    if (candidates.size() > beam_width) candidates.resize(beam_width);
    beam = std::move(candidates);
  }

  if (beam.empty()) throw EmptyBeam("beam_search: empty beam");
  std::sort(beam.begin(), beam.end(), [&](const Hypothesis& a, const Hypothesis& b) {
    const double sa = a.score(config.length_penalty);
    const double sb = b.score(config.length_penalty);
    if (sa != sb) return sa > sb;
    return beam_detail::tokens_less(a.tokens, b.tokens);
  });
  return beam;
}

struct TranscribeResult {
  std::string text;
  double score = 0.0;
};

// Full decode path: frontend without augmentation, encoder, adapter,
// prompt prefix, beam search, detokenize. Pure in (audio, model, config).
inline TranscribeResult transcribe(const AudioBuffer& audio,
                                   const std::string& lang,
                                   const Pipeline& pipeline,
                                   const DecodeConfig& config) {
  const MelSpectrogram mel = log_mel_spectrogram(audio, pipeline.cfg.frontend);
  const Var rows =
      forward_audio(Var::constant(mel.frames), pipeline.params, pipeline.cfg);
  const Tensor& audio_rows = rows.value();

  const std::vector<int> prompt = pipeline.tokenizer.tokenize(
      render_prompt(pipeline.cfg.prompt_template, lang));
  const PackedSequence prefix = build_packed_sequence(
      prompt, audio_rows.dims[0], std::nullopt, pipeline.cfg.llm.max_seq);

  const int vocab = pipeline.tokenizer.vocab_size();
  StepFn step_fn = [&](const std::vector<int>& generated) {
    PackedSequence seq = prefix;
    for (int id : generated) seq.positions.push_back({false, id, 0});
    seq.targets.resize(seq.positions.size(), -1);
    seq.loss_mask.resize(seq.positions.size(), false);
    if (seq.positions.size() > static_cast<std::size_t>(pipeline.cfg.llm.max_seq))
      throw SequenceTooLong("decode: sequence exceeds max_seq");
    const Tensor logits = lm_forward(seq, audio_rows, pipeline.params,
                                     pipeline.cfg.llm, pipeline.cfg.lora,
                                     /*use_lora=*/true);
    const std::size_t last = logits.dims[0] - 1;
    return log_softmax_row(logits.data.data() + last * logits.dims[1],
                           logits.dims[1]);
  };

  const std::vector<Hypothesis> hyps =
      beam_search(step_fn, vocab, Tokenizer::kEos, config);
  TranscribeResult out;
  out.text = pipeline.tokenizer.detokenize(hyps.front().tokens);
  out.score = hyps.front().score(config.length_penalty);
  return out;
}

// Decodes a whole manifest; output order equals manifest order.
inline std::vector<std::string> decode_corpus(
    const std::vector<ManifestEntry>& entries, const Pipeline& pipeline,
    const DecodeConfig& config) {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    const AudioBuffer audio = load_wav(e.audio);
    out.push_back(transcribe(audio, e.lang, pipeline, config).text);
  }
  return out;
}

struct AblationRow {
  std::string system;
  int beam = 0;
  double wer_percent = 0.0;
};

// Beam-size ablation over an evaluation manifest: one decode+score run
// per size, reported as the (System, beam size, WER%) table.
inline std::vector<AblationRow> ablate_beam(const Pipeline& pipeline,
                                            const std::vector<ManifestEntry>& entries,
                                            const std::vector<int>& sizes,
                                            const DecodeConfig& base_config,
                                            const std::string& system_name) {
  if (sizes.empty()) throw ConfigError("ablate: no beam sizes given");
  std::vector<AblationRow> rows;
  for (int size : sizes) {
    DecodeConfig cfg = base_config;
    cfg.beam_size = size;
    const std::vector<std::string> hyps = decode_corpus(entries, pipeline, cfg);
    const WerReport report = score_corpus(entries, hyps);
    rows.push_back({system_name, size, report.overall.wer_percent()});
  }
  return rows;
}

inline std::string render_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "System        beam size  WER (%)\n";
  for (const auto& r : rows)
    os << std::left << std::setw(14) << r.system << std::setw(11) << r.beam
       << r.wer_percent << "\n";
  return os.str();
}

inline std::string render_ablation_jsonl(const std::vector<AblationRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    nlohmann::json j;
    j["system"] = r.system;
    j["beam"] = r.beam;
    j["wer"] = r.wer_percent;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace triplex
