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

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "triplex/adapter.hpp"
#include "triplex/encoder.hpp"
#include "triplex/errors.hpp"
#include "triplex/frontend.hpp"
#include "triplex/llm.hpp"

namespace triplex {

// -------------------------------------------------------------------------
// flat key=value text format; '#' starts a comment, blank lines ignored
// -------------------------------------------------------------------------

inline std::map<std::string, std::string> parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t b = line.find_first_not_of(" \t");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto eq = line.find('=', b);
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key=value, got \"" + line + "\"");
    std::string key = line.substr(b, eq - b);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t'))
      key.pop_back();
    if (key.empty())
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (out.count(key))
      throw ConfigError("config: duplicate key " + key);
    out[key] = line.substr(eq + 1);
  }
  return out;
}

inline std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw MissingFile("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_kv_text(ss.str());
}

inline std::string render_kv(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

// Typed access over a parsed key=value map; every key must be consumed or
// finish() reports it as unknown.
class KvReader {
 public:
  explicit KvReader(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& dflt) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    consumed_.insert(key);
    return it->second;
  }

  long long get_int(const std::string& key, long long dflt) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    consumed_.insert(key);
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: key " + key + " expects an integer, got \"" +
                        it->second + "\"");
    }
  }

  double get_double(const std::string& key, double dflt) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    consumed_.insert(key);
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: key " + key + " expects a number, got \"" +
                        it->second + "\"");
    }
  }

  bool get_bool(const std::string& key, bool dflt) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    consumed_.insert(key);
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config: key " + key + " expects true/false, got \"" +
                      it->second + "\"");
  }

  void ignore_prefix(const std::string& prefix) {
    for (const auto& [k, v] : kv_)
      if (k.rfind(prefix, 0) == 0) consumed_.insert(k);
  }

  void finish() const {
    for (const auto& [k, v] : kv_)
      if (!consumed_.count(k)) throw ConfigError("config: unknown key " + k);
  }

 private:
  std::map<std::string, std::string> kv_;
  std::set<std::string> consumed_;
};

// -------------------------------------------------------------------------
// configuration aggregates
// -------------------------------------------------------------------------

struct DecodeConfig {
  int beam_size = 8;
  int max_len = 64;
  double length_penalty = 0.0;

  void validate() const {
    if (beam_size < 1) throw ConfigError("decode: beam_size must be >= 1");
    if (max_len < 1) throw ConfigError("decode: max_len must be >= 1");
  }
};

// Everything that defines the model itself; stored verbatim in checkpoint
// snapshots so decoding needs nothing but the checkpoint.
struct PipelineConfig {
  FrontendConfig frontend;
  EncoderConfig encoder;
  AdapterConfig adapter;
  LlmConfig llm;
  LoraConfig lora;
  SpecAugPolicy specaug;
  std::string prompt_template = "Transcribe the <lang> speech:";

  // linked dims: the adapter bridges encoder output to LLM input
  void finalize() {
    encoder.n_mels = frontend.n_mels;
    adapter.d_in = encoder.d_model;
    adapter.d_llm = llm.d_llm;
    frontend.validate();
    encoder.validate();
    adapter.validate();
    llm.validate();
    lora.validate();
    specaug.validate();
  }

  void apply(KvReader& r) {
    frontend.sample_rate = static_cast<int>(r.get_int("frontend.sample_rate", frontend.sample_rate));
    frontend.window_ms = static_cast<int>(r.get_int("frontend.window_ms", frontend.window_ms));
    frontend.hop_ms = static_cast<int>(r.get_int("frontend.hop_ms", frontend.hop_ms));
    frontend.n_fft = static_cast<int>(r.get_int("frontend.n_fft", frontend.n_fft));
    frontend.n_mels = static_cast<int>(r.get_int("frontend.n_mels", frontend.n_mels));
    frontend.log_floor = r.get_double("frontend.log_floor", frontend.log_floor);
    encoder.d_model = static_cast<int>(r.get_int("encoder.d_model", encoder.d_model));
    encoder.n_layers = static_cast<int>(r.get_int("encoder.n_layers", encoder.n_layers));
    encoder.n_heads = static_cast<int>(r.get_int("encoder.n_heads", encoder.n_heads));
    encoder.conv_stride = static_cast<int>(r.get_int("encoder.conv_stride", encoder.conv_stride));
    encoder.ff_mult = static_cast<int>(r.get_int("encoder.ff_mult", encoder.ff_mult));
    encoder.max_frames = static_cast<int>(r.get_int("encoder.max_frames", encoder.max_frames));
    encoder.dropout = r.get_double("encoder.dropout", encoder.dropout);
    adapter.splice_k = static_cast<int>(r.get_int("adapter.splice_k", adapter.splice_k));
    adapter.d_hidden = static_cast<int>(r.get_int("adapter.d_hidden", adapter.d_hidden));
    llm.d_llm = static_cast<int>(r.get_int("llm.d_llm", llm.d_llm));
    llm.n_layers = static_cast<int>(r.get_int("llm.n_layers", llm.n_layers));
    llm.n_heads = static_cast<int>(r.get_int("llm.n_heads", llm.n_heads));
    llm.max_seq = static_cast<int>(r.get_int("llm.max_seq", llm.max_seq));
    llm.ff_mult = static_cast<int>(r.get_int("llm.ff_mult", llm.ff_mult));
    lora.rank = static_cast<int>(r.get_int("lora.rank", lora.rank));
    lora.alpha = r.get_double("lora.alpha", lora.alpha);
    specaug.num_freq_masks = static_cast<int>(r.get_int("augment.num_freq_masks", specaug.num_freq_masks));
    specaug.max_freq_width = static_cast<int>(r.get_int("augment.max_freq_width", specaug.max_freq_width));
    specaug.num_time_masks = static_cast<int>(r.get_int("augment.num_time_masks", specaug.num_time_masks));
    specaug.max_time_width = static_cast<int>(r.get_int("augment.max_time_width", specaug.max_time_width));
    specaug.mask_value = r.get_double("augment.mask_value", specaug.mask_value);
    prompt_template = r.get_str("prompt.template", prompt_template);
    finalize();
  }

  std::map<std::string, std::string> to_map() const {
    auto num = [](double v) {
      std::ostringstream os;
      os.precision(17);
      os << v;
      return os.str();
    };
    std::map<std::string, std::string> m;
    m["frontend.sample_rate"] = std::to_string(frontend.sample_rate);
    m["frontend.window_ms"] = std::to_string(frontend.window_ms);
    m["frontend.hop_ms"] = std::to_string(frontend.hop_ms);
    m["frontend.n_fft"] = std::to_string(frontend.n_fft);
    m["frontend.n_mels"] = std::to_string(frontend.n_mels);
    m["frontend.log_floor"] = num(frontend.log_floor);
    m["encoder.d_model"] = std::to_string(encoder.d_model);
    m["encoder.n_layers"] = std::to_string(encoder.n_layers);
    m["encoder.n_heads"] = std::to_string(encoder.n_heads);
    m["encoder.conv_stride"] = std::to_string(encoder.conv_stride);
    m["encoder.ff_mult"] = std::to_string(encoder.ff_mult);
    m["encoder.max_frames"] = std::to_string(encoder.max_frames);
    m["encoder.dropout"] = num(encoder.dropout);
    m["adapter.splice_k"] = std::to_string(adapter.splice_k);
    m["adapter.d_hidden"] = std::to_string(adapter.d_hidden);
    m["llm.d_llm"] = std::to_string(llm.d_llm);
    m["llm.n_layers"] = std::to_string(llm.n_layers);
    m["llm.n_heads"] = std::to_string(llm.n_heads);
    m["llm.max_seq"] = std::to_string(llm.max_seq);
    m["llm.ff_mult"] = std::to_string(llm.ff_mult);
    m["lora.rank"] = std::to_string(lora.rank);
    m["lora.alpha"] = num(lora.alpha);
    m["augment.num_freq_masks"] = std::to_string(specaug.num_freq_masks);
    m["augment.max_freq_width"] = std::to_string(specaug.max_freq_width);
    m["augment.num_time_masks"] = std::to_string(specaug.num_time_masks);
    m["augment.max_time_width"] = std::to_string(specaug.max_time_width);
    m["augment.mask_value"] = num(specaug.mask_value);
    m["prompt.template"] = prompt_template;
    return m;
  }
};

// Per-stage training schedule. The trainable set is fixed by the stage:
// stage 1 trains {encoder, heads}, stage 2 trains {adapter} with the
// encoder frozen, stage 3 trains {adapter, llm_lora} with encoder and
// llm_core frozen.
struct StageConfig {
  int stage = 1;
  double lr = 1e-3;
  long long warmup_steps = 0;
  long long max_steps = 100;
  int batch_size = 4;
  bool augment = true;
  std::uint64_t seed = 7;

  std::set<std::string> trainable_groups() const {
    switch (stage) {
      case 1: return {"encoder", "heads"};
      case 2: return {"adapter"};
      case 3: return {"adapter", "llm_lora"};
      default: throw ConfigError("stage must be 1, 2, or 3");
    }
  }

  void validate() const {
    trainable_groups();
    if (lr <= 0.0) throw ConfigError("stage: lr must be > 0");
    if (max_steps < 0) throw ConfigError("stage: max_steps must be >= 0");
    if (batch_size < 1) throw ConfigError("stage: batch_size must be >= 1");
    if (warmup_steps < 0) throw ConfigError("stage: warmup_steps must be >= 0");
  }

  void apply(KvReader& r) {
    const std::string p = "stage" + std::to_string(stage) + ".";
    lr = r.get_double(p + "lr", lr);
    warmup_steps = r.get_int(p + "warmup_steps", warmup_steps);
    max_steps = r.get_int(p + "max_steps", max_steps);
    batch_size = static_cast<int>(r.get_int(p + "batch_size", batch_size));
    augment = r.get_bool(p + "augment", augment);
    validate();
  }

  std::map<std::string, std::string> to_map() const {
    std::ostringstream lr_os;
    lr_os.precision(17);
    lr_os << lr;
    std::map<std::string, std::string> m;
    m["stage.id"] = std::to_string(stage);
    m["stage.lr"] = lr_os.str();
    m["stage.warmup_steps"] = std::to_string(warmup_steps);
    m["stage.max_steps"] = std::to_string(max_steps);
    m["stage.batch_size"] = std::to_string(batch_size);
    m["stage.augment"] = augment ? "true" : "false";
    m["stage.seed"] = std::to_string(seed);
    return m;
  }
};

// Full CLI configuration file.
struct RunConfig {
  std::uint64_t seed = 7;
  std::string train_manifest;
  PipelineConfig pipeline;
  StageConfig stage1, stage2, stage3;
  DecodeConfig decode;
};

inline RunConfig parse_run_config(const std::string& path) {
  KvReader r(parse_kv_file(path));
  RunConfig cfg;
  cfg.stage1.stage = 1;
  cfg.stage2.stage = 2;
  cfg.stage3.stage = 3;
  // defaults echo the three-stage schedule: stage 3 refines at a reduced lr
  cfg.stage2.lr = 2e-3;
  cfg.stage3.lr = 2e-4;
  cfg.seed = static_cast<std::uint64_t>(r.get_int("seed", static_cast<long long>(cfg.seed)));
  cfg.train_manifest = r.get_str("data.train_manifest", "");
  cfg.pipeline.apply(r);
  cfg.stage1.apply(r);
  cfg.stage2.apply(r);
  cfg.stage3.apply(r);
  cfg.stage1.seed = cfg.stage2.seed = cfg.stage3.seed = cfg.seed;
  cfg.decode.beam_size = static_cast<int>(r.get_int("decode.beam_size", cfg.decode.beam_size));
  cfg.decode.max_len = static_cast<int>(r.get_int("decode.max_len", cfg.decode.max_len));
  cfg.decode.length_penalty = r.get_double("decode.length_penalty", cfg.decode.length_penalty);
  cfg.decode.validate();
  r.finish();
  return cfg;
}

// TRIPLEX_SEED env var overrides the config seed everywhere.
inline void apply_seed_override(RunConfig& cfg) {
  if (const char* env = std::getenv("TRIPLEX_SEED")) {
    const auto s = static_cast<std::uint64_t>(std::stoull(env));
    cfg.seed = s;
    cfg.stage1.seed = cfg.stage2.seed = cfg.stage3.seed = s;
  }
}

}  // namespace triplex
