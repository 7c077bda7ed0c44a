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

#include <filesystem>
#include <string>
#include <vector>

#include "triplex/audio.hpp"
#include "triplex/errors.hpp"
#include "triplex/manifest.hpp"
#include "triplex/rng.hpp"

namespace triplex {

// Synthetic tone-code corpus: every character maps to one sine frequency
// and plays for 100 ms, so an utterance is a readable "melody" of its
// transcript. Two pseudo-languages share the generator: "en" uses space-
// separated words over {a..d}, "ko" uses continuous strings over {e..h}
// (scored per character downstream). All tone frequencies sit on DFT bin
// centers of the 25 ms window to keep the mel peak crisp.

inline const std::string& synth_alphabet() {
  static const std::string chars = " abcdefgh";
  return chars;
}

constexpr double kSynthToneSeconds = 0.1;
constexpr int kSynthSampleRate = 16000;
constexpr double kSynthAmplitude = 0.4;

// 400, 520, 640, ... Hz: multiples of 40 Hz = the bin width of a 400-point
// DFT at 16 kHz.
inline double synth_char_frequency(char c) {
  const auto& chars = synth_alphabet();
  const auto idx = chars.find(c);
  if (idx == std::string::npos)
    throw UnknownCharacter(std::string("no tone frequency for character '") + c +
                           "'");
  return 400.0 + 120.0 * static_cast<double>(idx);
}

inline AudioBuffer synth_utterance_audio(const std::string& text) {
  const auto tone_len =
      static_cast<std::size_t>(kSynthToneSeconds * kSynthSampleRate);
  AudioBuffer audio;
  audio.sample_rate = kSynthSampleRate;
  audio.samples.reserve(text.size() * tone_len);
  for (char c : text) {
    const double freq = synth_char_frequency(c);
    for (std::size_t i = 0; i < tone_len; ++i) {
      const double t = static_cast<double>(i) / kSynthSampleRate;
      audio.samples.push_back(kSynthAmplitude *
                              std::sin(2.0 * M_PI * freq * t));
    }
  }
  return audio;
}

inline std::string synth_transcript(Rng& rng, const std::string& lang) {
  std::string text;
  if (lang == "en") {
    const int words = 2;
    for (int w = 0; w < words; ++w) {
      if (w > 0) text.push_back(' ');
      const auto len = static_cast<int>(rng.range_int(2, 3));
      for (int i = 0; i < len; ++i)
        text.push_back(static_cast<char>('a' + rng.below(4)));
    }
  } else {
    const auto len = static_cast<int>(rng.range_int(4, 6));
    for (int i = 0; i < len; ++i)
      text.push_back(static_cast<char>('e' + rng.below(4)));
  }
  return text;
}

// Writes wav/utt_NNNN.wav files plus train.jsonl (audio paths relative to
// the manifest). Byte-identical output for a given (n_utts, seed).
inline std::vector<ManifestEntry> synth_corpus(const std::string& out_dir,
                                               std::size_t n_utts,
                                               std::uint64_t seed) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "wav", ec);
  if (ec) throw IoFailure("cannot create " + out_dir + ": " + ec.message());

  Rng rng(derive_seed(seed, "synth"));
  std::vector<ManifestEntry> rel_entries, abs_entries;
  for (std::size_t i = 0; i < n_utts; ++i) {
    const std::string lang = (i % 2 == 0) ? "en" : "ko";
    const std::string text = synth_transcript(rng, lang);
    char name[32];
    std::snprintf(name, sizeof(name), "utt_%04zu.wav", i);
    const std::string rel = std::string("wav/") + name;
    const std::string abs = (fs::path(out_dir) / rel).string();
    save_wav(synth_utterance_audio(text), abs);
    rel_entries.push_back({rel, text, lang});
    abs_entries.push_back({abs, text, lang});
  }
  save_manifest(rel_entries, (fs::path(out_dir) / "train.jsonl").string());
  return abs_entries;
}

}  // namespace triplex
