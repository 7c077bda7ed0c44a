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
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "triplex/errors.hpp"
#include "triplex/rng.hpp"

namespace triplex {

// UTF-8 <-> codepoint helpers. Transcripts are treated as sequences of
// Unicode codepoints; invalid byte sequences are rejected.

inline std::vector<char32_t> utf8_decode(const std::string& s) {
  std::vector<char32_t> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len;
    char32_t cp;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xe0) == 0xc0) {
      len = 2;
      cp = b0 & 0x1f;
    } else if ((b0 & 0xf0) == 0xe0) {
      len = 3;
      cp = b0 & 0x0f;
    } else if ((b0 & 0xf8) == 0xf0) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      throw UnknownCharacter("invalid utf-8 lead byte");
    }
    if (i + len > s.size()) throw UnknownCharacter("truncated utf-8 sequence");
    for (std::size_t k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xc0) != 0x80)
        throw UnknownCharacter("invalid utf-8 continuation byte");
      cp = (cp << 6) | (b & 0x3f);
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

inline void utf8_append(std::string& s, char32_t cp) {
  if (cp < 0x80) {
    s.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    s.push_back(static_cast<char>(0xc0 | (cp >> 6)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else if (cp < 0x10000) {
    s.push_back(static_cast<char>(0xe0 | (cp >> 12)));
    s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else {
    s.push_back(static_cast<char>(0xf0 | (cp >> 18)));
    s.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
    s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  }
}

inline std::string utf8_encode(char32_t cp) {
  std::string s;
  utf8_append(s, cp);
  return s;
}

// Character-level tokenizer. Ids 0..3 are the reserved specials; the
// remaining ids cover every codepoint seen in the corpus, sorted by
// codepoint for determinism. Specials are represented on disk by Unicode
// noncharacters U+FDD0..U+FDD3, which are rejected in corpus text.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kAudio = 3;
  static constexpr char32_t kSpecialBase = 0xFDD0;
  static constexpr int kNumSpecials = 4;

  Tokenizer() = default;

  int vocab_size() const { return static_cast<int>(id_to_cp_.size()); }

  bool has_char(char32_t cp) const { return cp_to_id_.count(cp) > 0; }

  int id_of(char32_t cp) const {
    auto it = cp_to_id_.find(cp);
    if (it == cp_to_id_.end())
      throw UnknownCharacter("character not in vocabulary: U+" + hex(cp));
    return it->second;
  }

  std::vector<int> tokenize(const std::string& text) const {
    std::vector<int> out;
    for (char32_t cp : utf8_decode(text)) out.push_back(id_of(cp));
    return out;
  }

  // Specials are stripped; remaining ids map back to their codepoints.
  std::string detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
      if (id < 0 || id >= vocab_size())
        throw UnknownCharacter("token id out of range: " + std::to_string(id));
      if (id < kNumSpecials) continue;
      utf8_append(out, id_to_cp_[static_cast<std::size_t>(id)]);
    }
    return out;
  }

  // one line per id: "id<TAB>codepoint-hex", specials first
  std::string serialize() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < id_to_cp_.size(); ++i)
      os << i << "\t" << hex(id_to_cp_[i]) << "\n";
    return os.str();
  }

  std::uint64_t hash() const { return fnv1a64(serialize()); }

  static Tokenizer deserialize(const std::string& text) {
    Tokenizer tok;
    std::istringstream is(text);
    std::string line;
    int expect = 0;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw Corrupt("tokenizer file: missing tab in line \"" + line + "\"");
      const int id = std::stoi(line.substr(0, tab));
      if (id != expect)
        throw Corrupt("tokenizer file: non-contiguous id " + std::to_string(id));
      const auto cp =
          static_cast<char32_t>(std::stoul(line.substr(tab + 1), nullptr, 16));
      tok.id_to_cp_.push_back(cp);
      tok.cp_to_id_[cp] = id;
      ++expect;
    }
    if (tok.vocab_size() < kNumSpecials)
      throw Corrupt("tokenizer file: missing specials");
    for (int i = 0; i < kNumSpecials; ++i)
      if (tok.id_to_cp_[static_cast<std::size_t>(i)] !=
          kSpecialBase + static_cast<char32_t>(i))
        throw Corrupt("tokenizer file: specials not first");
    return tok;
  }

  static Tokenizer load_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MissingFile("cannot open tokenizer file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return deserialize(ss.str());
  }

  void save_file(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoFailure("cannot write tokenizer file: " + path);
    f << serialize();
  }

  friend Tokenizer build_tokenizer(const std::vector<std::string>& texts);

 private:
  static std::string hex(char32_t cp) {
    std::ostringstream os;
    os << std::hex << static_cast<std::uint32_t>(cp);
    return os.str();
  }

  std::vector<char32_t> id_to_cp_;
  std::map<char32_t, int> cp_to_id_;
};

// Vocab = specials + every codepoint appearing in `texts`, sorted by
// codepoint. Building twice from the same corpus gives identical ids.
inline Tokenizer build_tokenizer(const std::vector<std::string>& texts) {
  if (texts.empty()) throw EmptyCorpus("tokenizer: no corpus text");
  std::map<char32_t, int> seen;
  for (const auto& t : texts) {
    for (char32_t cp : utf8_decode(t)) {
      if (cp >= Tokenizer::kSpecialBase &&
          cp < Tokenizer::kSpecialBase + Tokenizer::kNumSpecials)
        throw UnsupportedFormat("corpus contains reserved noncharacter U+FDDx");
      seen[cp] = 1;
    }
  }
  Tokenizer tok;
  for (int i = 0; i < Tokenizer::kNumSpecials; ++i) {
    const auto cp = Tokenizer::kSpecialBase + static_cast<char32_t>(i);
    tok.id_to_cp_.push_back(cp);
    tok.cp_to_id_[cp] = i;
  }
  for (const auto& [cp, unused] : seen) {
    tok.cp_to_id_[cp] = static_cast<int>(tok.id_to_cp_.size());
    tok.id_to_cp_.push_back(cp);
  }
  return tok;
}

}  // namespace triplex
