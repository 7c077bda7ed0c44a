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

#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "triplex/errors.hpp"
#include "triplex/manifest.hpp"
#include "triplex/tokenizer.hpp"

namespace triplex {

struct WerStats {
  long long substitutions = 0;
  long long deletions = 0;
  long long insertions = 0;
  long long ref_count = 0;

  long long edits() const { return substitutions + deletions + insertions; }
  double wer() const {
    return ref_count > 0 ? static_cast<double>(edits()) / static_cast<double>(ref_count)
                         : 0.0;
  }
  double wer_percent() const { return 100.0 * wer(); }

  WerStats& operator+=(const WerStats& o) {
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    ref_count += o.ref_count;
    return *this;
  }
};

enum class ScoringUnit { kWord, kChar };

// Character-level scoring for languages written without word spaces.
inline ScoringUnit scoring_unit_for_lang(const std::string& lang) {
  std::string primary = lang.substr(0, lang.find('-'));
  for (char& c : primary) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (primary == "zh" || primary == "ja" || primary == "ko" || primary == "th")
    return ScoringUnit::kChar;
  return ScoringUnit::kWord;
}

inline bool is_space_cp(char32_t cp) {
  return cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' ||
         cp == U'\f' || cp == U'\v' || cp == 0x00A0 || cp == 0x3000;
}

// Scoring normalization: lowercase (ASCII), trim, collapse whitespace runs
// to a single space. No punctuation stripping.
inline std::string normalize_text(const std::string& text) {
  std::string out;
  bool pending_space = false;
  bool started = false;
  for (char32_t cp : utf8_decode(text)) {
    if (is_space_cp(cp)) {
      pending_space = started;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    if (cp < 128) cp = static_cast<char32_t>(std::tolower(static_cast<int>(cp)));
    utf8_append(out, cp);
    started = true;
  }
  return out;
}

inline std::vector<std::string> tokenize_for_scoring(const std::string& text,
                                                     ScoringUnit unit) {
  const std::string norm = normalize_text(text);
  std::vector<std::string> tokens;
  if (unit == ScoringUnit::kWord) {
    std::string cur;
    for (char32_t cp : utf8_decode(norm)) {
      if (is_space_cp(cp)) {
        if (!cur.empty()) tokens.push_back(std::move(cur));
        cur.clear();
      } else {
        utf8_append(cur, cp);
      }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
  } else {
    for (char32_t cp : utf8_decode(norm))
      if (!is_space_cp(cp)) tokens.push_back(utf8_encode(cp));
  }
  return tokens;
}

// Minimal-edit alignment with unit costs. Among minimal alignments the
// counts follow the canonical backtrace preference substitution >
// deletion > insertion, which keeps results deterministic.
inline WerStats wer_tokens(const std::vector<std::string>& ref,
                           const std::vector<std::string>& hyp) {
  if (ref.empty())
    throw EmptyReference("wer: reference is empty after normalization");
  const std::size_t m = ref.size(), n = hyp.size();
  std::vector<int> d((m + 1) * (n + 1), 0);
  auto at = [n](std::size_t i, std::size_t j) { return i * (n + 1) + j; };
  for (std::size_t i = 0; i <= m; ++i) d[at(i, 0)] = static_cast<int>(i);
  for (std::size_t j = 0; j <= n; ++j) d[at(0, j)] = static_cast<int>(j);
  for (std::size_t i = 1; i <= m; ++i)
    for (std::size_t j = 1; j <= n; ++j) {
      const int sub = d[at(i - 1, j - 1)] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const int del = d[at(i - 1, j)] + 1;
      const int ins = d[at(i, j - 1)] + 1;
      d[at(i, j)] = std::min(sub, std::min(del, ins));
    }

  WerStats stats;
  stats.ref_count = static_cast<long long>(m);
  std::size_t i = m, j = n;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const int cost = ref[i - 1] == hyp[j - 1] ? 0 : 1;
      if (d[at(i, j)] == d[at(i - 1, j - 1)] + cost) {
        stats.substitutions += cost;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && d[at(i, j)] == d[at(i - 1, j)] + 1) {
      ++stats.deletions;
      --i;
      continue;
    }
    ++stats.insertions;
    --j;
  }
  return stats;
}

inline WerStats wer(const std::string& reference, const std::string& hypothesis,
                    ScoringUnit unit = ScoringUnit::kWord) {
  return wer_tokens(tokenize_for_scoring(reference, unit),
                    tokenize_for_scoring(hypothesis, unit));
}

// Per-language and pooled counts. Overall WER pools S/D/I/N sums; it is
// never an average of per-language percentages.
struct WerReport {
  std::map<std::string, WerStats> per_lang;
  std::map<std::string, ScoringUnit> unit_per_lang;
  WerStats overall;
};

inline WerReport score_corpus(const std::vector<ManifestEntry>& refs,
                              const std::vector<std::string>& hyps) {
  if (refs.size() != hyps.size())
    throw CountMismatch("score: " + std::to_string(refs.size()) +
                        " references vs " + std::to_string(hyps.size()) +
                        " hypotheses");
  WerReport report;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const ScoringUnit unit = scoring_unit_for_lang(refs[i].lang);
    report.unit_per_lang[refs[i].lang] = unit;
    const WerStats s = wer(refs[i].text, hyps[i], unit);
    report.per_lang[refs[i].lang] += s;
    report.overall += s;
  }
  return report;
}

// WER (%) table in the two-decimal presentation used for reporting.
inline std::string render_wer_report(const WerReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "lang     unit  S      D      I      N      WER (%)\n";
  for (const auto& [lang, s] : report.per_lang) {
    os << std::left << std::setw(9) << lang << std::setw(6)
       << (report.unit_per_lang.at(lang) == ScoringUnit::kChar ? "char" : "word")
       << std::setw(7) << s.substitutions << std::setw(7) << s.deletions
       << std::setw(7) << s.insertions << std::setw(7) << s.ref_count
       << s.wer_percent() << "\n";
  }
  const WerStats& o = report.overall;
  os << std::left << std::setw(9) << "overall" << std::setw(6) << "-"
     << std::setw(7) << o.substitutions << std::setw(7) << o.deletions
     << std::setw(7) << o.insertions << std::setw(7) << o.ref_count
     << o.wer_percent() << "\n";
  return os.str();
}

}  // namespace triplex
