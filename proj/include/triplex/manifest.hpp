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
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "triplex/errors.hpp"

namespace triplex {

// One utterance: audio path, transcript, language code. Manifests are
// UTF-8 JSON lines with keys "audio", "text", "lang"; audio paths are
// resolved relative to the manifest file.
struct ManifestEntry {
  std::string audio;
  std::string text;
  std::string lang;
};

inline std::vector<ManifestEntry> load_manifest(const std::string& path,
                                                bool check_audio = true) {
  std::ifstream f(path);
  if (!f) throw MissingFile("cannot open manifest: " + path);
  const auto base = std::filesystem::path(path).parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Corrupt("manifest " + path + " line " + std::to_string(line_no) +
                    ": " + e.what());
    }
    if (!j.contains("audio") || !j.contains("text") || !j.contains("lang"))
      throw Corrupt("manifest " + path + " line " + std::to_string(line_no) +
                    ": missing audio/text/lang");
    ManifestEntry e;
    e.text = j.at("text").get<std::string>();
    e.lang = j.at("lang").get<std::string>();
    std::filesystem::path ap = j.at("audio").get<std::string>();
    if (ap.is_relative()) ap = base / ap;
    e.audio = ap.string();
    if (e.text.empty())
      throw Corrupt("manifest " + path + " line " + std::to_string(line_no) +
                    ": empty text");
    if (check_audio && !std::filesystem::exists(e.audio))
      throw MissingFile("manifest " + path + " line " + std::to_string(line_no) +
                        ": audio not found: " + e.audio);
    entries.push_back(std::move(e));
  }
  return entries;
}

inline void save_manifest(const std::vector<ManifestEntry>& entries,
                          const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoFailure("cannot write manifest: " + path);
  for (const auto& e : entries) {
    nlohmann::json j;
    j["audio"] = e.audio;
    j["text"] = e.text;
    j["lang"] = e.lang;
    f << j.dump() << "\n";
  }
}

}  // namespace triplex
