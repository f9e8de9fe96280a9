// src/manifest.cpp

// Copyright 2026  The stylekit Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "stylekit/manifest.hpp"

#include <filesystem>
#include <sstream>

#include "json.hpp"
#include "stylekit/common.hpp"
#include "stylekit/ioutil.hpp"

namespace stylekit {

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error("invalid manifest line " + std::to_string(lineno) + " in " +
                  path + ": " + e.what());
    }
    ManifestEntry entry;
    try {
      entry.audio_path = j.at("audio_path").get<std::string>();
      entry.speaker_id = j.at("speaker_id").get<std::string>();
      entry.style = j.at("style").get<std::string>();
      entry.synthetic = j.value("synthetic", false);
    } catch (const nlohmann::json::exception& e) {
      throw Error("invalid manifest line " + std::to_string(lineno) + " in " +
                  path + ": " + e.what());
    }
    if (entry.audio_path.empty()) {
      throw Error("manifest line " + std::to_string(lineno) + " in " + path +
                  " has an empty audio_path");
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

void save_manifest(const std::vector<ManifestEntry>& entries,
                   const std::string& path) {
  std::string text;
  for (const auto& e : entries) {
    nlohmann::json j = {{"audio_path", e.audio_path},
                        {"speaker_id", e.speaker_id},
                        {"style", e.style},
                        {"synthetic", e.synthetic}};
    text += j.dump();
    text += "\n";
  }
  atomic_write_file(path, text);
}

std::string resolve_audio_path(const std::string& manifest_path,
                               const std::string& audio_path) {
  const std::filesystem::path audio(audio_path);
  if (audio.is_absolute()) return audio_path;
  return (std::filesystem::path(manifest_path).parent_path() / audio).string();
}

}  // namespace stylekit
