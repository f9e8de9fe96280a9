// include/stylekit/manifest.hpp

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

#ifndef STYLEKIT_MANIFEST_HPP
#define STYLEKIT_MANIFEST_HPP

#include <string>
#include <vector>

namespace stylekit {

// One corpus line. audio_path may be relative; it then resolves against the
// manifest's own directory.
struct ManifestEntry {
  std::string audio_path;
  std::string speaker_id;
  std::string style;
  bool synthetic = false;
};

// JSON Lines, one entry object per line, UTF-8.
std::vector<ManifestEntry> load_manifest(const std::string& path);
void save_manifest(const std::vector<ManifestEntry>& entries,
                   const std::string& path);

// Joins a manifest-relative audio path with the manifest's directory;
// absolute paths pass through.
std::string resolve_audio_path(const std::string& manifest_path,
                               const std::string& audio_path);

}  // namespace stylekit

#endif  // STYLEKIT_MANIFEST_HPP
