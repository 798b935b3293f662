// include/sdeloc/manifest.h

// Copyright 2026  The sdeloc Authors

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

#ifndef SDELOC_MANIFEST_H_
#define SDELOC_MANIFEST_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sdeloc/labels.h"
#include "sdeloc/manipulation.h"

namespace sdeloc {

struct SwapMetadata {
  SwapSpec swap;
  std::uint64_t seed = 0;
  double threshold = 0.0;
};

// One JSON Lines record:
//   {"id", "wav_path", "sample_rate", "labels": [[start, end, label], ...],
//    "domain", "provenance": "ground_truth" | "pseudo",
//    "swap": {"seg_a": [s, e], "seg_b": [s, e], "seed", "threshold"}}
// "labels" may be empty for unlabeled audio; "swap" only appears on pseudo
// records. wav_path is stored as written; relative paths resolve against the
// manifest's directory.
struct ManifestRecord {
  std::string id;
  std::string wav_path;
  int sample_rate = 0;
  std::vector<LabelSpan> labels;
  std::string domain;
  std::string provenance = "ground_truth";
  std::optional<SwapMetadata> swap;

  bool has_labels() const { return !labels.empty(); }
  FrameLabels frame_labels() const;
};

std::string to_jsonl_line(const ManifestRecord& r);
ManifestRecord parse_manifest_line(const std::string& line);

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

/// Absolute location of a record's audio.
std::filesystem::path resolve_wav(const std::filesystem::path& manifest_path,
                                  const ManifestRecord& r);

}  // namespace sdeloc

#endif  // SDELOC_MANIFEST_H_
