// src/manifest.cc

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

#include "sdeloc/manifest.h"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace sdeloc {

using nlohmann::json;

FrameLabels ManifestRecord::frame_labels() const {
  if (labels.empty()) throw std::runtime_error("record '" + id + "' has no labels");
  return FrameLabels::from_spans(id, labels.back().end, labels);
}

std::string to_jsonl_line(const ManifestRecord& r) {
  json spans = json::array();
  for (const auto& s : r.labels) spans.push_back({s.start, s.end, s.label});
  json j = {{"id", r.id},
            {"wav_path", r.wav_path},
            {"sample_rate", r.sample_rate},
            {"labels", spans},
            {"domain", r.domain},
            {"provenance", r.provenance}};
  if (r.swap) {
    const auto& m = *r.swap;
    j["swap"] = {{"seg_a", {m.swap.seg_a.start, m.swap.seg_a.end}},
                 {"seg_b", {m.swap.seg_b.start, m.swap.seg_b.end}},
                 {"seed", m.seed},
                 {"threshold", m.threshold}};
  }
  return j.dump();
}

ManifestRecord parse_manifest_line(const std::string& line) {
  const json j = json::parse(line);
  ManifestRecord r;
  r.id = j.at("id").get<std::string>();
  r.wav_path = j.at("wav_path").get<std::string>();
  r.sample_rate = j.value("sample_rate", 0);
  r.domain = j.value("domain", "");
  r.provenance = j.value("provenance", "ground_truth");
  if (r.provenance != "ground_truth" && r.provenance != "pseudo")
    throw std::runtime_error("record '" + r.id + "': unknown provenance '" + r.provenance + "'");
  if (j.contains("labels"))
    for (const auto& s : j["labels"])
      r.labels.push_back({s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<int>()});
  if (!r.labels.empty()) (void)r.frame_labels();  // validates the partition
  if (j.contains("swap")) {
    const auto& s = j["swap"];
    SwapMetadata m;
    m.swap.seg_a = {s.at("seg_a").at(0).get<int>(), s.at("seg_a").at(1).get<int>()};
    m.swap.seg_b = {s.at("seg_b").at(0).get<int>(), s.at("seg_b").at(1).get<int>()};
    m.seed = s.value("seed", std::uint64_t{0});
    m.threshold = s.value("threshold", 0.0);
    r.swap = m;
  }
  return r;
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  std::vector<ManifestRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_manifest_line(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  for (const auto& r : records) out << to_jsonl_line(r) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::filesystem::path resolve_wav(const std::filesystem::path& manifest_path,
                                  const ManifestRecord& r) {
  std::filesystem::path p(r.wav_path);
  if (p.is_absolute()) return p;
  return manifest_path.parent_path() / p;
}

}  // namespace sdeloc
