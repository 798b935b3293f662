// src/labels.cc

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

#include "sdeloc/labels.h"

#include <stdexcept>

namespace sdeloc {

std::vector<LabelSpan> FrameLabels::spans() const {
  std::vector<LabelSpan> out;
  for (int i = 0; i < n_frames(); ++i) {
    if (out.empty() || out.back().label != labels[i])
      out.push_back({i, i + 1, labels[i]});
    else
      out.back().end = i + 1;
  }
  return out;
}

FrameLabels FrameLabels::from_spans(std::string clip_id, int n_frames,
                                    const std::vector<LabelSpan>& spans) {
  FrameLabels l;
  l.clip_id = std::move(clip_id);
  l.labels.reserve(n_frames);
  int expect = 0;
  for (const auto& s : spans) {
    if (s.start != expect || s.end <= s.start)
      throw std::invalid_argument("label spans for '" + l.clip_id +
                                  "' do not partition the frame range");
    if (s.label != kGenuine && s.label != kManipulated)
      throw std::invalid_argument("label must be 0 or 1");
    l.labels.insert(l.labels.end(), s.end - s.start, s.label);
    expect = s.end;
  }
  if (expect != n_frames)
    throw std::invalid_argument("label spans for '" + l.clip_id + "' cover " +
                                std::to_string(expect) + " of " +
                                std::to_string(n_frames) + " frames");
  return l;
}

FrameLabels resize_labels(const FrameLabels& l, int n, int fill) {
  FrameLabels out = l;
  out.labels.resize(n, fill);
  return out;
}

}  // namespace sdeloc
