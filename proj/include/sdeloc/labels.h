// include/sdeloc/labels.h

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

#ifndef SDELOC_LABELS_H_
#define SDELOC_LABELS_H_

#include <string>
#include <vector>

namespace sdeloc {

inline constexpr int kGenuine = 1;
inline constexpr int kManipulated = 0;

/// Half-open frame range [start, end) carrying one label.
struct LabelSpan {
  int start = 0;
  int end = 0;
  int label = kGenuine;
  bool operator==(const LabelSpan&) const = default;
};

/// Per-frame authenticity labels (1 = genuine, 0 = manipulated).
struct FrameLabels {
  std::string clip_id;
  std::vector<int> labels;

  int n_frames() const { return static_cast<int>(labels.size()); }

  /// Run-length view; the spans partition [0, n_frames).
  std::vector<LabelSpan> spans() const;

  /// Builds labels from spans that must partition [0, n_frames) in order.
  static FrameLabels from_spans(std::string clip_id, int n_frames,
                                const std::vector<LabelSpan>& spans);

  bool operator==(const FrameLabels&) const = default;
};

/// Truncates or extends (with `fill`) to exactly n frames.
FrameLabels resize_labels(const FrameLabels& l, int n, int fill = kGenuine);

}  // namespace sdeloc

#endif  // SDELOC_LABELS_H_
