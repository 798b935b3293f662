// include/sdeloc/manipulation.h

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

#ifndef SDELOC_MANIPULATION_H_
#define SDELOC_MANIPULATION_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdeloc/audio.h"
#include "sdeloc/dsp.h"
#include "sdeloc/labels.h"

namespace sdeloc {

/// Candidate splice boundaries. A point p indexes the energy-delta
/// sequence, i.e. the change between frames p and p + 1.
struct CutPointSet {
  std::string clip_id;
  std::vector<int> points;  // strictly increasing
  double threshold = 0.0;
  // True when fewer than four points passed the threshold and the set holds
  // the four largest deltas instead; those need not exceed `threshold`.
  bool fallback = false;
};

/// Half-open frame range [start, end).
struct Segment {
  int start = 0;
  int end = 0;
  int length() const { return end - start; }
  bool operator==(const Segment&) const = default;
};

/// Two segments to exchange, seg_a strictly before seg_b.
struct SwapSpec {
  Segment seg_a;
  Segment seg_b;
  bool operator==(const SwapSpec&) const = default;
};

/// Points with delta > mean + k_sigma * std (population std) that also pass
/// the activity guard: the larger ZCR of the two adjacent frames must
/// exceed median(zcr) * zcr_factor. `zcr` holds one value per frame
/// (energy_delta.size() + 1 entries) or one per delta. When fewer than four
/// points survive, returns the four largest deltas (ties to the lower
/// index) with `fallback` set. Throws when energy_delta has fewer than 4
/// entries.
CutPointSet find_cut_points(std::span<const double> energy_delta,
                            std::span<const double> zcr, double k_sigma = 1.0,
                            double zcr_factor = 0.5, std::string clip_id = {});

/// Draws four distinct cut points with an mt19937_64 seeded by `seed`,
/// sorts them and returns seg_a = (p1, p2), seg_b = (p3, p4). Point 0 is
/// never drawn so the first segment never starts the clip.
SwapSpec select_swap_segments(const CutPointSet& cuts, std::uint64_t seed);

/// Throws std::invalid_argument unless both segments are non-empty,
/// ordered, disjoint and inside [0, n_frames).
void validate_swap(const SwapSpec& spec, int n_frames);

/// Rearranges prefix·A·mid·B·suffix into prefix·B·mid·A·suffix at sample
/// resolution, so the total length is preserved. Output is rescaled only if
/// its peak exceeds 1.
AudioClip swap_segments(const AudioClip& clip, const SwapSpec& spec, const FrameGrid& grid);

/// Labels for the post-swap clip: B now occupies [a.start, a.start + |B|)
/// and A occupies [b.end - |A|, b.end); those frames are 0, the rest 1.
FrameLabels generate_labels(const SwapSpec& spec, const FrameGrid& grid_after,
                            std::string clip_id = {});

/// Training targets with optional smoothing: 0 -> s, 1 -> 1 - s.
std::vector<double> smooth_targets(const FrameLabels& labels, double s);

struct PseudoLabelOptions {
  double k_sigma = 1.0;
  double zcr_factor = 0.5;
  double label_smoothing = 0.0;
  int max_frames = kDefaultMaxFrames;
  LfccOptions lfcc;

  nlohmann::json to_json() const;
  static PseudoLabelOptions from_json(const nlohmann::json& j);
};

struct PseudoLabeledSample {
  AudioClip clip;  // post-swap audio, id "<source id>.swap"
  FeatureMatrix features;
  FrameLabels labels;
  SwapSpec swap;
  CutPointSet cuts;
  std::uint64_t rng_seed = 0;
};

/// Energy -> delta -> ZCR -> cut points -> swap -> labels -> features for a
/// single unlabeled clip.
PseudoLabeledSample pseudo_label_clip(const AudioClip& clip, const PseudoLabelOptions& opts,
                                      std::uint64_t rng_seed);

}  // namespace sdeloc

#endif  // SDELOC_MANIPULATION_H_
