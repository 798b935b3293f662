// include/sdeloc/synth.h

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

#ifndef SDELOC_SYNTH_H_
#define SDELOC_SYNTH_H_

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdeloc/audio.h"
#include "sdeloc/labels.h"

namespace sdeloc {

// How the fake segments of a domain differ from its genuine speech.
enum class FakeVariant {
  kBandLimit,      // nothing above fake_cutoff_hz
  kFlatFormant,    // formant envelope blended toward flat by fake_flatness
  kBandLimitFlat,  // both
};

std::string to_string(FakeVariant v);
FakeVariant fake_variant_from_string(const std::string& s);

// Recording channel applied to a whole clip before line noise is added.
struct ChannelProfile {
  std::string name = "wideband";
  double weight = 1.0;
  double lowpass_hz = 0.0;  // 0 disables the 4th-order Butterworth low-pass
};

struct DomainConfig {
  std::string name = "source";
  int sample_rate = 16000;
  double clip_seconds = 1.5;

  // Voiced syllables: constant f0 per syllable, harmonics shaped by three
  // formants plus a high band, with a spectral tilt.
  double f0_min = 100.0, f0_max = 200.0;
  double f1_min = 300.0, f1_max = 900.0;
  double f2_min = 900.0, f2_max = 2300.0;
  double f3_min = 2300.0, f3_max = 3500.0;
  double formant_bandwidth = 150.0;
  double high_band_hz = 5500.0;
  double high_band_level = 0.5;
  double tilt_db_per_octave = -3.0;

  int syllable_frames_min = 8, syllable_frames_max = 22;
  int gap_frames_min = 2, gap_frames_max = 8;
  double gap_prob = 0.6;

  double noise_level = 0.004;  // line noise std relative to unit-peak speech
  double peak_min = 0.3, peak_max = 0.9;

  double fake_ratio = 0.3;
  FakeVariant fake_variant = FakeVariant::kBandLimitFlat;
  double fake_cutoff_hz = 4000.0;
  double fake_flatness = 0.6;

  std::vector<ChannelProfile> channels = {ChannelProfile{}};

  nlohmann::json to_json() const;
  static DomainConfig from_json(const nlohmann::json& j);
  void validate() const;
};

struct SynthClip {
  AudioClip clip;
  FrameLabels labels;
  std::string channel;
};

/// Speech-like clips with randomly placed fake segments rendered by the
/// domain's fake variant. Clip i is generated from its own stream seeded by
/// (rng_seed, i), samples are quantized to the 16-bit grid, and ids are
/// "<name>_<i:05>".
std::vector<SynthClip> synth_domain_corpus(const DomainConfig& cfg, int n_clips,
                                           std::uint64_t rng_seed);

/// Built-in benchmark domains: a wideband source and a target that differs
/// in speaker range and noise, and routes a share of clips through a
/// telephone-band channel.
DomainConfig default_source_domain();
DomainConfig default_target_domain();

}  // namespace sdeloc

#endif  // SDELOC_SYNTH_H_
