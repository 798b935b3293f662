// include/sdeloc/dsp.h

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

#ifndef SDELOC_DSP_H_
#define SDELOC_DSP_H_

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdeloc/audio.h"

namespace sdeloc {

inline constexpr int kDefaultMaxFrames = 750;
inline constexpr double kFrameSeconds = 0.010;

/// Non-overlapping 10 ms frames: frame t covers samples
/// [t * hop, t * hop + frame_len) and hop == frame_len.
struct FrameGrid {
  int frame_len = 0;
  int hop = 0;
  int n_frames = 0;
};

/// Per-frame feature vectors for one clip, row-major.
struct FeatureMatrix {
  std::string clip_id;
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  FeatureMatrix() = default;
  FeatureMatrix(std::string id, int r, int c)
      : clip_id(std::move(id)), rows(r), cols(c),
        values(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
  std::span<const double> row(int r) const {
    return {values.data() + static_cast<std::size_t>(r) * cols,
            static_cast<std::size_t>(cols)};
  }
};

struct LfccOptions {
  int n_filters = 20;
  int n_coeffs = 20;
  double log_floor = 1e-10;
  bool append_deltas = false;  // appends delta and delta-delta blocks

  int output_dim() const { return append_deltas ? 3 * n_coeffs : n_coeffs; }
  nlohmann::json to_json() const;
  static LfccOptions from_json(const nlohmann::json& j);
};

/// Frame length is round(0.010 * sample_rate). Clips longer than
/// `max_frames` frames are truncated; a trailing partial frame is dropped.
/// Throws when the clip is shorter than one frame.
FrameGrid make_frames(const AudioClip& clip, int max_frames = kDefaultMaxFrames);

/// Next power of two >= n.
int fft_size_for(int frame_len);

/// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& x);

/// Triangular filters with centers evenly spaced on a linear frequency axis
/// over [0, sample_rate / 2]. Returns n_filters rows of (fft_size/2 + 1) weights.
std::vector<std::vector<double>> linear_filterbank(int n_filters, int fft_size,
                                                   int sample_rate);

/// Hann window -> power spectrum -> linear triangular filterbank ->
/// log(max(e, log_floor)) -> orthonormal DCT-II, first n_coeffs kept.
FeatureMatrix lfcc(const AudioClip& clip, const FrameGrid& grid,
                   const LfccOptions& opts = {});

/// E[t] = sum of squared samples of frame t.
std::vector<double> frame_energy(const AudioClip& clip, const FrameGrid& grid);

/// out[i] = |E[i + 1] - E[i]|, length E.size() - 1.
std::vector<double> delta_energy(std::span<const double> energy);

/// Sign changes within the frame divided by (frame_len - 1); zero counts as
/// positive.
std::vector<double> zero_crossing_rate(const AudioClip& clip, const FrameGrid& grid);

/// Copy of `m` with zero rows appended up to `rows` (or truncated to it).
FeatureMatrix pad_rows(const FeatureMatrix& m, int rows);

}  // namespace sdeloc

#endif  // SDELOC_DSP_H_
