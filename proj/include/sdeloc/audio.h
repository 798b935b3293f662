// include/sdeloc/audio.h

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

#ifndef SDELOC_AUDIO_H_
#define SDELOC_AUDIO_H_

#include <filesystem>
#include <string>
#include <vector>

namespace sdeloc {

/// Mono PCM audio, samples in [-1, 1].
struct AudioClip {
  std::string id;
  std::vector<double> samples;
  int sample_rate = 0;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

/// Throws std::invalid_argument when the clip breaks its invariants
/// (empty, non-positive rate, or a sample outside [-1 - 1e-6, 1 + 1e-6]).
void validate_clip(const AudioClip& clip);

enum class ChannelPolicy { kReject, kDownmix };
enum class WavEncoding { kPcm16, kFloat32 };

/// Reads 8-bit unsigned, 16/24/32-bit signed PCM or 32-bit float WAV at
/// 8-48 kHz. Integer PCM is scaled by 2^-(bits-1); float data whose peak
/// exceeds 1 is divided by that peak. Multi-channel input is averaged when
/// `policy` is kDownmix and rejected otherwise. The clip id is the file stem.
AudioClip load_wav(const std::filesystem::path& path,
                   ChannelPolicy policy = ChannelPolicy::kReject);

/// Writes a mono WAV. 16-bit output rounds x * 32768 and saturates to
/// [-32768, 32767], so samples that are multiples of 2^-15 round-trip exactly.
void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               WavEncoding encoding = WavEncoding::kPcm16);

/// Rounds every sample to the 16-bit grid used by write_wav.
void quantize_pcm16(AudioClip& clip);

}  // namespace sdeloc

#endif  // SDELOC_AUDIO_H_
