// src/audio.cc

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

#include "sdeloc/audio.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "WAV and cache I/O assume a little-endian host");

namespace sdeloc {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void put_le(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

double decode_sample(const std::uint8_t* p, std::uint16_t format, int bits) {
  if (format == kFormatFloat) return static_cast<double>(read_le<float>(p));
  switch (bits) {
    case 8:
      return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16:
      return read_le<std::int16_t>(p) / 32768.0;
    case 24: {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    case 32:
      return read_le<std::int32_t>(p) / 2147483648.0;
  }
  throw std::runtime_error("unsupported bit depth");
}

}  // namespace

void validate_clip(const AudioClip& clip) {
  if (clip.samples.empty())
    throw std::invalid_argument("clip '" + clip.id + "' has no samples");
  if (clip.sample_rate <= 0)
    throw std::invalid_argument("clip '" + clip.id + "' has non-positive sample rate");
  for (double s : clip.samples) {
    if (!(std::abs(s) <= 1.0 + 1e-6))
      throw std::invalid_argument("clip '" + clip.id + "' has a sample outside [-1, 1]");
  }
}

AudioClip load_wav(const std::filesystem::path& path, ChannelPolicy policy) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error(where + "not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    std::uint32_t size = read_le<std::uint32_t>(chunk + 4);
    std::size_t body = pos + 8;
    std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw std::runtime_error(where + "truncated fmt chunk");
      format = read_le<std::uint16_t>(bytes.data() + body);
      channels = read_le<std::uint16_t>(bytes.data() + body + 2);
      rate = read_le<std::uint32_t>(bytes.data() + body + 4);
      bits = read_le<std::uint16_t>(bytes.data() + body + 14);
      if (format == kFormatExtensible) {
        if (avail < 26) throw std::runtime_error(where + "truncated extensible fmt");
        format = read_le<std::uint16_t>(bytes.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = avail;
    }
    pos = body + size + (size & 1);
  }

  if (!have_fmt) throw std::runtime_error(where + "missing fmt chunk");
  if (data == nullptr) throw std::runtime_error(where + "missing data chunk");
  const bool int_ok = format == kFormatPcm &&
                      (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  const bool float_ok = format == kFormatFloat && bits == 32;
  if (!int_ok && !float_ok)
    throw std::runtime_error(where + "unsupported encoding (format " +
                             std::to_string(format) + ", " + std::to_string(bits) +
                             " bits)");
  if (rate < 8000 || rate > 48000)
    throw std::runtime_error(where + "sample rate " + std::to_string(rate) +
                             " outside 8-48 kHz");
  if (channels == 0) throw std::runtime_error(where + "zero channels");
  if (channels > 1 && policy == ChannelPolicy::kReject)
    throw std::runtime_error(where + std::to_string(channels) +
                             "-channel audio (enable downmix to accept)");

  const std::size_t sample_bytes = bits / 8;
  const std::size_t n = data_size / (sample_bytes * channels);
  if (n == 0) throw std::runtime_error(where + "zero-length audio");

  AudioClip clip;
  clip.id = path.stem().string();
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c)
      acc += decode_sample(data + (i * channels + c) * sample_bytes, format, bits);
    clip.samples[i] = acc / channels;
  }

  if (format == kFormatFloat) {
    double peak = 0.0;
    for (double s : clip.samples) {
      if (!std::isfinite(s)) throw std::runtime_error(where + "non-finite float sample");
      peak = std::max(peak, std::abs(s));
    }
    if (peak > 1.0)
      for (double& s : clip.samples) s /= peak;
  }
  return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               WavEncoding encoding) {
  validate_clip(clip);
  const std::uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  const std::uint16_t format = encoding == WavEncoding::kPcm16 ? kFormatPcm : kFormatFloat;
  const std::uint32_t data_size = static_cast<std::uint32_t>(clip.samples.size() * bits / 8);

  std::string out;
  out.reserve(44 + data_size);
  out.append("RIFF");
  put_le<std::uint32_t>(out, 36 + data_size);
  out.append("WAVEfmt ");
  put_le<std::uint32_t>(out, 16);
  put_le<std::uint16_t>(out, format);
  put_le<std::uint16_t>(out, 1);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate) * bits / 8);
  put_le<std::uint16_t>(out, bits / 8);
  put_le<std::uint16_t>(out, bits);
  out.append("data");
  put_le<std::uint32_t>(out, data_size);
  for (double s : clip.samples) {
    if (encoding == WavEncoding::kPcm16) {
      double q = std::clamp(std::nearbyint(s * 32768.0), -32768.0, 32767.0);
      put_le<std::int16_t>(out, static_cast<std::int16_t>(q));
    } else {
      put_le<float>(out, static_cast<float>(s));
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

void quantize_pcm16(AudioClip& clip) {
  for (double& s : clip.samples)
    s = std::clamp(std::nearbyint(s * 32768.0), -32768.0, 32767.0) / 32768.0;
}

}  // namespace sdeloc
