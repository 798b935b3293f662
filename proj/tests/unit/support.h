// tests/unit/support.h

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

#ifndef SDELOC_TESTS_SUPPORT_H_
#define SDELOC_TESTS_SUPPORT_H_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "sdeloc/audio.h"

namespace sdeloc::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("sdeloc_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline AudioClip make_clip(std::vector<double> samples, int rate = 16000, std::string id = "clip") {
  AudioClip c;
  c.id = std::move(id);
  c.samples = std::move(samples);
  c.sample_rate = rate;
  return c;
}

inline AudioClip sine(double hz, double seconds, double amp = 0.5, int rate = 16000) {
  std::vector<double> s(static_cast<std::size_t>(std::lround(seconds * rate)));
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate);
  return make_clip(std::move(s), rate, "sine");
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

// Minimal RIFF writer for formats the library does not emit.
inline void write_raw_wav(const std::filesystem::path& path, int rate, int channels, int bits,
                          int format_tag, const std::vector<std::uint8_t>& data) {
  std::ofstream f(path, std::ios::binary);
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) f.put(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  auto u16 = [&](std::uint16_t v) {
    f.put(static_cast<char>(v & 0xff));
    f.put(static_cast<char>(v >> 8));
  };
  const std::uint32_t block = static_cast<std::uint32_t>(channels * bits / 8);
  f.write("RIFF", 4);
  u32(36 + static_cast<std::uint32_t>(data.size()));
  f.write("WAVEfmt ", 8);
  u32(16);
  u16(static_cast<std::uint16_t>(format_tag));
  u16(static_cast<std::uint16_t>(channels));
  u32(static_cast<std::uint32_t>(rate));
  u32(static_cast<std::uint32_t>(rate) * block);
  u16(static_cast<std::uint16_t>(block));
  u16(static_cast<std::uint16_t>(bits));
  f.write("data", 4);
  u32(static_cast<std::uint32_t>(data.size()));
  f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

}  // namespace sdeloc::testing

#endif  // SDELOC_TESTS_SUPPORT_H_
