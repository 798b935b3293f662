// src/feature_cache.cc

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

#include "sdeloc/feature_cache.h"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sdeloc {

namespace {

constexpr char kMagic[8] = {'S', 'D', 'E', 'F', 'E', 'A', 'T', '1'};

template <typename T>
void put(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f, const std::string& where) {
  T v;
  if (!f.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw std::runtime_error(where + ": truncated feature cache header");
  return v;
}

}  // namespace

void write_feature_cache(const std::filesystem::path& path, const FeatureMatrix& m,
                         int sample_rate, std::uint64_t config_hash) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(f, static_cast<std::uint32_t>(sample_rate));
  put<std::uint32_t>(f, static_cast<std::uint32_t>(m.clip_id.size()));
  put<std::uint64_t>(f, static_cast<std::uint64_t>(m.rows));
  put<std::uint64_t>(f, static_cast<std::uint64_t>(m.cols));
  put<std::uint64_t>(f, config_hash);
  f.write(m.clip_id.data(), static_cast<std::streamsize>(m.clip_id.size()));
  f.write(reinterpret_cast<const char*>(m.values.data()),
          static_cast<std::streamsize>(m.values.size() * sizeof(double)));
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

CachedFeatures read_feature_cache(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + where);
  char magic[8];
  if (!f.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error(where + ": not a feature cache file");
  CachedFeatures out;
  out.sample_rate = static_cast<int>(get<std::uint32_t>(f, where));
  const auto id_len = get<std::uint32_t>(f, where);
  const auto rows = get<std::uint64_t>(f, where);
  const auto cols = get<std::uint64_t>(f, where);
  out.config_hash = get<std::uint64_t>(f, where);
  std::string id(id_len, '\0');
  if (!f.read(id.data(), id_len)) throw std::runtime_error(where + ": truncated clip id");
  out.features = FeatureMatrix(id, static_cast<int>(rows), static_cast<int>(cols));
  if (!f.read(reinterpret_cast<char*>(out.features.values.data()),
              static_cast<std::streamsize>(out.features.values.size() * sizeof(double))))
    throw std::runtime_error(where + ": truncated feature block");
  return out;
}

}  // namespace sdeloc
