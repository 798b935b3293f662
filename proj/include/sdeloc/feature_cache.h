// include/sdeloc/feature_cache.h

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

#ifndef SDELOC_FEATURE_CACHE_H_
#define SDELOC_FEATURE_CACHE_H_

#include <cstdint>
#include <filesystem>

#include "sdeloc/dsp.h"

namespace sdeloc {

// Feature cache layout (all integers little-endian):
//   char[8]  magic "SDEFEAT1"
//   u32      sample_rate
//   u32      clip id length L
//   u64      rows
//   u64      cols
//   u64      config hash
//   char[L]  clip id (UTF-8, no terminator)
//   f64[rows * cols]  row-major values
struct CachedFeatures {
  FeatureMatrix features;
  int sample_rate = 0;
  std::uint64_t config_hash = 0;
};

void write_feature_cache(const std::filesystem::path& path, const FeatureMatrix& m,
                         int sample_rate, std::uint64_t config_hash);

CachedFeatures read_feature_cache(const std::filesystem::path& path);

}  // namespace sdeloc

#endif  // SDELOC_FEATURE_CACHE_H_
