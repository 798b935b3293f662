// include/sdeloc/eval.h

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

#ifndef SDELOC_EVAL_H_
#define SDELOC_EVAL_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sdeloc/experts.h"
#include "sdeloc/labels.h"
#include "sdeloc/mining.h"

namespace sdeloc {

/// Frame counts with "manipulated" (label 0) as the positive class unless
/// inverted.
struct FrameConfusion {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::int64_t total() const { return tp + fp + fn + tn; }
  FrameConfusion& operator+=(const FrameConfusion& o);
};

FrameConfusion confusion(const FrameLabels& pred, const FrameLabels& truth,
                         bool genuine_positive = false);

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool zero_division = false;  // some ratio had a zero denominator and was set to 0
};

PRF prf_from_confusion(const FrameConfusion& c);

/// Throws on length mismatch.
PRF frame_metrics(const FrameLabels& pred, const FrameLabels& truth,
                  bool genuine_positive = false);

/// Fraction of clips whose whole predicted sequence equals the truth. Clips
/// are matched by position and must carry the same ids when ids are set.
double sentence_accuracy(const std::vector<FrameLabels>& pred,
                         const std::vector<FrameLabels>& truth);

/// Entry (a, b): fraction of frames where the hard decisions of experts a
/// and b differ. decisions[w][c] are expert w's labels for clip c.
std::vector<std::vector<double>> dissimilarity_matrix(
    const std::vector<std::vector<FrameLabels>>& decisions);

std::vector<std::vector<double>> dissimilarity_matrix(const Ensemble& ensemble,
                                                      const std::vector<FeatureMatrix>& corpus,
                                                      double decision_threshold = 0.5);

/// Mean of the off-diagonal entries.
double mean_pairwise(const std::vector<std::vector<double>>& m);

/// Hard labels from genuine-probabilities: manipulated iff 1 - p >= threshold.
FrameLabels decide(const std::vector<double>& p_genuine, double decision_threshold = 0.5,
                   std::string clip_id = {});

struct EntropySummary {
  double mean = 0.0;
  double max = 0.0;
  std::vector<int> histogram;  // 20 equal bins over [0, max]; last bin closed
};

/// Over all scores of all reports. Throws when there are none.
EntropySummary entropy_summary(const std::vector<MiningReport>& reports);
EntropySummary entropy_summary(const std::vector<double>& values);

struct MetricsRow {
  std::string run;
  std::string method;
  int z = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double sentence_acc = 0.0;
  double mean_entropy = 0.0;
};

nlohmann::json metrics_to_json(const std::vector<MetricsRow>& rows);
void write_metrics_json(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_json(const std::filesystem::path& path);

}  // namespace sdeloc

#endif  // SDELOC_EVAL_H_
