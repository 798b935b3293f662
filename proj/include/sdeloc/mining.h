// include/sdeloc/mining.h

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

#ifndef SDELOC_MINING_H_
#define SDELOC_MINING_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdeloc/experts.h"

namespace sdeloc {

/// Per-frame count of experts declaring the frame manipulated.
struct VoteMatrix {
  std::string clip_id;
  std::vector<int> m;
  int n = 0;

  double prob(int i) const { return static_cast<double>(m[i]) / n; }
};

/// Expert w votes "manipulated" on frame i when its manipulated score
/// 1 - p (p = probability of genuine) is >= decision_threshold.
VoteMatrix ensemble_vote(const Ensemble& ensemble, const FeatureMatrix& features,
                         double decision_threshold = 0.5);

/// Same rule applied to precomputed genuine-probabilities, one vector per expert.
VoteMatrix votes_from_probs(const std::vector<std::vector<double>>& p_genuine,
                            double decision_threshold = 0.5, std::string clip_id = {});

/// Binary entropy in bits, 0 log 0 := 0. Throws outside [0, 1].
double frame_entropy(double p);

/// Sum of frame_entropy(m[i] / n) over the clip's frames.
double sample_information(const VoteMatrix& votes);

struct MiningReport {
  std::string method = "sde";
  std::map<std::string, double> scores;  // clip id -> I_j in bits
  std::vector<std::string> ranking;      // descending I_j, ties by ascending id
  std::vector<std::string> selected;
  int z = 0;
  int R = 0;
  int n_experts = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

/// Descending sort by score, ties by ascending id; top min(z, R) selected.
MiningReport rank_and_select(const std::map<std::string, double>& scores, int z);

/// Uniform sample of min(z, R) candidates without replacement, returned in
/// draw order.
std::vector<std::string> random_select(const std::vector<std::string>& candidates, int z,
                                       std::uint64_t seed);

/// Lowest-score z, ascending score with ties by ascending id.
std::vector<std::string> negative_mining_select(const std::map<std::string, double>& scores,
                                                int z);

// ---- clustering baselines ----------------------------------------------

struct Clustering {
  std::vector<int> assignment;               // cluster per point
  std::vector<std::vector<double>> centers;  // k rows
  std::vector<double> objective_trace;       // within-cluster SSE after each iteration
  int iterations = 0;
};

/// Lloyd iterations from k distinct seeded points until assignments stop
/// changing or 100 iterations. An emptied cluster is re-seeded with the
/// point farthest from its current center. Throws when k > points or k < 1.
Clustering kmeans_cluster(const std::vector<std::vector<double>>& points, int k,
                          std::uint64_t seed, int max_iterations = 100);

enum class ClusterMode { kNearestCenter, kSparseRegion, kDenseRegion };

/// nearest-center: round-robin over clusters (ascending index), each turn
/// taking that cluster's nearest unused member. sparse / dense: uniform
/// draws from clusters whose size is below / above the median cluster size.
/// Shortfalls are filled uniformly from the remaining candidates; z >= R
/// returns every candidate.
std::vector<std::string> multicluster_select(const std::vector<std::string>& ids,
                                             const std::vector<std::vector<double>>& points,
                                             const Clustering& clustering, int z,
                                             ClusterMode mode, std::uint64_t seed);

// ---- report files -------------------------------------------------------

/// {method, z, n_experts, scores: [{id, I}], selected: [id], seed, config_hash};
/// scores are listed in ranking order.
nlohmann::json report_to_json(const MiningReport& r);
MiningReport report_from_json(const nlohmann::json& j);

void write_report(const std::filesystem::path& path, const MiningReport& r);
MiningReport read_report(const std::filesystem::path& path);

/// CSV: id,I_j,rank,selected (rank 1-based in ranking order).
void write_report_csv(const std::filesystem::path& path, const MiningReport& r);

}  // namespace sdeloc

#endif  // SDELOC_MINING_H_
