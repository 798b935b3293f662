// src/mining.cc

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

#include "sdeloc/mining.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "sdeloc/hash.h"

namespace sdeloc {

using nlohmann::json;

VoteMatrix votes_from_probs(const std::vector<std::vector<double>>& p_genuine,
                            double decision_threshold, std::string clip_id) {
  if (p_genuine.empty()) throw std::invalid_argument("ensemble is empty");
  if (!(decision_threshold > 0.0 && decision_threshold < 1.0))
    throw std::invalid_argument("decision threshold must lie in (0, 1)");
  VoteMatrix v;
  v.clip_id = std::move(clip_id);
  v.n = static_cast<int>(p_genuine.size());
  v.m.assign(p_genuine.front().size(), 0);
  for (const auto& p : p_genuine) {
    if (p.size() != v.m.size()) throw std::invalid_argument("experts disagree on frame count");
    for (std::size_t i = 0; i < p.size(); ++i)
      if (1.0 - p[i] >= decision_threshold) ++v.m[i];
  }
  return v;
}

VoteMatrix ensemble_vote(const Ensemble& ensemble, const FeatureMatrix& features,
                         double decision_threshold) {
  if (ensemble.experts.empty()) throw std::invalid_argument("ensemble is empty");
  std::vector<std::vector<double>> probs;
  probs.reserve(ensemble.experts.size());
  for (const auto& e : ensemble.experts) probs.push_back(run_clip(e, features).p);
  return votes_from_probs(probs, decision_threshold, features.clip_id);
}

double frame_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("probability outside [0, 1]");
  double h = 0.0;
  if (p > 0.0) h -= p * std::log2(p);
  if (p < 1.0) h -= (1.0 - p) * std::log2(1.0 - p);
  return h;
}

double sample_information(const VoteMatrix& votes) {
  double s = 0.0;
  for (std::size_t i = 0; i < votes.m.size(); ++i) s += frame_entropy(votes.prob(static_cast<int>(i)));
  return s;
}

namespace {

std::vector<std::string> sorted_ids(const std::map<std::string, double>& scores, bool descending) {
  std::vector<std::string> ids;
  ids.reserve(scores.size());
  for (const auto& [id, _] : scores) ids.push_back(id);  // ascending id order
  std::stable_sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) {
    return descending ? scores.at(a) > scores.at(b) : scores.at(a) < scores.at(b);
  });
  return ids;
}

// Unbiased draw in [0, n) by rejection on 64-bit outputs.
std::size_t draw_index(Rng& rng, std::size_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do x = rng();
  while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

// Partial Fisher-Yates: the first k entries of `pool` become the sample.
template <typename T>
void partial_shuffle(std::vector<T>& pool, std::size_t k, Rng& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + draw_index(rng, pool.size() - i)]);
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

}  // namespace

MiningReport rank_and_select(const std::map<std::string, double>& scores, int z) {
  if (z < 0) throw std::invalid_argument("z must be >= 0");
  MiningReport r;
  r.scores = scores;
  r.R = static_cast<int>(scores.size());
  r.z = z;
  r.ranking = sorted_ids(scores, true);
  r.selected.assign(r.ranking.begin(), r.ranking.begin() + std::min(z, r.R));
  return r;
}

std::vector<std::string> random_select(const std::vector<std::string>& candidates, int z,
                                       std::uint64_t seed) {
  if (z < 0) throw std::invalid_argument("z must be >= 0");
  std::vector<std::string> pool = candidates;
  Rng rng(seed);
  const auto k = std::min<std::size_t>(z, pool.size());
  partial_shuffle(pool, k, rng);
  pool.resize(k);
  return pool;
}

std::vector<std::string> negative_mining_select(const std::map<std::string, double>& scores,
                                                int z) {
  if (z < 0) throw std::invalid_argument("z must be >= 0");
  auto ids = sorted_ids(scores, false);
  ids.resize(std::min<std::size_t>(z, ids.size()));
  return ids;
}

Clustering kmeans_cluster(const std::vector<std::vector<double>>& points, int k,
                          std::uint64_t seed, int max_iterations) {
  const int n = static_cast<int>(points.size());
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (k > n) throw std::invalid_argument("k exceeds the number of points");
  const std::size_t dim = points.front().size();
  for (const auto& p : points)
    if (p.size() != dim) throw std::invalid_argument("embeddings differ in dimension");

  Clustering c;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  partial_shuffle(order, k, rng);
  for (int j = 0; j < k; ++j) c.centers.push_back(points[order[j]]);

  c.assignment.assign(n, -1);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        const double d = sq_dist(points[i], c.centers[j]);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      if (c.assignment[i] != best) {
        c.assignment[i] = best;
        changed = true;
      }
    }
    // Re-seed empty clusters with the point farthest from its own center.
    std::vector<int> counts(k, 0);
    for (int a : c.assignment) ++counts[a];
    for (int j = 0; j < k; ++j) {
      if (counts[j] > 0) continue;
      int far = -1;
      double far_d = -1.0;
      for (int i = 0; i < n; ++i) {
        if (counts[c.assignment[i]] <= 1) continue;
        const double d = sq_dist(points[i], c.centers[c.assignment[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far < 0) continue;
      --counts[c.assignment[far]];
      c.assignment[far] = j;
      counts[j] = 1;
      changed = true;
    }
    for (int j = 0; j < k; ++j) {
      std::vector<double> sum(dim, 0.0);
      for (int i = 0; i < n; ++i)
        if (c.assignment[i] == j)
          for (std::size_t d = 0; d < dim; ++d) sum[d] += points[i][d];
      for (std::size_t d = 0; d < dim; ++d) c.centers[j][d] = sum[d] / counts[j];
    }
    double sse = 0.0;
    for (int i = 0; i < n; ++i) sse += sq_dist(points[i], c.centers[c.assignment[i]]);
    c.objective_trace.push_back(sse);
    c.iterations = it + 1;
    if (!changed) break;
  }
  return c;
}

std::vector<std::string> multicluster_select(const std::vector<std::string>& ids,
                                             const std::vector<std::vector<double>>& points,
                                             const Clustering& clustering, int z,
                                             ClusterMode mode, std::uint64_t seed) {
  if (z < 0) throw std::invalid_argument("z must be >= 0");
  const std::size_t n = ids.size();
  if (points.size() != n || clustering.assignment.size() != n)
    throw std::invalid_argument("clustering does not match the candidate list");
  if (static_cast<std::size_t>(z) >= n) return ids;

  const int k = static_cast<int>(clustering.centers.size());
  std::vector<std::vector<int>> members(k);
  for (std::size_t i = 0; i < n; ++i) members[clustering.assignment[i]].push_back(static_cast<int>(i));

  Rng rng(seed);
  std::vector<int> picked;
  std::vector<char> used(n, 0);

  if (mode == ClusterMode::kNearestCenter) {
    for (int j = 0; j < k; ++j)
      std::stable_sort(members[j].begin(), members[j].end(), [&](int a, int b) {
        return sq_dist(points[a], clustering.centers[j]) < sq_dist(points[b], clustering.centers[j]);
      });
    std::vector<std::size_t> next(k, 0);
    while (picked.size() < static_cast<std::size_t>(z)) {
      bool any = false;
      for (int j = 0; j < k && picked.size() < static_cast<std::size_t>(z); ++j) {
        if (next[j] >= members[j].size()) continue;
        picked.push_back(members[j][next[j]++]);
        any = true;
      }
      if (!any) break;
    }
  } else {
    std::vector<double> sizes;
    for (const auto& m : members) sizes.push_back(static_cast<double>(m.size()));
    std::vector<double> sorted = sizes;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted.size() % 2 ? sorted[sorted.size() / 2]
                                            : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
    std::vector<int> pool;
    for (int j = 0; j < k; ++j) {
      const bool take = k == 1 || (mode == ClusterMode::kSparseRegion ? sizes[j] < median
                                                                       : sizes[j] > median);
      if (take) pool.insert(pool.end(), members[j].begin(), members[j].end());
    }
    std::sort(pool.begin(), pool.end());
    partial_shuffle(pool, z, rng);
    pool.resize(std::min<std::size_t>(z, pool.size()));
    picked = pool;
  }

  for (int i : picked) used[i] = 1;
  if (picked.size() < static_cast<std::size_t>(z)) {
    std::vector<int> rest;
    for (std::size_t i = 0; i < n; ++i)
      if (!used[i]) rest.push_back(static_cast<int>(i));
    const std::size_t need = z - picked.size();
    partial_shuffle(rest, need, rng);
    picked.insert(picked.end(), rest.begin(), rest.begin() + need);
  }

  std::vector<std::string> out;
  out.reserve(picked.size());
  for (int i : picked) out.push_back(ids[i]);
  return out;
}

json report_to_json(const MiningReport& r) {
  json scores = json::array();
  for (const auto& id : r.ranking) scores.push_back({{"id", id}, {"I", r.scores.at(id)}});
  return {{"method", r.method},
          {"z", r.z},
          {"n_experts", r.n_experts},
          {"scores", scores},
          {"selected", r.selected},
          {"seed", r.seed},
          {"config_hash", hex64(r.config_hash)}};
}

MiningReport report_from_json(const json& j) {
  MiningReport r;
  r.method = j.at("method").get<std::string>();
  r.z = j.at("z").get<int>();
  r.n_experts = j.value("n_experts", 0);
  for (const auto& s : j.at("scores")) {
    const auto id = s.at("id").get<std::string>();
    r.scores[id] = s.at("I").get<double>();
    r.ranking.push_back(id);
  }
  r.R = static_cast<int>(r.ranking.size());
  r.selected = j.at("selected").get<std::vector<std::string>>();
  r.seed = j.value("seed", std::uint64_t{0});
  r.config_hash = std::stoull(j.value("config_hash", std::string("0")), nullptr, 16);
  return r;
}

void write_report(const std::filesystem::path& path, const MiningReport& r) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << report_to_json(r).dump(2) << '\n';
}

MiningReport read_report(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open mining report " + path.string());
  try {
    return report_from_json(json::parse(f));
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_report_csv(const std::filesystem::path& path, const MiningReport& r) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  const std::set<std::string> sel(r.selected.begin(), r.selected.end());
  f << "id,I_j,rank,selected\n" << std::setprecision(12);
  for (std::size_t k = 0; k < r.ranking.size(); ++k) {
    const auto& id = r.ranking[k];
    f << id << ',' << r.scores.at(id) << ',' << k + 1 << ',' << (sel.count(id) ? 1 : 0) << '\n';
  }
}

}  // namespace sdeloc
