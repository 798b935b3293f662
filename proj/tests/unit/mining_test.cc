// tests/unit/mining_test.cc

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

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <doctest.h>

#include "sdeloc/mining.h"
#include "sdeloc/hash.h"
#include "support.h"

using namespace sdeloc;
using sdeloc::testing::TempDir;

namespace {

VoteMatrix votes(std::vector<int> m, int n) {
  VoteMatrix v;
  v.m = std::move(m);
  v.n = n;
  return v;
}

long double entropy_oracle(long double p) {
  if (p <= 0 || p >= 1) return 0;
  return -(p * std::log2l(p) + (1 - p) * std::log2l(1 - p));
}

}  // namespace

TEST_SUITE("mining") {
  TEST_CASE("frame entropy") {
    CHECK(frame_entropy(0.0) == 0.0);
    CHECK(frame_entropy(1.0) == 0.0);
    CHECK(frame_entropy(0.5) == doctest::Approx(1.0));
    CHECK(frame_entropy(0.1) == doctest::Approx(0.46900).epsilon(1e-5));
    for (int k = 1; k < 100; ++k) {
      const double p = k / 100.0;
      CHECK(frame_entropy(p) == doctest::Approx(frame_entropy(1.0 - p)).epsilon(1e-12));
      CHECK(frame_entropy(p) == doctest::Approx(static_cast<double>(entropy_oracle(p))).epsilon(1e-12));
    }
    CHECK_THROWS(frame_entropy(-0.01));
    CHECK_THROWS(frame_entropy(1.01));
  }

  TEST_CASE("sample information") {
    CHECK(sample_information(votes({0, 10, 10, 0}, 10)) == 0.0);
    CHECK(sample_information(votes(std::vector<int>(100, 1), 2)) == doctest::Approx(100.0));
    CHECK(sample_information(votes({1, 5, 10}, 10)) == doctest::Approx(1.46900).epsilon(1e-5));
    CHECK(sample_information(votes({1, 5, 10}, 10)) > 0);
  }

  TEST_CASE("votes from probabilities") {
    // one of ten experts calls frame 0 manipulated
    std::vector<std::vector<double>> p(10, std::vector<double>{0.9, 0.01});
    p[3][0] = 0.2;
    const VoteMatrix v = votes_from_probs(p);
    CHECK(v.n == 10);
    CHECK(v.m == std::vector<int>{1, 10});
    CHECK(v.prob(0) == doctest::Approx(0.1));
    CHECK(v.prob(1) == 1.0);
    // p = 0.5 sits on the threshold and counts as manipulated
    CHECK(votes_from_probs({{0.5}}).m[0] == 1);
    CHECK(votes_from_probs({{std::nextafter(0.5, 1.0)}}).m[0] == 0);
    CHECK_THROWS(votes_from_probs({}));
    CHECK_THROWS(votes_from_probs({{0.1, 0.2}, {0.3}}));
  }

  TEST_CASE("ensemble vote") {
    ExpertConfig cfg;
    cfg.context = 0;
    cfg.hidden_dims = {};
    cfg.latent_dim = 1;
    Ensemble e;
    for (double c : {-4.6, -4.6, 4.6}) {  // head bias only: p = sigmoid(c)
      Expert x(cfg, 2, static_cast<int>(e.size()));
      x.params() = {0, 0, 0, 0, c};
      e.experts.push_back(x);
    }
    FeatureMatrix f("v", 3, 2);
    const VoteMatrix v = ensemble_vote(e, f);
    CHECK(v.clip_id == "v");
    CHECK(v.m == std::vector<int>{2, 2, 2});
    CHECK_THROWS(ensemble_vote(Ensemble{}, f));
  }

  TEST_CASE("rank and select") {
    const std::map<std::string, double> s = {{"a", 2.0}, {"b", 3.0}, {"c", 3.0}};
    const MiningReport r = rank_and_select(s, 2);
    CHECK(r.selected == std::vector<std::string>{"b", "c"});
    CHECK(r.ranking == std::vector<std::string>{"b", "c", "a"});
    CHECK(r.R == 3);
    CHECK(rank_and_select(s, 0).selected.empty());
    CHECK(rank_and_select(s, 3).selected == r.ranking);
    CHECK(rank_and_select(s, 9).selected == r.ranking);
    CHECK_THROWS(rank_and_select(s, -1));
  }

  TEST_CASE("top-z consistency on random scores") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
      std::map<std::string, double> s;
      for (int i = 0; i < 30; ++i) s["c" + std::to_string(i)] = std::floor(uniform01(rng) * 8);
      const int z = trial % 31;
      const MiningReport r = rank_and_select(s, z);
      const std::set<std::string> sel(r.selected.begin(), r.selected.end());
      for (const auto& [a, ia] : s)
        for (const auto& [b, ib] : s)
          if (ia > ib && sel.count(b)) CHECK(sel.count(a));
    }
  }

  TEST_CASE("random selection") {
    const std::vector<std::string> c = {"a", "b", "c"};
    std::map<std::string, int> hits;
    for (int t = 0; t < 3000; ++t) hits[random_select(c, 1, t).front()]++;
    for (const auto& id : c) CHECK(std::abs(hits[id] - 1000) <= 100);
    CHECK(random_select(c, 2, 7) == random_select(c, 2, 7));
    auto all = random_select(c, 3, 1);
    std::sort(all.begin(), all.end());
    CHECK(all == c);
    CHECK(random_select(c, 0, 1).empty());
  }

  TEST_CASE("negative mining") {
    CHECK(negative_mining_select({{"a", 0}, {"b", 5}}, 1) == std::vector<std::string>{"a"});
    CHECK(negative_mining_select({{"b", 1}, {"a", 1}, {"c", 0}}, 2) == std::vector<std::string>{"c", "a"});
    const std::map<std::string, double> s = {{"a", 4}, {"b", 1}, {"c", 3}, {"d", 2}, {"e", 5}};
    for (int z = 0; z <= 5; ++z) {
      const auto neg = negative_mining_select(s, z);
      const auto top = rank_and_select(s, 5 - z).selected;
      std::set<std::string> u(neg.begin(), neg.end());
      u.insert(top.begin(), top.end());
      CHECK(u.size() == 5);
    }
    CHECK(negative_mining_select(s, 5).size() == 5);
  }

  TEST_CASE("k-means") {
    std::vector<std::vector<double>> pts;
    Rng rng(2);
    for (int i = 0; i < 40; ++i) {
      const double off = i < 15 ? 0.0 : 10.0;
      pts.push_back({off + uniform01(rng), off + uniform01(rng)});
    }
    const Clustering one = kmeans_cluster(pts, 1, 1);
    double mx = 0, my = 0;
    for (const auto& p : pts) mx += p[0] / 40, my += p[1] / 40;
    CHECK(one.centers[0][0] == doctest::Approx(mx));
    CHECK(one.centers[0][1] == doctest::Approx(my));

    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Clustering two = kmeans_cluster(pts, 2, seed);
      for (int i = 0; i < 40; ++i) CHECK((two.assignment[i] == two.assignment[0]) == (i < 15));
      for (std::size_t k = 1; k < two.objective_trace.size(); ++k)
        CHECK(two.objective_trace[k] <= two.objective_trace[k - 1] + 1e-12);
    }
    const Clustering six = kmeans_cluster(pts, 6, 3);
    for (std::size_t k = 1; k < six.objective_trace.size(); ++k)
      CHECK(six.objective_trace[k] <= six.objective_trace[k - 1] + 1e-12);
    CHECK(six.assignment == kmeans_cluster(pts, 6, 3).assignment);
    CHECK_THROWS(kmeans_cluster(pts, 41, 0));
    CHECK_THROWS(kmeans_cluster(pts, 0, 0));
  }

  TEST_CASE("multicluster selection") {
    std::vector<std::string> ids;
    std::vector<std::vector<double>> pts;
    Clustering cl;
    for (int i = 0; i < 100; ++i) {
      ids.push_back("k" + std::to_string(i));
      const int c = i < 10 ? 0 : 1;
      pts.push_back({c * 10.0 + i * 0.01});
      cl.assignment.push_back(c);
    }
    cl.centers = {{0.045}, {10.5}};
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto sel = multicluster_select(ids, pts, cl, 5, ClusterMode::kSparseRegion, seed);
      REQUIRE(sel.size() == 5);
      for (const auto& id : sel) CHECK(std::stoi(id.substr(1)) < 10);
      const auto dense = multicluster_select(ids, pts, cl, 5, ClusterMode::kDenseRegion, seed);
      for (const auto& id : dense) CHECK(std::stoi(id.substr(1)) >= 10);
    }
    // nearest-center alternates clusters, nearest member first
    const auto near = multicluster_select(ids, pts, cl, 4, ClusterMode::kNearestCenter, 0);
    CHECK(near == std::vector<std::string>{"k4", "k50", "k5", "k49"});
    for (auto mode : {ClusterMode::kNearestCenter, ClusterMode::kSparseRegion, ClusterMode::kDenseRegion}) {
      auto all = multicluster_select(ids, pts, cl, 100, mode, 1);
      CHECK(std::set<std::string>(all.begin(), all.end()).size() == 100);
      CHECK(multicluster_select(ids, pts, cl, 7, mode, 3) == multicluster_select(ids, pts, cl, 7, mode, 3));
    }
  }

  TEST_CASE("report round trip") {
    TempDir dir("report");
    MiningReport r = rank_and_select({{"x", 1.5}, {"y", 0.25}, {"z", 3.0}}, 2);
    r.n_experts = 4;
    r.seed = 9;
    r.config_hash = 0xabcdef;
    write_report(dir.path() / "r.json", r);
    const MiningReport back = read_report(dir.path() / "r.json");
    CHECK(back.selected == r.selected);
    CHECK(back.ranking == r.ranking);
    CHECK(back.scores == r.scores);
    CHECK(back.config_hash == r.config_hash);
    write_report(dir.path() / "s.json", back);
    CHECK(sdeloc::testing::slurp(dir.path() / "r.json") == sdeloc::testing::slurp(dir.path() / "s.json"));

    write_report_csv(dir.path() / "r.csv", r);
    const std::string csv = sdeloc::testing::slurp(dir.path() / "r.csv");
    CHECK(csv.rfind("id,I_j,rank,selected\n", 0) == 0);
    CHECK(csv.find("z,3,1,1") != std::string::npos);
    CHECK(csv.find("y,0.25,3,0") != std::string::npos);
  }
}
