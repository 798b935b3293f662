// tests/unit/eval_test.cc

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

#include <cmath>
#include <algorithm>
#include <numeric>

#include <doctest.h>

#include "sdeloc/eval.h"
#include "sdeloc/hash.h"
#include "support.h"

using namespace sdeloc;
using sdeloc::testing::TempDir;

namespace {

FrameLabels L(std::vector<int> v, std::string id = "c") { return FrameLabels{std::move(id), std::move(v)}; }

// Pairwise summation.
double pairwise_sum(const double* x, std::size_t n) {
  if (n == 1) return x[0];
  return pairwise_sum(x, n / 2) + pairwise_sum(x + n / 2, n - n / 2);
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("frame metrics") {
    const FrameLabels t = L({0, 0, 1, 1, 0, 1});
    const PRF same = frame_metrics(t, t);
    CHECK(same.precision == 1.0);
    CHECK(same.recall == 1.0);
    CHECK(same.f1 == 1.0);

    const PRF none = frame_metrics(L({1, 1, 1, 1, 1, 1}), t);
    CHECK(none.recall == 0.0);
    CHECK(none.f1 == 0.0);
    CHECK(none.zero_division);

    const PRF p = prf_from_confusion({2, 3, 2, 0});
    CHECK(p.precision == doctest::Approx(0.4));
    CHECK(p.recall == doctest::Approx(0.5));
    CHECK(p.f1 == doctest::Approx(4.0 / 9.0));
    CHECK(!p.zero_division);
    CHECK_THROWS(frame_metrics(L({0}), L({0, 1})));
  }

  TEST_CASE("confusion counts manipulated frames as positive") {
    const FrameConfusion c = confusion(L({0, 0, 1, 1}), L({0, 1, 0, 1}));
    CHECK(c.tp == 1);
    CHECK(c.fp == 1);
    CHECK(c.fn == 1);
    CHECK(c.tn == 1);
    const FrameConfusion g = confusion(L({0, 0, 0, 1}), L({0, 1, 1, 1}), true);
    CHECK(g.tp == 1);
    CHECK(g.fn == 2);
    CHECK(g.tn == 1);
  }

  TEST_CASE("f1 identities on random counts") {
    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
      FrameConfusion c;
      c.tp = 1 + rng() % 50;
      c.fp = rng() % 50;
      c.fn = rng() % 50;
      const PRF p = prf_from_confusion(c);
      // 2PR/(P+R) == 2tp/(2tp+fp+fn)
      CHECK(p.f1 == doctest::Approx(2.0 * c.tp / (2.0 * c.tp + c.fp + c.fn)).epsilon(1e-14));
      std::swap(c.fp, c.fn);
      const PRF q = prf_from_confusion(c);
      CHECK(q.f1 == doctest::Approx(p.f1).epsilon(1e-14));
      CHECK(q.precision == doctest::Approx(p.recall).epsilon(1e-14));
    }
  }

  TEST_CASE("sentence accuracy") {
    const std::vector<FrameLabels> truth = {L({0, 1, 1}, "a"), L({1, 1}, "b")};
    CHECK(sentence_accuracy(truth, truth) == 1.0);
    std::vector<FrameLabels> pred = truth;
    pred[1].labels[0] = 0;
    CHECK(sentence_accuracy(pred, truth) == 0.5);
    CHECK_THROWS(sentence_accuracy({}, {}));
    CHECK_THROWS(sentence_accuracy({truth[0]}, truth));
    CHECK_THROWS(sentence_accuracy({truth[1], truth[0]}, truth));
  }

  TEST_CASE("dissimilarity") {
    Rng rng(8);
    std::vector<FrameLabels> a;
    for (int c = 0; c < 4; ++c) {
      FrameLabels l = L(std::vector<int>(25), "c" + std::to_string(c));
      for (int& v : l.labels) v = rng() % 2;
      a.push_back(l);
    }
    std::vector<FrameLabels> inv = a, part = a;
    for (auto& l : inv)
      for (int& v : l.labels) v = 1 - v;
    for (int k = 0; k < 25; ++k) part[k % 4].labels[k] = 1 - part[k % 4].labels[k];
    const auto m = dissimilarity_matrix({a, a, inv, part});
    CHECK(m[0][1] == 0.0);
    CHECK(m[0][2] == 1.0);
    CHECK(m[0][3] == doctest::Approx(0.25));
    for (int i = 0; i < 4; ++i) {
      CHECK(m[i][i] == 0.0);
      for (int j = 0; j < 4; ++j) CHECK(m[i][j] == m[j][i]);
    }
    CHECK(mean_pairwise({{0, 0.2}, {0.2, 0}}) == doctest::Approx(0.2));
    CHECK_THROWS(dissimilarity_matrix(std::vector<std::vector<FrameLabels>>{{}, {}}));
  }

  TEST_CASE("dissimilarity of a copied expert") {
    ExpertConfig cfg;
    Expert e(cfg, 3, 0);
    e.initialize(5);
    Ensemble ens;
    ens.experts = {e, e};
    FeatureMatrix f("d", 6, 3);
    for (std::size_t k = 0; k < f.values.size(); ++k) f.values[k] = std::sin(k * 0.7);
    const auto m = dissimilarity_matrix(ens, {f});
    CHECK(m[0][1] == 0.0);
    CHECK_THROWS(dissimilarity_matrix(ens, {}));
  }

  TEST_CASE("decide") {
    CHECK(decide({0.9, 0.5, 0.1}).labels == std::vector<int>{1, 0, 0});
  }

  TEST_CASE("entropy summary") {
    CHECK(entropy_summary(std::vector<double>{0, 0, 0}).mean == 0.0);
    const EntropySummary s = entropy_summary(std::vector<double>{1, 2, 3});
    CHECK(s.mean == doctest::Approx(2.0));
    CHECK(s.max == 3.0);
    REQUIRE(s.histogram.size() == 20);
    CHECK(s.histogram.back() == 1);
    CHECK(std::accumulate(s.histogram.begin(), s.histogram.end(), 0) == 3);

    Rng rng(1);
    std::vector<double> v(1001);
    for (double& x : v) x = 50 * uniform01(rng);
    CHECK(std::abs(entropy_summary(v).mean - pairwise_sum(v.data(), v.size()) / v.size()) <= 1e-12);

    const MiningReport r1 = rank_and_select({{"a", 1.0}}, 1);
    const MiningReport r2 = rank_and_select({{"b", 3.0}, {"c", 5.0}}, 0);
    CHECK(entropy_summary({r1, r2}).mean == doctest::Approx(3.0));
    CHECK_THROWS(entropy_summary(std::vector<double>{}));
  }

  TEST_CASE("metrics files") {
    TempDir dir("metrics");
    const std::vector<MetricsRow> rows = {{"r0", "sde", 50, 0.5, 0.25, 1.0 / 3.0, 0.1, 12.5},
                                          {"r0", "random", 50, 0.4, 0.2, 0.26, 0.0, 3.0}};
    write_metrics_json(dir.path() / "m.json", rows);
    const auto back = read_metrics_json(dir.path() / "m.json");
    REQUIRE(back.size() == 2);
    CHECK(back[0].f1 == rows[0].f1);
    CHECK(back[1].method == "random");
    CHECK(back[1].z == 50);
    write_metrics_csv(dir.path() / "m.csv", rows);
    const std::string csv = sdeloc::testing::slurp(dir.path() / "m.csv");
    CHECK(csv.rfind("run,method,z,precision,recall,f1,sentence_acc,mean_entropy\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  }
}
