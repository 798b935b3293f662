// tests/unit/experts_test.cc

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
#include <numbers>
#include <random>

#include <doctest.h>

#include "sdeloc/experts.h"
#include "sdeloc/hash.h"
#include "support.h"

using namespace sdeloc;
using sdeloc::testing::TempDir;

namespace {

// Frames are genuine when x0 + x1 > 0; every point keeps a 0.3 margin.
Dataset separable(int clips, int frames, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  Dataset d;
  for (int c = 0; c < clips; ++c) {
    LabeledClip lc;
    lc.features = FeatureMatrix("toy" + std::to_string(c), frames, 2);
    for (int t = 0; t < frames; ++t) {
      double a, b;
      do {
        a = N(rng);
        b = N(rng);
      } while (std::abs(a + b) < 0.3);
      lc.features.at(t, 0) = a;
      lc.features.at(t, 1) = b;
      lc.targets.push_back(a + b > 0 ? 1.0 : 0.0);
    }
    d.push_back(std::move(lc));
  }
  return d;
}

ExpertConfig toy_config() {
  ExpertConfig c;
  c.context = 0;
  c.hidden_dims = {8};
  c.latent_dim = 6;
  c.lr = 0.01;
  c.epochs = 30;
  c.batch_size = 8;
  return c;
}

double fd_rel_error(const std::vector<double>& g, const std::vector<double>& fd) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    diff += (g[k] - fd[k]) * (g[k] - fd[k]);
    na += g[k] * g[k];
    nb += fd[k] * fd[k];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

// One latent unit: h = relu(w . x + b), p = sigmoid(v h + c).
Expert tiny(double w0, double w1, double b, double v, double c) {
  ExpertConfig cfg;
  cfg.context = 0;
  cfg.hidden_dims = {};
  cfg.latent_dim = 1;
  Expert e(cfg, 2, 0);
  e.params() = {w0, w1, b, v, c};
  return e;
}

FeatureMatrix one_frame(double a, double b) {
  FeatureMatrix f("f", 1, 2);
  f.at(0, 0) = a;
  f.at(0, 1) = b;
  return f;
}

}  // namespace

TEST_SUITE("experts") {
  TEST_CASE("zero parameters give p = 0.5") {
    ExpertConfig cfg;
    Expert e(cfg, 5, 0);
    FeatureMatrix f("z", 7, 5);
    for (double& v : f.values) v = 3.0;
    for (double p : run_clip(e, f).p) CHECK(p == 0.5);
  }

  TEST_CASE("hand-set network matches the closed form") {
    const Expert e = tiny(2.0, -1.0, 0.5, 0.8, -1.0);
    const FrameOutput o = forward(e, one_frame(1.0, 0.0), 0);
    REQUIRE(o.h.size() == 1);
    CHECK(o.h[0] == doctest::Approx(2.5));
    CHECK(o.p == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
    // ReLU clips a negative pre-activation
    CHECK(forward(e, one_frame(-1.0, 0.0), 0).h[0] == 0.0);
    CHECK(forward(e, one_frame(-1.0, 0.0), 0).p == doctest::Approx(1.0 / (1.0 + std::exp(1.0))));
  }

  TEST_CASE("forward is deterministic and agrees with run_clip") {
    ExpertConfig cfg;
    Expert e(cfg, 4, 0);
    e.initialize(3);
    FeatureMatrix f("r", 9, 4);
    Rng rng(1);
    for (double& v : f.values) v = uniform01(rng) - 0.5;
    const ClipOutput a = run_clip(e, f);
    CHECK(a.p == run_clip(e, f).p);
    for (int t = 0; t < f.rows; ++t) CHECK(forward(e, f, t).p == doctest::Approx(a.p[t]).epsilon(1e-14));
    CHECK_THROWS(forward(e, f, 9));
    CHECK_THROWS(run_clip(e, FeatureMatrix("bad", 3, 5)));
  }

  TEST_CASE("context windows are zero outside the clip") {
    ExpertConfig cfg;
    cfg.context = 1;
    Expert e(cfg, 2, 0);
    FeatureMatrix f("c", 3, 2);
    for (int i = 0; i < 6; ++i) f.values[i] = i + 1;
    const RowMatrix x = build_inputs(e, f);
    REQUIRE(x.cols() == 6);
    CHECK(x(0, 0) == 0.0);
    CHECK(x(0, 2) == 1.0);
    CHECK(x(0, 4) == 3.0);
    CHECK(x(2, 4) == 0.0);
  }

  TEST_CASE("bce closed forms") {
    const std::vector<double> y = {1, 0, 1, 1, 0};
    CHECK(bce_sample_loss(y, y) <= 5 * 1e-6);
    const std::vector<double> half(5, 0.5);
    CHECK(bce_sample_loss(half, y) == doctest::Approx(5 * std::numbers::ln2));
    const std::vector<std::vector<double>> p = {{0.2, 0.7}, {0.9}, {0.4, 0.4, 0.1}};
    const std::vector<std::vector<double>> t = {{0, 1}, {1}, {1, 0, 0}};
    const std::vector<std::vector<double>> p2 = {p[2], p[0], p[1]}, t2 = {t[2], t[0], t[1]};
    CHECK(bce_loss(p, t) == doctest::Approx(bce_loss(p2, t2)).epsilon(1e-15));
    CHECK_THROWS(bce_loss(p, {t[0]}));
  }

  TEST_CASE("bce gradient matches finite differences") {
    std::vector<std::vector<double>> p = {{0.2, 0.7}, {0.9}, {0.4, 0.35, 0.1}};
    const std::vector<std::vector<double>> t = {{0, 1}, {1}, {1, 0, 0.2}};
    const auto g = bce_loss_grad(p, t);
    for (std::size_t j = 0; j < p.size(); ++j)
      for (std::size_t i = 0; i < p[j].size(); ++i) {
        const double keep = p[j][i];
        p[j][i] = keep + 1e-6;
        const double up = bce_loss(p, t);
        p[j][i] = keep - 1e-6;
        const double dn = bce_loss(p, t);
        p[j][i] = keep;
        CHECK(g[j][i] == doctest::Approx((up - dn) / 2e-6).epsilon(1e-6));
      }
  }

  TEST_CASE("cosine similarity") {
    const std::vector<double> a = {1, 2, 3}, b = {4, 5, 6};
    CHECK(cosine_sim(a, a) == doctest::Approx(1.0));
    CHECK(cosine_sim(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
    CHECK(cosine_sim(a, b) == doctest::Approx(32.0 / (std::sqrt(14.0) * std::sqrt(77.0))));
    CHECK(cosine_sim(a, b) == doctest::Approx(0.97463).epsilon(1e-5));
    CHECK(cosine_sim(std::vector<double>{0, 0, 0}, a) == 0.0);
    CHECK_THROWS(cosine_sim(a, std::vector<double>{1, 2}));
  }

  TEST_CASE("distillation hinge") {
    const std::vector<double> h = {1, 0};
    CHECK(distillation_loss(h, {{0, 1}, {1, 1.5}}, 0.75, 1.0) == 0.0);
    CHECK(distillation_loss(h, {h}, 0.75, 1.0) == doctest::Approx(0.03125));
    // cos values 1.0 and 0.5
    const std::vector<double> at60 = {0.5, std::sqrt(3.0) / 2};
    CHECK(distillation_loss(h, {h, at60}, 0.75, 1.0) == doctest::Approx(0.015625));
    CHECK(distillation_loss(h, {}, 0.75, 1.0) == 0.0);
    CHECK(distillation_loss(h, {h}, 0.75, 0.0) == 0.0);
  }

  TEST_CASE("distillation gradient matches finite differences") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> h(5);
      for (double& v : h) v = uniform01(rng);
      std::vector<std::vector<double>> prev(3, std::vector<double>(5));
      for (auto& g : prev)
        for (std::size_t k = 0; k < 5; ++k) g[k] = h[k] + 0.3 * (uniform01(rng) - 0.5);
      const auto g = distillation_loss_grad(h, prev, 0.6, 1.0);
      std::vector<double> fd(5);
      for (std::size_t k = 0; k < 5; ++k) {
        const double keep = h[k];
        h[k] = keep + 1e-6;
        const double up = distillation_loss(h, prev, 0.6, 1.0);
        h[k] = keep - 1e-6;
        const double dn = distillation_loss(h, prev, 0.6, 1.0);
        h[k] = keep;
        fd[k] = (up - dn) / 2e-6;
      }
      CHECK(fd_rel_error(g, fd) < 1e-6);
    }
  }

  TEST_CASE("total loss composition") {
    // p = 0.5 through a zero head; the latent is the constant bias 1.
    Expert e = tiny(0.0, 0.0, 1.0, 0.0, 0.0);
    Expert prev = e;
    Dataset batch(1);
    batch[0].features = one_frame(0.3, -0.2);
    batch[0].targets = {1.0};
    const LossBreakdown l = total_loss(batch, e, {prev});
    CHECK(l.bce == doctest::Approx(std::numbers::ln2));
    CHECK(l.dis == doctest::Approx(0.03125));
    CHECK(l.total == doctest::Approx(std::numbers::ln2 + 0.03125));

    const LossBreakdown none = total_loss(batch, e, {});
    CHECK(none.total == bce_loss({run_clip(e, batch[0].features).p}, {batch[0].targets}));
    CHECK(none.dis == 0.0);

    // an orthogonal predecessor leaves the hinge inactive
    Expert other = tiny(0.0, 0.0, 0.0, 0.0, 0.0);
    CHECK(total_loss(batch, e, {other}).total == none.total);
  }

  TEST_CASE("total loss gradient matches central differences") {
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
      ExpertConfig cfg;
      cfg.context = 1;
      cfg.hidden_dims = {5};
      cfg.latent_dim = 4;
      cfg.u = 0.3 + 0.4 * uniform01(rng);
      cfg.per_frame_distillation = trial % 2;
      cfg.dis_weight = trial % 3 ? 1.0 : 7.5;
      Expert prev(cfg, 3, 0), e(cfg, 3, 1);
      prev.initialize(rng());
      e.params() = prev.params();
      for (double& p : e.params()) p += 0.1 * (uniform01(rng) - 0.5);
      Dataset batch(1 + trial % 3);
      for (auto& c : batch) {
        c.features = FeatureMatrix("g", 4 + trial % 3, 3);
        for (double& v : c.features.values) v = 2.0 * uniform01(rng) - 1.0;
        for (int t = 0; t < c.features.rows; ++t) c.targets.push_back(uniform01(rng) < 0.5 ? 0.0 : 1.0);
      }
      std::vector<double> g;
      total_loss(batch, e, {prev}, &g);
      std::vector<double> fd(g.size());
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double keep = e.params()[k];
        e.params()[k] = keep + 1e-5;
        const double up = total_loss(batch, e, {prev}).total;
        e.params()[k] = keep - 1e-5;
        const double dn = total_loss(batch, e, {prev}).total;
        e.params()[k] = keep;
        fd[k] = (up - dn) / 2e-5;
      }
      CHECK(fd_rel_error(g, fd) <= 1e-4);
    }
  }

  TEST_CASE("separable toy data is learned") {
    const Dataset train = separable(40, 20, 1), val = separable(10, 20, 2);
    const Expert e = train_expert(train, {}, toy_config(), &val);
    CHECK(frame_accuracy(e, val) >= 0.95);
  }

  TEST_CASE("zero epochs returns the initialized expert") {
    const Dataset train = separable(5, 10, 3);
    ExpertConfig cfg = toy_config();
    cfg.epochs = 0;
    cfg.seed = 17;
    const Expert e = train_expert(train, {}, cfg);
    Expert fresh(cfg, 2, 0);
    fresh.initialize(derive_seed(17, 0x1a170000ULL));
    CHECK(e.params() == fresh.params());
  }

  TEST_CASE("training is seed-deterministic") {
    const Dataset train = separable(12, 10, 4);
    ExpertConfig cfg = toy_config();
    cfg.epochs = 3;
    cfg.max_epochs = 0;
    std::vector<TrainingLogRow> la, lb;
    const Expert a = train_expert(train, {}, cfg, nullptr, &la);
    const Expert b = train_expert(train, {}, cfg, nullptr, &lb);
    CHECK(a.params() == b.params());
    REQUIRE(la.size() == 3);
    CHECK(la.back().total == lb.back().total);
    cfg.seed = 1;
    CHECK(train_expert(train, {}, cfg).params() != a.params());
  }

  TEST_CASE("accuracy floor extends training up to the cap") {
    const Dataset train = separable(10, 10, 6);
    ExpertConfig cfg = toy_config();
    cfg.epochs = 1;
    cfg.lr = 1e-6;
    cfg.accuracy_floor = 0.999;
    cfg.max_epochs = 4;
    std::vector<TrainingLogRow> log;
    train_expert(train, {}, cfg, nullptr, &log);
    CHECK(log.size() == 4);
  }

  TEST_CASE("ensembles") {
    const Dataset train = separable(30, 20, 7), val = separable(10, 20, 8);
    ExpertConfig cfg = toy_config();
    cfg.epochs = 15;
    const Ensemble one = train_ensemble(train, cfg, 1, &val);
    CHECK(one.size() == 1);

    cfg.u = 0.5;
    const Ensemble two = train_ensemble(train, cfg, 2, &val);
    REQUIRE(two.size() == 2);
    CHECK(two.experts[1].index() == 1);
    double cos_sum = 0;
    int frames = 0;
    for (const auto& c : val)
      for (int t = 0; t < c.features.rows; ++t) {
        cos_sum += cosine_sim(forward(two.experts[0], c.features, t).h, forward(two.experts[1], c.features, t).h);
        ++frames;
      }
    CHECK(cos_sum / frames <= cfg.u + 0.1);

    // resume keeps the given experts and trains the rest
    int calls = 0;
    const Ensemble resumed = train_ensemble(train, cfg, 2, &val, {two.experts[0]},
                                            [&](const Expert&, const std::vector<TrainingLogRow>&) { ++calls; });
    CHECK(calls == 1);
    CHECK(resumed.experts[1].params() == two.experts[1].params());
  }

  TEST_CASE("ten experts all reach the accuracy floor") {
    const Dataset train = separable(30, 20, 9), val = separable(10, 20, 10);
    ExpertConfig cfg = toy_config();
    cfg.epochs = 10;
    cfg.max_epochs = 40;
    const Ensemble e = train_ensemble(train, cfg, 10, &val);
    REQUIRE(e.size() == 10);
    for (const auto& x : e.experts) CHECK(frame_accuracy(x, val) >= cfg.accuracy_floor);
  }

  TEST_CASE("checkpoint round trip and validation") {
    TempDir dir("ckpt");
    const Dataset train = separable(6, 10, 12);
    ExpertConfig cfg = toy_config();
    cfg.epochs = 2;
    const Expert e = train_expert(train, {}, cfg);
    write_checkpoint(dir.path() / "e.ckpt", e);
    const Expert back = read_checkpoint(dir.path() / "e.ckpt", cfg);
    CHECK(back.params() == e.params());
    CHECK(back.normalizer().mean == e.normalizer().mean);
    CHECK(back.normalizer().inv_std == e.normalizer().inv_std);
    CHECK(back.index() == e.index());

    ExpertConfig other = cfg;
    other.u = 0.5;
    CHECK_THROWS(read_checkpoint(dir.path() / "e.ckpt", other));
    const std::string bytes = sdeloc::testing::slurp(dir.path() / "e.ckpt");
    std::ofstream(dir.path() / "t.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
    CHECK_THROWS(read_checkpoint(dir.path() / "t.ckpt", cfg));
  }

  TEST_CASE("training log csv") {
    TempDir dir("log");
    write_training_log(dir.path() / "l.csv", {{1, 0.5, 0.25, 0.75, 0.9}});
    const std::string s = sdeloc::testing::slurp(dir.path() / "l.csv");
    CHECK(s.rfind("epoch,bce,dis_loss,total,val_accuracy\n", 0) == 0);
    CHECK(s.find("1,0.5,0.25,0.75,0.9") != std::string::npos);
  }

  TEST_CASE("config json and validation") {
    ExpertConfig c = toy_config();
    c.shared_init = true;
    c.dis_weight = 3.0;
    CHECK(ExpertConfig::from_json(c.to_json()).to_json() == c.to_json());
    CHECK(ExpertConfig::from_json(c.to_json()).hash() == c.hash());
    ExpertConfig bad = c;
    bad.u = 1.0;
    CHECK_THROWS(bad.validate());
    bad = c;
    bad.latent_dim = 0;
    CHECK_THROWS(bad.validate());
    bad = c;
    bad.dis_weight = -1;
    CHECK_THROWS(bad.validate());
  }

  TEST_CASE("empty or mislabeled training data is rejected") {
    CHECK_THROWS(train_expert({}, {}, toy_config()));
    Dataset d = separable(2, 5, 1);
    d[1].targets.pop_back();
    CHECK_THROWS(train_expert(d, {}, toy_config()));
  }
}
