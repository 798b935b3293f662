// src/eval.cc

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

#include "sdeloc/eval.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace sdeloc {

using nlohmann::json;

FrameConfusion& FrameConfusion::operator+=(const FrameConfusion& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

FrameConfusion confusion(const FrameLabels& pred, const FrameLabels& truth, bool genuine_positive) {
  if (pred.labels.size() != truth.labels.size())
    throw std::invalid_argument("frame count mismatch for '" + truth.clip_id + "': " +
                                std::to_string(pred.labels.size()) + " vs " +
                                std::to_string(truth.labels.size()));
  const int positive = genuine_positive ? kGenuine : kManipulated;
  FrameConfusion c;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const bool p = pred.labels[i] == positive;
    const bool t = truth.labels[i] == positive;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

PRF prf_from_confusion(const FrameConfusion& c) {
  PRF r;
  const auto ratio = [&](double num, double den) {
    if (den == 0.0) {
      r.zero_division = true;
      return 0.0;
    }
    return num / den;
  };
  r.precision = ratio(double(c.tp), double(c.tp + c.fp));
  r.recall = ratio(double(c.tp), double(c.tp + c.fn));
  r.f1 = ratio(2.0 * r.precision * r.recall, r.precision + r.recall);
  return r;
}

PRF frame_metrics(const FrameLabels& pred, const FrameLabels& truth, bool genuine_positive) {
  return prf_from_confusion(confusion(pred, truth, genuine_positive));
}

double sentence_accuracy(const std::vector<FrameLabels>& pred,
                         const std::vector<FrameLabels>& truth) {
  if (truth.empty()) throw std::invalid_argument("sentence accuracy of an empty corpus");
  if (pred.size() != truth.size()) throw std::invalid_argument("clip sets differ in size");
  std::size_t correct = 0;
  for (std::size_t c = 0; c < truth.size(); ++c) {
    if (!pred[c].clip_id.empty() && !truth[c].clip_id.empty() && pred[c].clip_id != truth[c].clip_id)
      throw std::invalid_argument("clip mismatch: '" + pred[c].clip_id + "' vs '" +
                                  truth[c].clip_id + "'");
    correct += pred[c].labels == truth[c].labels;
  }
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

std::vector<std::vector<double>> dissimilarity_matrix(
    const std::vector<std::vector<FrameLabels>>& decisions) {
  const std::size_t n = decisions.size();
  if (n == 0) throw std::invalid_argument("no experts");
  const std::size_t clips = decisions.front().size();
  if (clips == 0) throw std::invalid_argument("empty corpus");
  for (const auto& d : decisions)
    if (d.size() != clips) throw std::invalid_argument("experts scored different corpora");
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      std::int64_t diff = 0, total = 0;
      for (std::size_t c = 0; c < clips; ++c) {
        const auto& la = decisions[a][c].labels;
        const auto& lb = decisions[b][c].labels;
        if (la.size() != lb.size()) throw std::invalid_argument("frame count mismatch");
        for (std::size_t i = 0; i < la.size(); ++i) diff += la[i] != lb[i];
        total += static_cast<std::int64_t>(la.size());
      }
      if (total == 0) throw std::invalid_argument("empty corpus");
      m[a][b] = m[b][a] = static_cast<double>(diff) / static_cast<double>(total);
    }
  return m;
}

FrameLabels decide(const std::vector<double>& p_genuine, double decision_threshold,
                   std::string clip_id) {
  FrameLabels l;
  l.clip_id = std::move(clip_id);
  l.labels.reserve(p_genuine.size());
  for (double p : p_genuine) l.labels.push_back(1.0 - p >= decision_threshold ? kManipulated : kGenuine);
  return l;
}

std::vector<std::vector<double>> dissimilarity_matrix(const Ensemble& ensemble,
                                                      const std::vector<FeatureMatrix>& corpus,
                                                      double decision_threshold) {
  if (corpus.empty()) throw std::invalid_argument("empty corpus");
  std::vector<std::vector<FrameLabels>> decisions(ensemble.experts.size());
  for (std::size_t w = 0; w < ensemble.experts.size(); ++w)
    for (const auto& f : corpus)
      decisions[w].push_back(decide(run_clip(ensemble.experts[w], f).p, decision_threshold, f.clip_id));
  return dissimilarity_matrix(decisions);
}

double mean_pairwise(const std::vector<std::vector<double>>& m) {
  const std::size_t n = m.size();
  if (n < 2) return 0.0;
  double s = 0.0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      if (a != b) s += m[a][b];
  return s / static_cast<double>(n * (n - 1));
}

EntropySummary entropy_summary(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("entropy summary of no scores");
  EntropySummary s;
  double sum = 0.0;
  for (double v : values) {
    sum += v;
    s.max = std::max(s.max, v);
  }
  s.mean = sum / static_cast<double>(values.size());
  s.histogram.assign(20, 0);
  for (double v : values) {
    int bin = s.max > 0.0 ? static_cast<int>(v / s.max * 20.0) : 0;
    s.histogram[std::clamp(bin, 0, 19)]++;
  }
  return s;
}

EntropySummary entropy_summary(const std::vector<MiningReport>& reports) {
  std::vector<double> v;
  for (const auto& r : reports)
    for (const auto& id : r.ranking) v.push_back(r.scores.at(id));
  return entropy_summary(v);
}

json metrics_to_json(const std::vector<MetricsRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows)
    arr.push_back({{"run", r.run},
                   {"method", r.method},
                   {"z", r.z},
                   {"precision", r.precision},
                   {"recall", r.recall},
                   {"f1", r.f1},
                   {"sentence_acc", r.sentence_acc},
                   {"mean_entropy", r.mean_entropy}});
  return arr;
}

void write_metrics_json(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << metrics_to_json(rows).dump(2) << '\n';
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "run,method,z,precision,recall,f1,sentence_acc,mean_entropy\n" << std::setprecision(10);
  for (const auto& r : rows)
    f << r.run << ',' << r.method << ',' << r.z << ',' << r.precision << ',' << r.recall << ','
      << r.f1 << ',' << r.sentence_acc << ',' << r.mean_entropy << '\n';
}

std::vector<MetricsRow> read_metrics_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<MetricsRow> rows;
  for (const auto& j : json::parse(f)) {
    MetricsRow r;
    r.run = j.at("run").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.z = j.at("z").get<int>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.sentence_acc = j.at("sentence_acc").get<double>();
    r.mean_entropy = j.at("mean_entropy").get<double>();
    rows.push_back(r);
  }
  return rows;
}

}  // namespace sdeloc
