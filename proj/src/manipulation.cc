// src/manipulation.cc

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

#include "sdeloc/manipulation.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "sdeloc/hash.h"

namespace sdeloc {

CutPointSet find_cut_points(std::span<const double> energy_delta, std::span<const double> zcr,
                            double k_sigma, double zcr_factor, std::string clip_id) {
  const std::size_t n = energy_delta.size();
  if (n < 4) throw std::invalid_argument("clip too short for cut points (need >= 5 frames)");
  if (zcr.size() != n && zcr.size() != n + 1)
    throw std::invalid_argument("zcr length does not match the energy delta sequence");

  const double mean = std::accumulate(energy_delta.begin(), energy_delta.end(), 0.0) / n;
  double var = 0.0;
  for (double d : energy_delta) var += (d - mean) * (d - mean);
  const double sd = std::sqrt(var / n);

  CutPointSet cuts;
  cuts.clip_id = std::move(clip_id);
  cuts.threshold = mean + k_sigma * sd;

  std::vector<double> sorted_zcr(zcr.begin(), zcr.end());
  std::nth_element(sorted_zcr.begin(), sorted_zcr.begin() + sorted_zcr.size() / 2,
                   sorted_zcr.end());
  double median = sorted_zcr[sorted_zcr.size() / 2];
  if (sorted_zcr.size() % 2 == 0) {
    const double lower = *std::max_element(sorted_zcr.begin(),
                                           sorted_zcr.begin() + sorted_zcr.size() / 2);
    median = 0.5 * (median + lower);
  }
  const double activity_floor = median * zcr_factor;

  for (std::size_t i = 0; i < n; ++i) {
    if (!(energy_delta[i] > cuts.threshold)) continue;
    const double activity = zcr.size() == n ? zcr[i] : std::max(zcr[i], zcr[i + 1]);
    if (activity > activity_floor) cuts.points.push_back(static_cast<int>(i));
  }

  if (cuts.points.size() < 4) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return energy_delta[a] > energy_delta[b]; });
    cuts.points.assign(order.begin(), order.begin() + 4);
    std::sort(cuts.points.begin(), cuts.points.end());
    cuts.fallback = true;
  }
  return cuts;
}

SwapSpec select_swap_segments(const CutPointSet& cuts, std::uint64_t seed) {
  std::vector<int> pool;
  for (int p : cuts.points)
    if (p > 0) pool.push_back(p);
  if (pool.size() < 4)
    throw std::invalid_argument("need at least 4 usable cut points for '" + cuts.clip_id + "'");

  Rng rng(seed);
  for (std::size_t k = 0; k < 4; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
    std::swap(pool[k], pool[pick(rng)]);
  }
  std::sort(pool.begin(), pool.begin() + 4);
  return {{pool[0], pool[1]}, {pool[2], pool[3]}};
}

void validate_swap(const SwapSpec& spec, int n_frames) {
  const auto& a = spec.seg_a;
  const auto& b = spec.seg_b;
  if (a.length() <= 0 || b.length() <= 0)
    throw std::invalid_argument("swap segments must be non-empty");
  if (a.start < 0 || b.end > n_frames)
    throw std::invalid_argument("swap segment outside the frame range");
  if (a.end > b.start) throw std::invalid_argument("swap segments overlap or are unordered");
}

AudioClip swap_segments(const AudioClip& clip, const SwapSpec& spec, const FrameGrid& grid) {
  validate_swap(spec, grid.n_frames);
  const auto hop = static_cast<std::size_t>(grid.hop);
  const std::size_t a0 = spec.seg_a.start * hop, a1 = spec.seg_a.end * hop;
  const std::size_t b0 = spec.seg_b.start * hop, b1 = spec.seg_b.end * hop;
  if (b1 > clip.samples.size()) throw std::invalid_argument("swap segment beyond clip end");

  const auto& s = clip.samples;
  AudioClip out;
  out.id = clip.id;
  out.sample_rate = clip.sample_rate;
  out.samples.reserve(s.size());
  out.samples.insert(out.samples.end(), s.begin(), s.begin() + a0);
  out.samples.insert(out.samples.end(), s.begin() + b0, s.begin() + b1);
  out.samples.insert(out.samples.end(), s.begin() + a1, s.begin() + b0);
  out.samples.insert(out.samples.end(), s.begin() + a0, s.begin() + a1);
  out.samples.insert(out.samples.end(), s.begin() + b1, s.end());

  double peak = 0.0;
  for (double v : out.samples) peak = std::max(peak, std::abs(v));
  if (peak > 1.0)
    for (double& v : out.samples) v /= peak;
  return out;
}

FrameLabels generate_labels(const SwapSpec& spec, const FrameGrid& grid_after,
                            std::string clip_id) {
  validate_swap(spec, grid_after.n_frames);
  FrameLabels l;
  l.clip_id = std::move(clip_id);
  l.labels.assign(grid_after.n_frames, kGenuine);
  const int b_len = spec.seg_b.length(), a_len = spec.seg_a.length();
  std::fill_n(l.labels.begin() + spec.seg_a.start, b_len, kManipulated);
  std::fill(l.labels.begin() + (spec.seg_b.end - a_len), l.labels.begin() + spec.seg_b.end,
            kManipulated);
  return l;
}

std::vector<double> smooth_targets(const FrameLabels& labels, double s) {
  if (s < 0.0 || s >= 0.5) throw std::invalid_argument("label smoothing must be in [0, 0.5)");
  std::vector<double> t(labels.labels.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = labels.labels[i] == kGenuine ? 1.0 - s : s;
  return t;
}

nlohmann::json PseudoLabelOptions::to_json() const {
  return {{"k_sigma", k_sigma},
          {"zcr_factor", zcr_factor},
          {"label_smoothing", label_smoothing},
          {"max_frames", max_frames},
          {"lfcc", lfcc.to_json()}};
}

PseudoLabelOptions PseudoLabelOptions::from_json(const nlohmann::json& j) {
  PseudoLabelOptions o;
  o.k_sigma = j.value("k_sigma", o.k_sigma);
  o.zcr_factor = j.value("zcr_factor", o.zcr_factor);
  o.label_smoothing = j.value("label_smoothing", o.label_smoothing);
  o.max_frames = j.value("max_frames", o.max_frames);
  if (j.contains("lfcc")) o.lfcc = LfccOptions::from_json(j["lfcc"]);
  return o;
}

PseudoLabeledSample pseudo_label_clip(const AudioClip& clip, const PseudoLabelOptions& opts,
                                      std::uint64_t rng_seed) {
  const FrameGrid grid = make_frames(clip, opts.max_frames);
  const auto energy = frame_energy(clip, grid);
  if (energy.size() < 6)
    throw std::invalid_argument("clip '" + clip.id + "' too short for 4 cut points");
  const auto delta = delta_energy(energy);
  const auto zcr = zero_crossing_rate(clip, grid);

  PseudoLabeledSample out;
  out.rng_seed = rng_seed;
  out.cuts = find_cut_points(delta, zcr, opts.k_sigma, opts.zcr_factor, clip.id);
  if (std::count_if(out.cuts.points.begin(), out.cuts.points.end(), [](int p) { return p > 0; }) < 4) {
    // Point 0 cannot start a swap; redo the selection on deltas 1.. instead.
    const std::span<const double> d(delta);
    const std::span<const double> z(zcr);
    CutPointSet rest = find_cut_points(d.subspan(1), z.subspan(1), opts.k_sigma, opts.zcr_factor, clip.id);
    for (int& p : rest.points) ++p;
    out.cuts = std::move(rest);
  }
  out.swap = select_swap_segments(out.cuts, rng_seed);
  out.clip = swap_segments(clip, out.swap, grid);
  out.clip.id = clip.id + ".swap";
  const FrameGrid after = make_frames(out.clip, opts.max_frames);
  out.labels = generate_labels(out.swap, after, out.clip.id);
  out.features = lfcc(out.clip, after, opts.lfcc);
  return out;
}

}  // namespace sdeloc
