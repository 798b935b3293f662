// src/synth.cc

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

#include "sdeloc/synth.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>

#include "sdeloc/dsp.h"
#include "sdeloc/hash.h"

namespace sdeloc {

std::string to_string(FakeVariant v) {
  switch (v) {
    case FakeVariant::kBandLimit: return "band_limit";
    case FakeVariant::kFlatFormant: return "flat_formant";
    case FakeVariant::kBandLimitFlat: return "band_limit_flat";
  }
  return "band_limit_flat";
}

FakeVariant fake_variant_from_string(const std::string& s) {
  if (s == "band_limit") return FakeVariant::kBandLimit;
  if (s == "flat_formant") return FakeVariant::kFlatFormant;
  if (s == "band_limit_flat") return FakeVariant::kBandLimitFlat;
  throw std::invalid_argument("unknown fake variant '" + s + "'");
}

nlohmann::json DomainConfig::to_json() const {
  nlohmann::json ch = nlohmann::json::array();
  for (const auto& c : channels)
    ch.push_back({{"name", c.name}, {"weight", c.weight}, {"lowpass_hz", c.lowpass_hz}});
  return {{"name", name},
          {"sample_rate", sample_rate},
          {"clip_seconds", clip_seconds},
          {"f0_min", f0_min}, {"f0_max", f0_max},
          {"f1_min", f1_min}, {"f1_max", f1_max},
          {"f2_min", f2_min}, {"f2_max", f2_max},
          {"f3_min", f3_min}, {"f3_max", f3_max},
          {"formant_bandwidth", formant_bandwidth},
          {"high_band_hz", high_band_hz},
          {"high_band_level", high_band_level},
          {"tilt_db_per_octave", tilt_db_per_octave},
          {"syllable_frames_min", syllable_frames_min},
          {"syllable_frames_max", syllable_frames_max},
          {"gap_frames_min", gap_frames_min},
          {"gap_frames_max", gap_frames_max},
          {"gap_prob", gap_prob},
          {"noise_level", noise_level},
          {"peak_min", peak_min}, {"peak_max", peak_max},
          {"fake_ratio", fake_ratio},
          {"fake_variant", to_string(fake_variant)},
          {"fake_cutoff_hz", fake_cutoff_hz},
          {"fake_flatness", fake_flatness},
          {"channels", ch}};
}

DomainConfig DomainConfig::from_json(const nlohmann::json& j) {
  DomainConfig c;
  c.name = j.value("name", c.name);
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.clip_seconds = j.value("clip_seconds", c.clip_seconds);
  c.f0_min = j.value("f0_min", c.f0_min);
  c.f0_max = j.value("f0_max", c.f0_max);
  c.f1_min = j.value("f1_min", c.f1_min);
  c.f1_max = j.value("f1_max", c.f1_max);
  c.f2_min = j.value("f2_min", c.f2_min);
  c.f2_max = j.value("f2_max", c.f2_max);
  c.f3_min = j.value("f3_min", c.f3_min);
  c.f3_max = j.value("f3_max", c.f3_max);
  c.formant_bandwidth = j.value("formant_bandwidth", c.formant_bandwidth);
  c.high_band_hz = j.value("high_band_hz", c.high_band_hz);
  c.high_band_level = j.value("high_band_level", c.high_band_level);
  c.tilt_db_per_octave = j.value("tilt_db_per_octave", c.tilt_db_per_octave);
  c.syllable_frames_min = j.value("syllable_frames_min", c.syllable_frames_min);
  c.syllable_frames_max = j.value("syllable_frames_max", c.syllable_frames_max);
  c.gap_frames_min = j.value("gap_frames_min", c.gap_frames_min);
  c.gap_frames_max = j.value("gap_frames_max", c.gap_frames_max);
  c.gap_prob = j.value("gap_prob", c.gap_prob);
  c.noise_level = j.value("noise_level", c.noise_level);
  c.peak_min = j.value("peak_min", c.peak_min);
  c.peak_max = j.value("peak_max", c.peak_max);
  c.fake_ratio = j.value("fake_ratio", c.fake_ratio);
  if (j.contains("fake_variant"))
    c.fake_variant = fake_variant_from_string(j["fake_variant"].get<std::string>());
  c.fake_cutoff_hz = j.value("fake_cutoff_hz", c.fake_cutoff_hz);
  c.fake_flatness = j.value("fake_flatness", c.fake_flatness);
  if (j.contains("channels")) {
    c.channels.clear();
    for (const auto& ch : j["channels"]) {
      ChannelProfile p;
      p.name = ch.value("name", p.name);
      p.weight = ch.value("weight", p.weight);
      p.lowpass_hz = ch.value("lowpass_hz", p.lowpass_hz);
      c.channels.push_back(p);
    }
  }
  return c;
}

void DomainConfig::validate() const {
  auto require = [&](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument("domain '" + name + "': " + what);
  };
  const double nyquist = sample_rate / 2.0;
  require(sample_rate >= 8000 && sample_rate <= 48000, "sample_rate outside 8-48 kHz");
  require(clip_seconds >= 0.1, "clip_seconds must be >= 0.1");
  require(f0_min > 0 && f0_min <= f0_max && f0_max < nyquist, "bad f0 range");
  require(f1_min > 0 && f1_min <= f1_max && f1_max < nyquist, "bad f1 range");
  require(f2_min > 0 && f2_min <= f2_max && f2_max < nyquist, "bad f2 range");
  require(f3_min > 0 && f3_min <= f3_max && f3_max < nyquist, "bad f3 range");
  require(formant_bandwidth > 0, "formant_bandwidth must be positive");
  require(high_band_level >= 0 && high_band_hz > 0 && high_band_hz < nyquist, "bad high band");
  require(syllable_frames_min >= 1 && syllable_frames_min <= syllable_frames_max,
          "bad syllable length range");
  require(gap_frames_min >= 1 && gap_frames_min <= gap_frames_max, "bad gap length range");
  require(gap_prob >= 0 && gap_prob <= 1, "gap_prob outside [0, 1]");
  require(noise_level >= 0 && noise_level < 0.5, "noise_level outside [0, 0.5)");
  require(peak_min > 0 && peak_min <= peak_max && peak_max <= 0.95, "bad peak range");
  require(fake_ratio >= 0 && fake_ratio <= 0.8, "fake_ratio outside [0, 0.8]");
  require(fake_cutoff_hz > 0 && fake_cutoff_hz < nyquist, "fake_cutoff_hz outside (0, nyquist)");
  require(fake_flatness >= 0 && fake_flatness <= 1, "fake_flatness outside [0, 1]");
  require(!channels.empty(), "no channels");
  for (const auto& c : channels) {
    require(c.weight >= 0, "negative channel weight");
    require(c.lowpass_hz >= 0 && c.lowpass_hz < nyquist, "channel low-pass beyond nyquist");
  }
}

namespace {

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// RBJ low-pass biquad, direct form I.
struct Biquad {
  double b0, b1, b2, a1, a2;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;

  Biquad(double fc, double fs, double q) {
    const double w0 = 2.0 * std::numbers::pi * fc / fs;
    const double alpha = std::sin(w0) / (2.0 * q), c = std::cos(w0);
    const double a0 = 1.0 + alpha;
    b0 = (1.0 - c) / 2.0 / a0;
    b1 = (1.0 - c) / a0;
    b2 = b0;
    a1 = -2.0 * c / a0;
    a2 = (1.0 - alpha) / a0;
  }

  double step(double x) {
    const double y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1; x1 = x;
    y2 = y1; y1 = y;
    return y;
  }
};

void butterworth_lowpass4(std::vector<double>& x, double fc, double fs) {
  Biquad s1(fc, fs, 0.54119610), s2(fc, fs, 1.30656296);
  for (double& v : x) v = s2.step(s1.step(v));
}

// Renders syllables over frames where `mask` is set; returns nothing for
// frames outside the mask.
void render_track(std::vector<double>& out, const DomainConfig& cfg, Rng& rng, int frame_len,
                  const std::vector<char>& mask, bool fake) {
  const int n_frames = static_cast<int>(mask.size());
  const double fs = cfg.sample_rate, nyquist = fs / 2.0;
  const bool band_limit = fake && (cfg.fake_variant == FakeVariant::kBandLimit ||
                                   cfg.fake_variant == FakeVariant::kBandLimitFlat);
  const bool flatten = fake && (cfg.fake_variant == FakeVariant::kFlatFormant ||
                                cfg.fake_variant == FakeVariant::kBandLimitFlat);

  std::vector<double> amp;
  std::vector<std::complex<double>> phasor, rot;
  int t = uniform_int(rng, 0, cfg.gap_frames_max);
  while (t < n_frames) {
    const int dur = uniform_int(rng, cfg.syllable_frames_min, cfg.syllable_frames_max);
    const double f0 = uniform(rng, cfg.f0_min, cfg.f0_max);
    const double formants[3] = {uniform(rng, cfg.f1_min, cfg.f1_max),
                                uniform(rng, cfg.f2_min, cfg.f2_max),
                                uniform(rng, cfg.f3_min, cfg.f3_max)};
    const double level = uniform(rng, 0.5, 1.0);
    const int n_harm = static_cast<int>(0.95 * nyquist / f0);

    amp.assign(n_harm, 0.0);
    phasor.resize(n_harm);
    rot.resize(n_harm);
    const double bw = cfg.formant_bandwidth;
    for (int k = 0; k < n_harm; ++k) {
      const double f = (k + 1) * f0;
      double env = 0.05;
      for (double fm : formants) env += std::exp(-0.5 * std::pow((f - fm) / bw, 2));
      env += cfg.high_band_level * std::exp(-0.5 * std::pow((f - cfg.high_band_hz) / 800.0, 2));
      const double tilt =
          std::pow(10.0, cfg.tilt_db_per_octave * std::log2(std::max(f, 500.0) / 500.0) / 20.0);
      amp[k] = env * tilt;
      phasor[k] = std::polar(1.0, uniform(rng, 0.0, 2.0 * std::numbers::pi));
      rot[k] = std::polar(1.0, 2.0 * std::numbers::pi * f / fs);
    }
    if (flatten) {
      double mean = 0.0;
      for (double a : amp) mean += a;
      mean /= std::max(n_harm, 1);
      for (double& a : amp) a = (1.0 - cfg.fake_flatness) * a + cfg.fake_flatness * mean;
    }
    if (band_limit)
      for (int k = 0; k < n_harm; ++k)
        if ((k + 1) * f0 > cfg.fake_cutoff_hz) amp[k] = 0.0;
    double total = 0.0;
    for (double a : amp) total += a;
    if (total > 0)
      for (double& a : amp) a *= level / total;

    bool touches = false;
    for (int f = t; f < std::min(t + dur, n_frames); ++f) touches |= mask[f] != 0;
    if (touches) {
      const std::size_t start = static_cast<std::size_t>(t) * frame_len;
      const std::size_t len = static_cast<std::size_t>(dur) * frame_len;
      const std::size_t ramp = std::min<std::size_t>(3 * frame_len, len / 3);
      for (std::size_t i = 0; i < len && start + i < out.size(); ++i) {
        double s = 0.0;
        for (int k = 0; k < n_harm; ++k) {
          s += amp[k] * phasor[k].imag();
          phasor[k] *= rot[k];
        }
        double g = 1.0;
        if (i < ramp) g = 0.5 - 0.5 * std::cos(std::numbers::pi * i / ramp);
        else if (len - i <= ramp) g = 0.5 - 0.5 * std::cos(std::numbers::pi * (len - i) / ramp);
        if (mask[(start + i) / frame_len]) out[start + i] = g * s;
      }
    }
    t += dur;
    if (uniform01(rng) < cfg.gap_prob) t += uniform_int(rng, cfg.gap_frames_min, cfg.gap_frames_max);
  }
}

// Fake frame mask: one or two segments totalling about fake_ratio of the clip.
std::vector<char> place_fakes(const DomainConfig& cfg, Rng& rng, int n_frames) {
  std::vector<char> fake(n_frames, 0);
  if (cfg.fake_ratio <= 0.0) return fake;
  int total = static_cast<int>(std::lround(cfg.fake_ratio * n_frames * uniform(rng, 0.7, 1.3)));
  total = std::clamp(total, 1, std::max(1, n_frames - 2));
  const int k = (total >= 20 && uniform01(rng) < 0.5) ? 2 : 1;
  std::vector<int> lens(k, total / k);
  lens[0] += total % k;
  const int free = n_frames - total;
  std::vector<int> cuts(k);
  for (int& c : cuts) c = uniform_int(rng, 0, free);
  std::sort(cuts.begin(), cuts.end());
  int pos = 0, used_gap = 0;
  for (int s = 0; s < k; ++s) {
    pos += cuts[s] - used_gap;
    used_gap = cuts[s];
    std::fill_n(fake.begin() + pos, lens[s], 1);
    pos += lens[s];
  }
  return fake;
}

}  // namespace

std::vector<SynthClip> synth_domain_corpus(const DomainConfig& cfg, int n_clips,
                                           std::uint64_t rng_seed) {
  cfg.validate();
  if (n_clips < 0) throw std::invalid_argument("n_clips must be >= 0");
  double weight_sum = 0.0;
  for (const auto& c : cfg.channels) weight_sum += c.weight;
  if (weight_sum <= 0) throw std::invalid_argument("channel weights sum to zero");

  const int frame_len = static_cast<int>(std::lround(kFrameSeconds * cfg.sample_rate));
  const int n_frames = static_cast<int>(std::lround(cfg.clip_seconds / kFrameSeconds));
  const std::size_t n_samples = static_cast<std::size_t>(n_frames) * frame_len;

  std::vector<SynthClip> corpus;
  corpus.reserve(n_clips);
  for (int i = 0; i < n_clips; ++i) {
    Rng rng(derive_seed(rng_seed, static_cast<std::uint64_t>(i)));
    char id[64];
    std::snprintf(id, sizeof(id), "%s_%05d", cfg.name.c_str(), i);

    double pick = uniform01(rng) * weight_sum;
    const ChannelProfile* channel = &cfg.channels.back();
    for (const auto& c : cfg.channels) {
      if (pick < c.weight) { channel = &c; break; }
      pick -= c.weight;
    }

    const auto fake = place_fakes(cfg, rng, n_frames);
    std::vector<char> genuine(n_frames);
    for (int f = 0; f < n_frames; ++f) genuine[f] = !fake[f];

    std::vector<double> speech(n_samples, 0.0);
    render_track(speech, cfg, rng, frame_len, genuine, false);
    render_track(speech, cfg, rng, frame_len, fake, true);

    double peak = 0.0;
    for (double s : speech) peak = std::max(peak, std::abs(s));
    const double target_peak = uniform(rng, cfg.peak_min, cfg.peak_max);
    if (peak > 0)
      for (double& s : speech) s *= target_peak / peak;
    if (channel->lowpass_hz > 0) butterworth_lowpass4(speech, channel->lowpass_hz, cfg.sample_rate);

    std::normal_distribution<double> noise(0.0, cfg.noise_level);
    for (double& s : speech) s = std::clamp(s + noise(rng), -1.0, 1.0);

    SynthClip out;
    out.clip.id = id;
    out.clip.sample_rate = cfg.sample_rate;
    out.clip.samples = std::move(speech);
    quantize_pcm16(out.clip);
    out.labels.clip_id = id;
    out.labels.labels.resize(n_frames);
    for (int f = 0; f < n_frames; ++f) out.labels.labels[f] = fake[f] ? kManipulated : kGenuine;
    out.channel = channel->name;
    corpus.push_back(std::move(out));
  }
  return corpus;
}

DomainConfig default_source_domain() {
  DomainConfig c;
  c.name = "source";
  return c;
}

DomainConfig default_target_domain() {
  DomainConfig c;
  c.name = "target";
  c.f0_min = 140.0;
  c.f0_max = 260.0;
  c.f1_min = 350.0;
  c.f1_max = 950.0;
  c.noise_level = 0.006;
  c.channels = {ChannelProfile{"wideband", 0.8, 0.0}, ChannelProfile{"telephone", 0.2, 3800.0}};
  return c;
}

}  // namespace sdeloc
