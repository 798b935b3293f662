// src/dsp.cc

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

#include "sdeloc/dsp.h"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sdeloc {

nlohmann::json LfccOptions::to_json() const {
  return {{"n_filters", n_filters},
          {"n_coeffs", n_coeffs},
          {"log_floor", log_floor},
          {"append_deltas", append_deltas}};
}

LfccOptions LfccOptions::from_json(const nlohmann::json& j) {
  LfccOptions o;
  o.n_filters = j.value("n_filters", o.n_filters);
  o.n_coeffs = j.value("n_coeffs", o.n_coeffs);
  o.log_floor = j.value("log_floor", o.log_floor);
  o.append_deltas = j.value("append_deltas", o.append_deltas);
  return o;
}

FrameGrid make_frames(const AudioClip& clip, int max_frames) {
  validate_clip(clip);
  if (max_frames < 1) throw std::invalid_argument("max_frames must be >= 1");
  FrameGrid g;
  g.frame_len = static_cast<int>(std::lround(kFrameSeconds * clip.sample_rate));
  if (g.frame_len < 2) throw std::invalid_argument("sample rate too low for 10 ms frames");
  g.hop = g.frame_len;
  const auto full = static_cast<long long>(clip.samples.size()) / g.frame_len;
  if (full < 1)
    throw std::invalid_argument("clip '" + clip.id + "' is shorter than one 10 ms frame");
  g.n_frames = static_cast<int>(std::min<long long>(full, max_frames));
  return g;
}

int fft_size_for(int frame_len) {
  int n = 1;
  while (n < frame_len) n <<= 1;
  return n;
}

void fft(std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw std::invalid_argument("fft size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, ang * static_cast<double>(k));
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
      }
    }
  }
}

std::vector<std::vector<double>> linear_filterbank(int n_filters, int fft_size,
                                                   int sample_rate) {
  const int n_bins = fft_size / 2 + 1;
  const double nyquist = sample_rate / 2.0;
  const double spacing = nyquist / (n_filters + 1);
  std::vector<std::vector<double>> bank(n_filters, std::vector<double>(n_bins, 0.0));
  for (int m = 0; m < n_filters; ++m) {
    const double lo = m * spacing, mid = (m + 1) * spacing, hi = (m + 2) * spacing;
    for (int b = 0; b < n_bins; ++b) {
      const double f = static_cast<double>(b) * sample_rate / fft_size;
      if (f > lo && f < hi)
        bank[m][b] = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
  }
  return bank;
}

namespace {

void append_delta_blocks(FeatureMatrix& m, int n_coeffs) {
  // Simple two-point deltas with edge replication.
  auto delta = [&](int src_off, int dst_off) {
    for (int t = 0; t < m.rows; ++t) {
      const int prev = std::max(t - 1, 0), next = std::min(t + 1, m.rows - 1);
      for (int c = 0; c < n_coeffs; ++c)
        m.at(t, dst_off + c) = 0.5 * (m.at(next, src_off + c) - m.at(prev, src_off + c));
    }
  };
  delta(0, n_coeffs);
  delta(n_coeffs, 2 * n_coeffs);
}

}  // namespace

FeatureMatrix lfcc(const AudioClip& clip, const FrameGrid& grid, const LfccOptions& opts) {
  if (opts.n_coeffs < 1 || opts.n_filters < 1)
    throw std::invalid_argument("lfcc needs at least one filter and coefficient");
  if (opts.n_coeffs > opts.n_filters)
    throw std::invalid_argument("n_coeffs must not exceed n_filters");
  if (static_cast<long long>(grid.n_frames - 1) * grid.hop + grid.frame_len >
      static_cast<long long>(clip.samples.size()))
    throw std::invalid_argument("frame grid exceeds clip length");

  const int nfft = fft_size_for(grid.frame_len);
  const int n_bins = nfft / 2 + 1;
  const auto bank = linear_filterbank(opts.n_filters, nfft, clip.sample_rate);

  std::vector<double> window(grid.frame_len);
  for (int i = 0; i < grid.frame_len; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (grid.frame_len - 1));

  const int nf = opts.n_filters;
  std::vector<double> dct(static_cast<std::size_t>(opts.n_coeffs) * nf);
  for (int k = 0; k < opts.n_coeffs; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / nf) : std::sqrt(2.0 / nf);
    for (int m = 0; m < nf; ++m)
      dct[static_cast<std::size_t>(k) * nf + m] =
          scale * std::cos(std::numbers::pi * k * (m + 0.5) / nf);
  }

  FeatureMatrix out(clip.id, grid.n_frames, opts.output_dim());
  std::vector<std::complex<double>> buf(nfft);
  std::vector<double> power(n_bins), logfb(nf);
  for (int t = 0; t < grid.n_frames; ++t) {
    const double* x = clip.samples.data() + static_cast<std::size_t>(t) * grid.hop;
    for (int i = 0; i < nfft; ++i) buf[i] = i < grid.frame_len ? x[i] * window[i] : 0.0;
    fft(buf);
    for (int b = 0; b < n_bins; ++b) power[b] = std::norm(buf[b]);
    for (int m = 0; m < nf; ++m) {
      double e = 0.0;
      for (int b = 0; b < n_bins; ++b) e += bank[m][b] * power[b];
      logfb[m] = std::log(std::max(e, opts.log_floor));
    }
    for (int k = 0; k < opts.n_coeffs; ++k) {
      double c = 0.0;
      for (int m = 0; m < nf; ++m) c += dct[static_cast<std::size_t>(k) * nf + m] * logfb[m];
      if (!std::isfinite(c)) throw std::runtime_error("lfcc produced a non-finite value");
      out.at(t, k) = c;
    }
  }
  if (opts.append_deltas) append_delta_blocks(out, opts.n_coeffs);
  return out;
}

std::vector<double> frame_energy(const AudioClip& clip, const FrameGrid& grid) {
  std::vector<double> e(grid.n_frames, 0.0);
  for (int t = 0; t < grid.n_frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * grid.hop;
    double acc = 0.0;
    for (int i = 0; i < grid.frame_len; ++i) {
      const double s = clip.samples.at(start + i);
      acc += s * s;
    }
    e[t] = acc;
  }
  return e;
}

std::vector<double> delta_energy(std::span<const double> energy) {
  if (energy.size() < 2) throw std::invalid_argument("delta_energy needs at least 2 frames");
  std::vector<double> d(energy.size() - 1);
  for (std::size_t i = 0; i + 1 < energy.size(); ++i) d[i] = std::abs(energy[i + 1] - energy[i]);
  return d;
}

std::vector<double> zero_crossing_rate(const AudioClip& clip, const FrameGrid& grid) {
  std::vector<double> z(grid.n_frames, 0.0);
  for (int t = 0; t < grid.n_frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * grid.hop;
    int changes = 0;
    for (int i = 1; i < grid.frame_len; ++i)
      changes += (clip.samples.at(start + i) >= 0.0) != (clip.samples.at(start + i - 1) >= 0.0);
    z[t] = static_cast<double>(changes) / (grid.frame_len - 1);
  }
  return z;
}

FeatureMatrix pad_rows(const FeatureMatrix& m, int rows) {
  FeatureMatrix out(m.clip_id, rows, m.cols);
  const int keep = std::min(rows, m.rows);
  std::copy_n(m.values.begin(), static_cast<std::size_t>(keep) * m.cols, out.values.begin());
  return out;
}

}  // namespace sdeloc
