// Copyright 2026 The Triplex Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "triplex/audio.hpp"
#include "triplex/errors.hpp"
#include "triplex/rng.hpp"
#include "triplex/tensor.hpp"

namespace triplex {

struct FrontendConfig {
  int sample_rate = 16000;
  int window_ms = 25;
  int hop_ms = 10;
  int n_fft = 400;
  int n_mels = 128;
  double log_floor = 1e-10;

  int window_samples() const { return sample_rate * window_ms / 1000; }
  int hop_samples() const { return sample_rate * hop_ms / 1000; }
  int n_bins() const { return n_fft / 2 + 1; }

  void validate() const {
    if (sample_rate <= 0) throw ConfigError("frontend: sample_rate must be > 0");
    if (n_mels < 1) throw ConfigError("frontend: n_mels must be >= 1");
    if (hop_ms > window_ms)
      throw ConfigError("frontend: hop_ms must be <= window_ms");
    if (window_samples() > n_fft)
      throw ConfigError("frontend: window longer than n_fft");
    if (log_floor <= 0.0) throw ConfigError("frontend: log_floor must be > 0");
  }
};

// T x n_mels log-Mel energies; hop_ms records the frame rate.
struct MelSpectrogram {
  Tensor frames;  // (T, n_mels)
  double hop_ms = 10.0;

  std::size_t num_frames() const { return frames.dims.empty() ? 0 : frames.dims[0]; }
  std::size_t num_mels() const { return frames.rank() == 2 ? frames.dims[1] : 0; }
};

struct SpecAugPolicy {
  int num_freq_masks = 2;
  int max_freq_width = 27;
  int num_time_masks = 2;
  int max_time_width = 40;
  double mask_value = 0.0;

  void validate() const {
    if (num_freq_masks < 0 || num_time_masks < 0 || max_freq_width < 0 ||
        max_time_width < 0)
      throw ConfigError("spec augment: counts and widths must be >= 0");
  }
};

// HTK mel scale
inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

inline std::size_t frame_count(std::size_t num_samples,
                               const FrontendConfig& config) {
  const auto win = static_cast<std::size_t>(config.window_samples());
  const auto hop = static_cast<std::size_t>(config.hop_samples());
  if (num_samples < win)
    throw AudioTooShort("need at least " + std::to_string(win) + " samples, got " +
                        std::to_string(num_samples));
  return 1 + (num_samples - win) / hop;
}

// Triangular mel filterbank, (n_mels, n_fft/2+1). Centers are equally
// spaced on the HTK mel scale between 0 Hz and Nyquist; triangles are
// evaluated in the mel domain at the FFT bin frequencies. Each row is
// rescaled so its peak bin is exactly 1; a filter narrower than the bin
// spacing gets a single unit weight at the bin nearest its center, so no
// row is ever empty. Any bin lies inside at most two triangles.
inline Tensor mel_filterbank(const FrontendConfig& config) {
  config.validate();
  const int n_bins = config.n_bins();
  const double mel_max = hz_to_mel(config.sample_rate / 2.0);
  const int n_mels = config.n_mels;

  std::vector<double> grid(static_cast<std::size_t>(n_mels) + 2);
  for (std::size_t i = 0; i < grid.size(); ++i)
    grid[i] = mel_max * static_cast<double>(i) / static_cast<double>(n_mels + 1);

  std::vector<double> bin_mel(static_cast<std::size_t>(n_bins));
  for (int b = 0; b < n_bins; ++b) {
    const double hz =
        static_cast<double>(b) * config.sample_rate / config.n_fft;
    bin_mel[static_cast<std::size_t>(b)] = hz_to_mel(hz);
  }

  Tensor fb = Tensor::zeros({static_cast<std::size_t>(n_mels),
                             static_cast<std::size_t>(n_bins)});
  for (int m = 0; m < n_mels; ++m) {
    const double left = grid[static_cast<std::size_t>(m)];
    const double center = grid[static_cast<std::size_t>(m) + 1];
    const double right = grid[static_cast<std::size_t>(m) + 2];
    double row_max = 0.0;
    for (int b = 0; b < n_bins; ++b) {
      const double mel = bin_mel[static_cast<std::size_t>(b)];
      double w = 0.0;
      if (mel > left && mel < right)
        w = mel <= center ? (mel - left) / (center - left)
                          : (right - mel) / (right - center);
      fb(static_cast<std::size_t>(m), static_cast<std::size_t>(b)) = w;
      row_max = std::max(row_max, w);
    }
    if (row_max > 0.0) {
      for (int b = 0; b < n_bins; ++b)
        fb(static_cast<std::size_t>(m), static_cast<std::size_t>(b)) /= row_max;
    } else {
      const double center_hz = mel_to_hz(center);
      const double bin_hz = static_cast<double>(config.sample_rate) / config.n_fft;
      auto nearest = static_cast<std::size_t>(
          std::min<long long>(n_bins - 1, std::llround(center_hz / bin_hz)));
      fb(static_cast<std::size_t>(m), nearest) = 1.0;
    }
  }
  return fb;
}

// Analytic center frequency (Hz) of mel filter m under `config`.
inline double mel_filter_center_hz(const FrontendConfig& config, int m) {
  const double mel_max = hz_to_mel(config.sample_rate / 2.0);
  return mel_to_hz(mel_max * static_cast<double>(m + 1) /
                   static_cast<double>(config.n_mels + 1));
}

// 128-dim log-Mel features: Hann window, magnitude-squared DFT, mel
// filterbank, natural log with a positive floor. No padding at the edges
// and no mean/variance normalization of any kind.
inline MelSpectrogram log_mel_spectrogram(const AudioBuffer& audio,
                                          const FrontendConfig& config) {
  config.validate();
  if (audio.sample_rate != config.sample_rate)
    throw UnsupportedFormat("audio sample rate " +
                            std::to_string(audio.sample_rate) +
                            " does not match config " +
                            std::to_string(config.sample_rate));
  const std::size_t win = static_cast<std::size_t>(config.window_samples());
  const std::size_t hop = static_cast<std::size_t>(config.hop_samples());
  const std::size_t t_frames = frame_count(audio.samples.size(), config);
  const std::size_t n_fft = static_cast<std::size_t>(config.n_fft);
  const std::size_t n_bins = static_cast<std::size_t>(config.n_bins());
  const std::size_t n_mels = static_cast<std::size_t>(config.n_mels);

  std::vector<double> hann(win);
  for (std::size_t i = 0; i < win; ++i)
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) /
                                   static_cast<double>(win));

  // real DFT as a tabulated matrix product; n_fft is not a power of two
  std::vector<double> cos_t(n_bins * win), sin_t(n_bins * win);
  for (std::size_t k = 0; k < n_bins; ++k)
    for (std::size_t i = 0; i < win; ++i) {
      const double a = 2.0 * M_PI * static_cast<double>(k) *
                       static_cast<double>(i) / static_cast<double>(n_fft);
      cos_t[k * win + i] = std::cos(a);
      sin_t[k * win + i] = std::sin(a);
    }

  const Tensor fb = mel_filterbank(config);
  MelSpectrogram mel;
  mel.hop_ms = config.hop_ms;
  mel.frames = Tensor::zeros({t_frames, n_mels});

  std::vector<double> frame(win), power(n_bins);
  for (std::size_t t = 0; t < t_frames; ++t) {
    const double* src = audio.samples.data() + t * hop;
    for (std::size_t i = 0; i < win; ++i) frame[i] = src[i] * hann[i];
    for (std::size_t k = 0; k < n_bins; ++k) {
      double re = 0.0, im = 0.0;
      const double* ct = cos_t.data() + k * win;
      const double* st = sin_t.data() + k * win;
      for (std::size_t i = 0; i < win; ++i) {
        re += frame[i] * ct[i];
        im -= frame[i] * st[i];
      }
      power[k] = re * re + im * im;
    }
    for (std::size_t m = 0; m < n_mels; ++m) {
      const double* frow = fb.data.data() + m * n_bins;
      double e = 0.0;
      for (std::size_t k = 0; k < n_bins; ++k) e += frow[k] * power[k];
      mel.frames(t, m) = std::log(std::max(e, config.log_floor));
    }
  }
  return mel;
}

// Linear-interpolation resampling so that playback runs `factor` times
// faster; sample rate field is unchanged. factor 1.0 is the exact identity.
inline AudioBuffer speed_perturb(const AudioBuffer& audio, double factor) {
  if (factor <= 0.0)
    throw NonPositiveFactor("speed factor must be > 0, got " +
                            std::to_string(factor));
  AudioBuffer out;
  out.sample_rate = audio.sample_rate;
  if (audio.samples.empty()) return out;
  const auto n = static_cast<double>(audio.samples.size());
  const auto out_len = static_cast<std::size_t>(std::llround(n / factor));
  out.samples.resize(out_len);
  const std::size_t last = audio.samples.size() - 1;
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = static_cast<double>(i) * factor;
    auto i0 = static_cast<std::size_t>(pos);
    if (i0 >= last) {
      out.samples[i] = audio.samples[last];
      continue;
    }
    const double frac = pos - static_cast<double>(i0);
    const double a = audio.samples[i0];
    const double b = audio.samples[i0 + 1];
    out.samples[i] = a + frac * (b - a);
  }
  return out;
}

// A drawn mask band: frames [t_begin, t_end) x mel bins [m_begin, m_end).
struct MaskRect {
  std::size_t t_begin = 0, t_end = 0;
  std::size_t m_begin = 0, m_end = 0;

  std::size_t area() const { return (t_end - t_begin) * (m_end - m_begin); }
  bool contains(std::size_t t, std::size_t m) const {
    return t >= t_begin && t < t_end && m >= m_begin && m < m_end;
  }
};

// SpecAugment: zero out `num_freq_masks` random mel bands and
// `num_time_masks` random frame bands. Widths are drawn uniformly in
// [0, max_width] (clamped to the axis size); deterministic in rng_seed.
// Frequency masks are drawn first, then time masks; `drawn` reports the
// applied rectangles.
inline MelSpectrogram spec_augment(const MelSpectrogram& mel,
                                   const SpecAugPolicy& policy,
                                   std::uint64_t rng_seed,
                                   std::vector<MaskRect>* drawn = nullptr) {
  policy.validate();
  MelSpectrogram out = mel;
  const std::size_t t_frames = mel.num_frames();
  const std::size_t n_mels = mel.num_mels();
  if (t_frames == 0 || n_mels == 0) return out;
  Rng rng(rng_seed);

  auto apply = [&](const MaskRect& rect) {
    for (std::size_t t = rect.t_begin; t < rect.t_end; ++t)
      for (std::size_t m = rect.m_begin; m < rect.m_end; ++m)
        out.frames(t, m) = policy.mask_value;
    if (drawn) drawn->push_back(rect);
  };

  for (int i = 0; i < policy.num_freq_masks; ++i) {
    const std::size_t cap =
        std::min<std::size_t>(static_cast<std::size_t>(policy.max_freq_width), n_mels);
    const std::size_t width = static_cast<std::size_t>(rng.below(cap + 1));
    const std::size_t start =
        static_cast<std::size_t>(rng.below(n_mels - width + 1));
    apply({0, t_frames, start, start + width});
  }
  for (int i = 0; i < policy.num_time_masks; ++i) {
    const std::size_t cap =
        std::min<std::size_t>(static_cast<std::size_t>(policy.max_time_width), t_frames);
    const std::size_t width = static_cast<std::size_t>(rng.below(cap + 1));
    const std::size_t start =
        static_cast<std::size_t>(rng.below(t_frames - width + 1));
    apply({start, start + width, 0, n_mels});
  }
  return out;
}

}  // namespace triplex
