// Copyright 2026 The Crosstask Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "crosstask/core/errors.hpp"
#include "crosstask/core/tensor.hpp"
#include "crosstask/dsp/wav.hpp"

namespace crosstask {

/// Periodic Hann window of length n.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// Mirror index without repeating the edge sample, folding as often as
/// needed so clips shorter than half a window still pad cleanly.
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t len) {
  if (len == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (len - 1));
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(len) ? m : period - m);
}

inline std::size_t stft_frame_count(std::size_t samples, std::size_t hop) { return 1 + samples / hop; }

/// Power spectrogram (frames, n_fft/2 + 1) of a mono clip. Frames are
/// centered: the signal is reflect-padded by n_fft/2 on both sides, so
/// frame t is centered on sample t*hop.
inline Tensor<double> stft(const AudioClip& clip, std::size_t n_fft, std::size_t hop) {
  if (!is_power_of_two(n_fft) || n_fft < 2) throw ConfigError("n_fft must be a power of two, got " + std::to_string(n_fft));
  if (hop == 0) throw ConfigError("hop must be positive");
  if (clip.channels != 1) throw UsageError("stft expects mono audio; downmix first");
  const std::size_t len = clip.samples.size();
  if (len == 0) throw UsageError("stft: empty clip");

  const std::size_t frames = stft_frame_count(len, hop);
  const std::size_t bins = n_fft / 2 + 1;
  const auto window = hann_window(n_fft);
  const auto half = static_cast<std::ptrdiff_t>(n_fft / 2);
  Tensor<double> power({frames, bins});
  Eigen::FFT<double> fft;
  std::vector<double> frame(n_fft);
  std::vector<std::complex<double>> spectrum;
  for (std::size_t t = 0; t < frames; ++t) {
    const auto start = static_cast<std::ptrdiff_t>(t * hop) - half;
    for (std::size_t i = 0; i < n_fft; ++i) {
      frame[i] = window[i] * clip.samples[reflect_index(start + static_cast<std::ptrdiff_t>(i), len)];
    }
    fft.fwd(spectrum, frame);
    for (std::size_t k = 0; k < bins; ++k) power[t * bins + k] = std::norm(spectrum[k]);
  }
  return power;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular filters, one row per mel band over n_fft/2 + 1 bins.
struct MelFilterbank {
  Tensor<double> matrix;
  std::vector<std::size_t> break_bins;  // n_mels + 2 ascending FFT bins
  std::size_t n_fft = 0;
  double sample_rate = 0;
  double f_min = 0;
  double f_max = 0;

  std::size_t n_mels() const { return matrix.dim(0); }
  std::size_t n_bins() const { return matrix.dim(1); }
};

/// Break points equally spaced on the HTK mel scale are snapped to the
/// nearest FFT bin; filter m rises from break m to a peak of exactly 1 at
/// break m+1 and falls to zero at break m+2. f_max <= 0 means Nyquist.
inline MelFilterbank build_mel_filterbank(std::size_t n_fft, double sample_rate, std::size_t n_mels = 64,
                                          double f_min = 50.0, double f_max = 0.0) {
  if (!is_power_of_two(n_fft) || n_fft < 2) throw ConfigError("n_fft must be a power of two, got " + std::to_string(n_fft));
  if (sample_rate <= 0) throw ConfigError("sample rate must be positive");
  if (n_mels == 0) throw ConfigError("n_mels must be positive");
  if (f_max <= 0) f_max = sample_rate / 2;
  if (f_min < 0 || f_min >= f_max || f_max > sample_rate / 2) {
    throw ConfigError("mel range must satisfy 0 <= f_min < f_max <= sample_rate/2");
  }
  MelFilterbank fb;
  fb.n_fft = n_fft;
  fb.sample_rate = sample_rate;
  fb.f_min = f_min;
  fb.f_max = f_max;
  const double lo = hz_to_mel(f_min), hi = hz_to_mel(f_max);
  for (std::size_t i = 0; i < n_mels + 2; ++i) {
    const double hz = mel_to_hz(lo + (hi - lo) * i / (n_mels + 1));
    fb.break_bins.push_back(static_cast<std::size_t>(std::lround(hz * n_fft / sample_rate)));
  }
  for (std::size_t i = 1; i < fb.break_bins.size(); ++i) {
    if (fb.break_bins[i] <= fb.break_bins[i - 1]) {
      throw ConfigError("mel break points " + std::to_string(i - 1) + " and " + std::to_string(i) +
                        " share FFT bin " + std::to_string(fb.break_bins[i]) + "; raise n_fft or lower n_mels");
    }
  }
  const std::size_t bins = n_fft / 2 + 1;
  fb.matrix = Tensor<double>({n_mels, bins}, 0.0);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double l = fb.break_bins[m], c = fb.break_bins[m + 1], r = fb.break_bins[m + 2];
    for (std::size_t k = fb.break_bins[m] + 1; k < fb.break_bins[m + 2]; ++k) {
      fb.matrix[m * bins + k] = k <= c ? (k - l) / (c - l) : (r - k) / (r - c);
    }
  }
  return fb;
}

inline constexpr double kLogFloor = 1e-10;

/// ln(max(fb . frame, 1e-10)) for every frame; returns (frames, n_mels).
inline Tensor<double> log_mel(const Tensor<double>& power, const MelFilterbank& fb) {
  if (power.rank() != 2 || power.dim(1) != fb.n_bins()) {
    throw ShapeError("log_mel: spectrogram " + to_string(power.shape()) + " does not match filterbank with " +
                     std::to_string(fb.n_bins()) + " bins");
  }
  const std::size_t frames = power.dim(0), bins = fb.n_bins(), mels = fb.n_mels();
  Tensor<double> out({frames, mels});
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t m = 0; m < mels; ++m) {
      double e = 0.0;
      for (std::size_t k = fb.break_bins[m] + 1; k < fb.break_bins[m + 2]; ++k) e += fb.matrix[m * bins + k] * power[t * bins + k];
      out[t * mels + m] = std::log(std::max(e, kLogFloor));
    }
  }
  return out;
}

}  // namespace crosstask
