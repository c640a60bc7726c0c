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
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "crosstask/core/binary_io.hpp"
#include "crosstask/core/errors.hpp"
#include "crosstask/core/tensor.hpp"
#include "crosstask/dsp/spectral.hpp"
#include "crosstask/dsp/wav.hpp"

namespace crosstask {

struct FeatureConfig {
  std::uint32_t sample_rate = 32000;
  std::size_t n_fft = 2048;
  std::size_t hop = 1024;
  std::size_t n_mels = 64;
  double f_min = 50.0;
  double f_max = 0.0;  // 0 selects Nyquist

  double frames_per_second() const { return static_cast<double>(sample_rate) / hop; }
  MelFilterbank filterbank() const { return build_mel_filterbank(n_fft, sample_rate, n_mels, f_min, f_max); }
};

/// (frames, n_mels) log-mel matrix of one clip or segment.
struct LogMelSpectrogram {
  Tensor<float> values;
  double frames_per_second = 0;
  std::string clip_id;

  std::size_t frames() const { return values.dim(0); }
  std::size_t bins() const { return values.dim(1); }
};

/// Downmix, STFT, mel projection and log. The clip must already be at the
/// configured sample rate.
inline LogMelSpectrogram extract_log_mel(const AudioClip& clip, const FeatureConfig& cfg, const MelFilterbank& fb,
                                         std::string clip_id) {
  if (clip.sample_rate != cfg.sample_rate) {
    throw FormatError(clip_id + ": sample rate " + std::to_string(clip.sample_rate) + " Hz, configured " +
                      std::to_string(cfg.sample_rate) + " Hz (resample the audio first)");
  }
  const auto mel = log_mel(stft(downmix_mono(clip), cfg.n_fft, cfg.hop), fb);
  return {mel.cast<float>(), cfg.frames_per_second(), std::move(clip_id)};
}

/// Frames for a nominal duration, rounded up to a multiple of `multiple` so
/// the four 2x time poolings divide evenly.
inline std::size_t target_frames_for(double seconds, double frames_per_second, std::size_t multiple = 16) {
  if (seconds <= 0 || frames_per_second <= 0 || multiple == 0) {
    throw ConfigError("target frames need positive duration, frame rate and multiple");
  }
  const auto frames = static_cast<std::size_t>(std::max(1.0, std::round(seconds * frames_per_second)));
  return (frames + multiple - 1) / multiple * multiple;
}

/// Shorter inputs are tiled then truncated to `target` frames. Longer
/// inputs are cut into consecutive segments of `target` frames; the final
/// partial segment is tiled the same way.
inline std::vector<LogMelSpectrogram> pad_or_split(const LogMelSpectrogram& x, std::size_t target) {
  if (target == 0) throw UsageError("pad_or_split: target frames must be positive");
  const std::size_t frames = x.frames(), bins = x.bins();
  std::vector<LogMelSpectrogram> out;
  for (std::size_t start = 0; start < frames; start += target) {
    const std::size_t len = std::min(target, frames - start);
    Tensor<float> seg({target, bins});
    for (std::size_t t = 0; t < target; ++t) {
      const float* src = x.values.data() + (start + t % len) * bins;
      std::copy(src, src + bins, seg.data() + t * bins);
    }
    out.push_back({std::move(seg), x.frames_per_second, x.clip_id});
  }
  return out;
}

inline constexpr std::uint32_t kFeatureVersion = 1;

/// "CTBF" u32 version, str clip_id, u32 frames, u32 bins, f64 fps, f32 data.
inline void write_features(const std::filesystem::path& path, const LogMelSpectrogram& x) {
  BinaryWriter w;
  w.raw("CTBF");
  w.u32(kFeatureVersion);
  w.str(x.clip_id);
  w.u32(static_cast<std::uint32_t>(x.frames()));
  w.u32(static_cast<std::uint32_t>(x.bins()));
  w.f64(x.frames_per_second);
  for (float v : x.values.values()) w.f32(v);
  w.save(path);
}

inline LogMelSpectrogram read_features(const std::filesystem::path& path) {
  auto r = BinaryReader::from_file(path);
  r.header("CTBF", kFeatureVersion);
  LogMelSpectrogram x;
  x.clip_id = r.str();
  const std::size_t frames = r.u32(), bins = r.u32();
  x.frames_per_second = r.f64();
  if (frames == 0 || bins == 0) throw FormatError(r.source() + ": empty feature matrix");
  if (r.remaining() != frames * bins * 4) throw FormatError(r.source() + ": payload size does not match shape");
  x.values = Tensor<float>({frames, bins});
  for (float& v : x.values.values()) v = r.f32();
  if (!x.values.all_finite()) throw FormatError(r.source() + ": non-finite feature values");
  return x;
}

/// Per-bin standardization statistics.
struct ScalerStats {
  std::vector<double> mean;
  std::vector<double> std;
  std::string source;

  bool operator==(const ScalerStats&) const = default;
};

inline constexpr double kScalerStdFloor = 1e-8;

/// Two-pass mean and population standard deviation per bin over every frame
/// of every input.
inline ScalerStats fit_scaler(std::span<const LogMelSpectrogram> features, std::string source = {}) {
  std::size_t total = 0, bins = 0;
  for (const auto& f : features) {
    if (total > 0 && f.bins() != bins) throw ShapeError("fit_scaler: inconsistent bin counts");
    bins = f.bins();
    total += f.frames();
  }
  if (total < 2) throw UsageError("fit_scaler: need at least two frames, got " + std::to_string(total));
  ScalerStats s;
  s.source = std::move(source);
  s.mean.assign(bins, 0.0);
  s.std.assign(bins, 0.0);
  for (const auto& f : features)
    for (std::size_t t = 0; t < f.frames(); ++t)
      for (std::size_t b = 0; b < bins; ++b) s.mean[b] += f.values[t * bins + b];
  for (double& m : s.mean) m /= static_cast<double>(total);
  for (const auto& f : features)
    for (std::size_t t = 0; t < f.frames(); ++t)
      for (std::size_t b = 0; b < bins; ++b) {
        const double d = f.values[t * bins + b] - s.mean[b];
        s.std[b] += d * d;
      }
  for (double& v : s.std) v = std::max(std::sqrt(v / static_cast<double>(total)), kScalerStdFloor);
  return s;
}

inline void apply_scaler(LogMelSpectrogram& x, const ScalerStats& s) {
  const std::size_t bins = x.bins();
  if (s.mean.size() != bins) {
    throw ShapeError("apply_scaler: stats have " + std::to_string(s.mean.size()) + " bins, features " +
                     std::to_string(bins));
  }
  for (std::size_t t = 0; t < x.frames(); ++t) {
    for (std::size_t b = 0; b < bins; ++b) {
      float& v = x.values[t * bins + b];
      v = static_cast<float>((v - s.mean[b]) / s.std[b]);
    }
  }
}

inline constexpr std::uint32_t kScalerVersion = 1;

/// "CTBS" u32 version, str source, u32 bins, f64 mean[bins], f64 std[bins].
inline void write_scaler(const std::filesystem::path& path, const ScalerStats& s) {
  BinaryWriter w;
  w.raw("CTBS");
  w.u32(kScalerVersion);
  w.str(s.source);
  w.u32(static_cast<std::uint32_t>(s.mean.size()));
  for (double v : s.mean) w.f64(v);
  for (double v : s.std) w.f64(v);
  w.save(path);
}

inline ScalerStats read_scaler(const std::filesystem::path& path) {
  auto r = BinaryReader::from_file(path);
  r.header("CTBS", kScalerVersion);
  ScalerStats s;
  s.source = r.str();
  const std::size_t bins = r.u32();
  s.mean.resize(bins);
  s.std.resize(bins);
  for (double& v : s.mean) v = r.f64();
  for (double& v : s.std) v = r.f64();
  r.expect_end();
  for (double v : s.std) {
    if (!(v > 0)) throw FormatError(r.source() + ": non-positive standard deviation");
  }
  return s;
}

}  // namespace crosstask
