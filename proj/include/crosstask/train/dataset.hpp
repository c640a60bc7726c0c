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

#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "crosstask/core/errors.hpp"
#include "crosstask/core/tensor.hpp"
#include "crosstask/dsp/features.hpp"
#include "crosstask/model/model.hpp"
#include "crosstask/train/manifest.hpp"
#include "crosstask/train/task.hpp"

namespace crosstask {

/// Feature file for a clip inside a feature directory.
inline std::filesystem::path feature_path(const std::filesystem::path& dir, const std::string& clip_id) {
  return dir / (clip_id + ".ctf");
}

struct ClipEntry {
  std::string clip_id;
  std::vector<std::size_t> labels;
  std::size_t frames = 0;
  std::size_t segments = 0;
};

/// Clips framed into fixed-length segments, each segment a training or
/// inference item. Segments are produced by a loader and cached up to a
/// byte budget; clips beyond the budget are reloaded on demand.
class FeatureSet {
 public:
  using Loader = std::function<LogMelSpectrogram(std::size_t clip)>;

  FeatureSet(std::vector<ClipEntry> clips, Loader loader, std::size_t segment_frames, double frames_per_second,
             std::size_t cache_bytes = std::size_t{1} << 30)
      : clips_(std::move(clips)),
        loader_(std::move(loader)),
        segment_frames_(segment_frames),
        fps_(frames_per_second),
        cache_budget_(cache_bytes) {
    if (segment_frames_ == 0) throw ConfigError("segment length must be positive");
    for (std::size_t c = 0; c < clips_.size(); ++c) {
      auto& e = clips_[c];
      e.segments = (e.frames + segment_frames_ - 1) / segment_frames_;
      for (std::size_t s = 0; s < e.segments; ++s) items_.emplace_back(c, s);
    }
  }

  /// Already standardized in-memory spectrograms.
  static FeatureSet from_memory(std::vector<LogMelSpectrogram> spectra, std::vector<std::vector<std::size_t>> labels,
                                std::size_t segment_frames) {
    if (spectra.size() != labels.size()) throw ShapeError("feature set: spectra and labels differ in count");
    std::vector<ClipEntry> clips;
    double fps = 0;
    for (std::size_t i = 0; i < spectra.size(); ++i) {
      clips.push_back({spectra[i].clip_id, labels[i], spectra[i].frames(), 0});
      fps = spectra[i].frames_per_second;
    }
    auto shared = std::make_shared<std::vector<LogMelSpectrogram>>(std::move(spectra));
    return FeatureSet(std::move(clips), [shared](std::size_t c) { return (*shared)[c]; }, segment_frames, fps);
  }

  /// Rows `indices` of `manifest`, read from `dir` and standardized with
  /// `scaler`. Every file must hold kMelBins bins at `frames_per_second`.
  static FeatureSet from_directory(const std::filesystem::path& dir, const DatasetManifest& manifest,
                                   const std::vector<std::size_t>& indices, const ScalerStats& scaler,
                                   std::size_t segment_frames, double frames_per_second,
                                   std::size_t cache_bytes = std::size_t{1} << 30) {
    std::vector<ClipEntry> clips;
    std::vector<std::filesystem::path> paths;
    for (std::size_t i : indices) {
      const auto& row = manifest.rows.at(i);
      paths.push_back(feature_path(dir, row.clip_id));
      const auto x = checked_read(paths.back(), row.clip_id, frames_per_second);
      clips.push_back({row.clip_id, row.labels, x.frames(), 0});
    }
    auto loader = [paths, clips, scaler, frames_per_second](std::size_t c) {
      auto x = checked_read(paths[c], clips[c].clip_id, frames_per_second);
      apply_scaler(x, scaler);
      return x;
    };
    return FeatureSet(std::move(clips), loader, segment_frames, frames_per_second, cache_bytes);
  }

  std::size_t clip_count() const { return clips_.size(); }
  std::size_t item_count() const { return items_.size(); }
  const ClipEntry& clip(std::size_t c) const { return clips_.at(c); }
  std::pair<std::size_t, std::size_t> item(std::size_t i) const { return items_.at(i); }
  std::size_t segment_frames() const { return segment_frames_; }
  double frames_per_second() const { return fps_; }

  /// (segment_frames, kMelBins) matrices of one clip. The reference stays
  /// valid until the next call when the clip does not fit the cache.
  const std::vector<Tensor<float>>& segments(std::size_t c) {
    if (auto it = cache_.find(c); it != cache_.end()) return it->second;
    auto segs = load_segments(c);
    const std::size_t bytes = segs.size() * segment_frames_ * kMelBins * sizeof(float);
    if (cached_bytes_ + bytes <= cache_budget_) {
      cached_bytes_ += bytes;
      return cache_.emplace(c, std::move(segs)).first->second;
    }
    scratch_ = std::move(segs);
    return scratch_;
  }

  /// (items.size(), 1, segment_frames, kMelBins) input batch.
  Tensor<float> input_batch(const std::vector<std::size_t>& items) {
    const std::size_t per = segment_frames_ * kMelBins;
    Tensor<float> out({items.size(), 1, segment_frames_, kMelBins});
    for (std::size_t b = 0; b < items.size(); ++b) {
      const auto [c, s] = item(items[b]);
      const Tensor<float>& seg = segments(c).at(s);
      std::copy(seg.data(), seg.data() + per, out.data() + b * per);
    }
    return out;
  }

  /// One-hot (single, binary) or multi-hot (multi) targets, (items, classes).
  Tensor<float> target_batch(const std::vector<std::size_t>& items, std::size_t classes) const {
    Tensor<float> out({items.size(), classes}, 0.0f);
    for (std::size_t b = 0; b < items.size(); ++b) {
      for (std::size_t label : clips_.at(item(items[b]).first).labels) {
        if (label >= classes) throw ShapeError("label index out of range for " + std::to_string(classes) + " classes");
        out[b * classes + label] = 1.0f;
      }
    }
    return out;
  }

 private:
  static LogMelSpectrogram checked_read(const std::filesystem::path& path, const std::string& clip_id, double fps) {
    auto x = read_features(path);
    if (x.clip_id != clip_id) {
      throw FormatError(clip_id + ": feature file " + path.string() + " belongs to clip '" + x.clip_id + "'");
    }
    if (x.bins() != kMelBins) {
      throw ShapeError(clip_id + ": feature file has " + std::to_string(x.bins()) + " bins, model needs " +
                       std::to_string(kMelBins));
    }
    if (std::abs(x.frames_per_second - fps) > 1e-9 * fps) {
      throw ShapeError(clip_id + ": feature file has " + format_real(x.frames_per_second) +
                       " frames/s, configuration gives " + format_real(fps));
    }
    return x;
  }

  std::vector<Tensor<float>> load_segments(std::size_t c) {
    const auto& e = clips_.at(c);
    const auto x = loader_(c);
    if (x.bins() != kMelBins || x.frames() != e.frames) {
      throw ShapeError(e.clip_id + ": features changed shape to (" + std::to_string(x.frames()) + ", " +
                       std::to_string(x.bins()) + ")");
    }
    std::vector<Tensor<float>> out;
    for (auto& seg : pad_or_split(x, segment_frames_)) out.push_back(std::move(seg.values));
    return out;
  }

  std::vector<ClipEntry> clips_;
  Loader loader_;
  std::size_t segment_frames_;
  double fps_;
  std::vector<std::pair<std::size_t, std::size_t>> items_;
  std::map<std::size_t, std::vector<Tensor<float>>> cache_;
  std::size_t cached_bytes_ = 0;
  std::size_t cache_budget_;
  std::vector<Tensor<float>> scratch_;
};

}  // namespace crosstask
