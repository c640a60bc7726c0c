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

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "crosstask/core/errors.hpp"
#include "crosstask/core/text.hpp"
#include "crosstask/dsp/features.hpp"
#include "crosstask/model/model.hpp"
#include "crosstask/train/task.hpp"
#include "crosstask/train/trainer.hpp"
#include "json.hpp"

// Run configuration. One JSON object; every key is optional and unknown keys
// are rejected. Relative paths resolve against the config file's directory.
//
// {
//   "task": 1, "model": "cnn8", "classes": [],
//   "paths": {"audio_root": ".", "manifest": "manifest.csv", "features": "work/features",
//             "scalers": "work/scalers", "checkpoints": "work/checkpoints",
//             "predictions": "work/predictions", "reports": "work/reports", "reference_events": ""},
//   "features": {"sample_rate": 32000, "n_fft": 2048, "hop": 1024, "n_mels": 64, "f_min": 50, "f_max": 0,
//                "segment_seconds": 0, "clip_seconds": 0},
//   "train": {"learning_rate": 0.001, "lr_decay_factor": 0.9, "lr_decay_every": 200,
//             "max_iterations": 5000, "batch_size": 0, "seed": 0, "checkpoint_every": 1000,
//             "validate_every": 500, "validation_cap": 1000, "inference_batch": 16,
//             "sampling": "uniform", "folds": [], "use_checkpoint": "final", "cache_mb": 1024},
//   "metrics": {"map_k": 3, "sed1_threshold": 0.5, "sed2_high": 0.8, "sed2_low": 0.2, "collar": 0.2}
// }
//
// segment_seconds and clip_seconds of 0 keep the task's own durations.
// An empty "classes" keeps the task's vocabulary; an empty "folds" uses the
// task's default splits.

namespace crosstask {

inline constexpr const char* kConfigEnv = "CROSSTASK_CONFIG";

struct PathsConfig {
  std::string audio_root = ".";
  std::string manifest = "manifest.csv";
  std::string features = "work/features";
  std::string scalers = "work/scalers";
  std::string checkpoints = "work/checkpoints";
  std::string predictions = "work/predictions";
  std::string reports = "work/reports";
  std::string reference_events;  // events CSV for SED scoring, optional
};

struct MetricsConfig {
  std::size_t map_k = 3;
  double sed1_threshold = 0.5;
  double sed2_high = 0.8;
  double sed2_low = 0.2;
  double collar = 0.2;
};

struct RunConfig {
  int task = 1;
  Variant model = Variant::cnn8;
  std::vector<std::string> classes;
  PathsConfig paths;
  FeatureConfig features;
  double segment_seconds = 0.0;
  double clip_seconds = 0.0;
  TrainConfig train;
  std::vector<int> folds;
  std::string use_checkpoint = "final";
  std::size_t cache_mb = 1024;
  MetricsConfig metrics;
  std::filesystem::path base_dir = ".";  // not serialized

  TaskAdapter adapter() const {
    TaskAdapter t = task_adapter(task, classes);
    if (segment_seconds > 0) t.segment_seconds = segment_seconds;
    if (clip_seconds > 0) t.clip_seconds = clip_seconds;
    return t;
  }

  std::size_t segment_frames() const {
    return target_frames_for(adapter().segment_seconds, features.frames_per_second());
  }

  std::filesystem::path resolve(const std::string& p) const {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }
};

using Json = nlohmann::json;

inline Json to_json(const RunConfig& c) {
  Json j;
  j["task"] = c.task;
  j["model"] = to_string(c.model);
  j["classes"] = c.classes;
  j["paths"] = {{"audio_root", c.paths.audio_root},   {"manifest", c.paths.manifest},
                {"features", c.paths.features},       {"scalers", c.paths.scalers},
                {"checkpoints", c.paths.checkpoints}, {"predictions", c.paths.predictions},
                {"reports", c.paths.reports},         {"reference_events", c.paths.reference_events}};
  j["features"] = {{"sample_rate", c.features.sample_rate},
                   {"n_fft", c.features.n_fft},
                   {"hop", c.features.hop},
                   {"n_mels", c.features.n_mels},
                   {"f_min", c.features.f_min},
                   {"f_max", c.features.f_max},
                   {"segment_seconds", c.segment_seconds},
                   {"clip_seconds", c.clip_seconds}};
  const TrainConfig& t = c.train;
  j["train"] = {{"learning_rate", t.learning_rate},
                {"lr_decay_factor", t.lr_decay_factor},
                {"lr_decay_every", t.lr_decay_every},
                {"max_iterations", t.max_iterations},
                {"batch_size", t.batch_size},
                {"seed", t.seed},
                {"checkpoint_every", t.checkpoint_every},
                {"validate_every", t.validate_every},
                {"validation_cap", t.validation_cap},
                {"inference_batch", t.inference_batch},
                {"sampling", t.sampling},
                {"folds", c.folds},
                {"use_checkpoint", c.use_checkpoint},
                {"cache_mb", c.cache_mb}};
  j["metrics"] = {{"map_k", c.metrics.map_k},
                  {"sed1_threshold", c.metrics.sed1_threshold},
                  {"sed2_high", c.metrics.sed2_high},
                  {"sed2_low", c.metrics.sed2_low},
                  {"collar", c.metrics.collar}};
  return j;
}

namespace detail {

/// Overlays `patch` onto `base` key by key. Every key in `patch` must exist
/// in `base` with a compatible JSON type.
inline void overlay(Json& base, const Json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw ConfigError((prefix.empty() ? "config" : prefix) + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + name + "'");
    Json& slot = base[key];
    if (slot.is_object()) {
      overlay(slot, value, name);
      continue;
    }
    const bool numeric = slot.is_number() && value.is_number();
    if (!numeric && slot.type() != value.type()) {
      throw ConfigError("config key '" + name + "' expects " + std::string(slot.type_name()) + ", got " +
                        value.type_name());
    }
    slot = value;
  }
}

template <typename T>
T get_as(const Json& j, const char* section, const char* key) {
  const Json& v = section ? j.at(section).at(key) : j.at(key);
  const std::string name = section ? std::string(section) + "." + key : std::string(key);
  try {
    if constexpr (std::is_unsigned_v<T>) {
      if (v.is_number_float() || (v.is_number_integer() && v.get<std::int64_t>() < 0)) {
        throw ConfigError("config key '" + name + "' must be a non-negative integer");
      }
    } else if constexpr (std::is_integral_v<T>) {
      if (v.is_number_float()) throw ConfigError("config key '" + name + "' must be an integer");
    }
    return v.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config key '" + name + "': " + e.what());
  }
}

}  // namespace detail

/// Builds a config from JSON text layered over the defaults.
inline RunConfig config_from_json(const Json& patch, const std::filesystem::path& base_dir = ".") {
  Json j = to_json(RunConfig{});
  detail::overlay(j, patch, "");
  using detail::get_as;
  RunConfig c;
  c.base_dir = base_dir;
  c.task = get_as<int>(j, nullptr, "task");
  const auto model = get_as<std::string>(j, nullptr, "model");
  if (model != "cnn4" && model != "cnn8") throw ConfigError("model must be \"cnn4\" or \"cnn8\", got \"" + model + "\"");
  c.model = parse_variant(model);
  c.classes = get_as<std::vector<std::string>>(j, nullptr, "classes");

  c.paths.audio_root = get_as<std::string>(j, "paths", "audio_root");
  c.paths.manifest = get_as<std::string>(j, "paths", "manifest");
  c.paths.features = get_as<std::string>(j, "paths", "features");
  c.paths.scalers = get_as<std::string>(j, "paths", "scalers");
  c.paths.checkpoints = get_as<std::string>(j, "paths", "checkpoints");
  c.paths.predictions = get_as<std::string>(j, "paths", "predictions");
  c.paths.reports = get_as<std::string>(j, "paths", "reports");
  c.paths.reference_events = get_as<std::string>(j, "paths", "reference_events");

  c.features.sample_rate = get_as<std::uint32_t>(j, "features", "sample_rate");
  c.features.n_fft = get_as<std::size_t>(j, "features", "n_fft");
  c.features.hop = get_as<std::size_t>(j, "features", "hop");
  c.features.n_mels = get_as<std::size_t>(j, "features", "n_mels");
  c.features.f_min = get_as<double>(j, "features", "f_min");
  c.features.f_max = get_as<double>(j, "features", "f_max");
  c.segment_seconds = get_as<double>(j, "features", "segment_seconds");
  c.clip_seconds = get_as<double>(j, "features", "clip_seconds");

  TrainConfig& t = c.train;
  t.learning_rate = get_as<double>(j, "train", "learning_rate");
  t.lr_decay_factor = get_as<double>(j, "train", "lr_decay_factor");
  t.lr_decay_every = get_as<std::size_t>(j, "train", "lr_decay_every");
  t.max_iterations = get_as<std::size_t>(j, "train", "max_iterations");
  t.batch_size = get_as<std::size_t>(j, "train", "batch_size");
  t.seed = get_as<std::uint64_t>(j, "train", "seed");
  t.checkpoint_every = get_as<std::size_t>(j, "train", "checkpoint_every");
  t.validate_every = get_as<std::size_t>(j, "train", "validate_every");
  t.validation_cap = get_as<std::size_t>(j, "train", "validation_cap");
  t.inference_batch = get_as<std::size_t>(j, "train", "inference_batch");
  t.sampling = get_as<std::string>(j, "train", "sampling");
  c.folds = get_as<std::vector<int>>(j, "train", "folds");
  c.use_checkpoint = get_as<std::string>(j, "train", "use_checkpoint");
  c.cache_mb = get_as<std::size_t>(j, "train", "cache_mb");

  c.metrics.map_k = get_as<std::size_t>(j, "metrics", "map_k");
  c.metrics.sed1_threshold = get_as<double>(j, "metrics", "sed1_threshold");
  c.metrics.sed2_high = get_as<double>(j, "metrics", "sed2_high");
  c.metrics.sed2_low = get_as<double>(j, "metrics", "sed2_low");
  c.metrics.collar = get_as<double>(j, "metrics", "collar");
  return c;
}

/// Rejects values no command could run with.
inline void validate_config(const RunConfig& c) {
  (void)c.adapter();
  c.train.validate();
  if (c.features.n_mels != kMelBins) {
    throw ConfigError("features.n_mels must be " + std::to_string(kMelBins) + " (the models take " +
                      std::to_string(kMelBins) + " mel bins)");
  }
  if (!is_power_of_two(c.features.n_fft)) throw ConfigError("features.n_fft must be a power of two");
  if (c.features.hop == 0 || c.features.hop > c.features.n_fft) {
    throw ConfigError("features.hop must be in [1, n_fft]");
  }
  if (c.features.sample_rate == 0) throw ConfigError("features.sample_rate must be positive");
  (void)c.features.filterbank();
  if (c.segment_seconds < 0 || c.clip_seconds < 0) throw ConfigError("durations must not be negative");
  if (c.use_checkpoint != "final" && c.use_checkpoint != "best") {
    throw ConfigError("train.use_checkpoint must be \"final\" or \"best\"");
  }
  if (c.metrics.map_k == 0) throw ConfigError("metrics.map_k must be positive");
  const auto& m = c.metrics;
  if (!(0 <= m.sed1_threshold && m.sed1_threshold <= 1)) throw ConfigError("metrics.sed1_threshold must be in [0, 1]");
  if (!(0 <= m.sed2_low && m.sed2_low <= m.sed2_high && m.sed2_high <= 1)) {
    throw ConfigError("metrics thresholds must satisfy 0 <= sed2_low <= sed2_high <= 1");
  }
  if (!(m.collar >= 0)) throw ConfigError("metrics.collar must not be negative");
}

/// Canonical text: keys sorted, two-space indent, trailing newline.
inline std::string canonical_json(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

inline Json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

inline RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
  const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  try {
    return config_from_json(parse_json_text(read_text_file(path), path.string()), dir);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// Applies "dotted.key=value" overrides. The value is read as JSON when it
/// parses as JSON and as a plain string otherwise.
inline RunConfig apply_overrides(const RunConfig& c, const std::vector<std::string>& assignments) {
  Json j = to_json(c);
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + a + "' is not key=value");
    const std::string key = a.substr(0, eq), raw = a.substr(eq + 1);
    Json value = Json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    Json patch = value;
    const auto parts = split(key, '.');
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = Json{{*it, patch}};
    detail::overlay(j, patch, "");
  }
  return config_from_json(j, c.base_dir);
}

}  // namespace crosstask
