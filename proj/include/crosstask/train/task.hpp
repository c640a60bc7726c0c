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

#include <set>
#include <string>
#include <vector>

#include "crosstask/core/errors.hpp"
#include "crosstask/model/model.hpp"

namespace crosstask {

enum class LabelArity { single, multi, binary };
enum class SplitScheme { single, kfold, leave_one_dataset_out };

inline std::string to_string(LabelArity a) {
  switch (a) {
    case LabelArity::single: return "single";
    case LabelArity::multi: return "multi";
    case LabelArity::binary: return "binary";
  }
  return "?";
}

/// Everything that differs between the five tasks.
struct TaskAdapter {
  int id = 0;
  std::vector<std::string> classes;
  LabelArity arity = LabelArity::single;
  Head head = Head::softmax;
  PoolingMode pooling = PoolingMode::clip;
  double segment_seconds = 10.0;  // training/inference input length
  double clip_seconds = 10.0;     // nominal clip duration, used by SED1
  SplitScheme scheme = SplitScheme::single;
  bool verified_validation_only = false;
  std::size_t default_batch_size = 128;
  std::string validation_metric;

  std::size_t n_classes() const { return classes.size(); }
  ModelSpec model_spec(Variant variant) const { return {variant, classes.size(), head, pooling}; }
};

/// Names must be usable as CSV cells, report keys and label-list entries.
inline void validate_vocabulary(const std::vector<std::string>& classes) {
  if (classes.empty()) throw ConfigError("class vocabulary is empty");
  std::set<std::string> seen;
  for (const auto& c : classes) {
    if (c.empty() || c.find_first_of(",;=\n\r\"") != std::string::npos || c.front() == ' ' || c.back() == ' ') {
      throw ConfigError("invalid class name '" + c + "'");
    }
    if (!seen.insert(c).second) throw ConfigError("duplicate class name '" + c + "'");
  }
}

inline std::vector<std::string> default_classes(int task) {
  switch (task) {
    case 1:
      return {"Airport",       "Bus",           "Metro",             "Metro_station",  "Park",
              "Public_square", "Shopping_mall", "Street_pedestrian", "Street_traffic", "Tram"};
    case 2:
      return {"Acoustic_guitar", "Applause", "Bark", "Bass_drum", "Burping_or_eructation", "Bus", "Cello", "Chime",
              "Clarinet", "Computer_keyboard", "Cough", "Cowbell", "Double_bass", "Drawer_open_or_close",
              "Electric_piano", "Fart", "Finger_snapping", "Fireworks", "Flute", "Glockenspiel", "Gong",
              "Gunshot_or_gunfire", "Harmonica", "Hi-hat", "Keys_jangling", "Knock", "Laughter", "Meow",
              "Microwave_oven", "Oboe", "Saxophone", "Scissors", "Shatter", "Snare_drum", "Squeak", "Tambourine",
              "Tearing", "Telephone", "Trumpet", "Violin_or_fiddle", "Writing"};
    case 3:
      return {"no_bird", "bird"};
    case 4:
      return {"Speech", "Dog", "Cat", "Alarm_bell_ringing", "Dishes", "Frying", "Blender", "Running_water",
              "Vacuum_cleaner", "Electric_shaver_toothbrush"};
    case 5:
      return {"Absence",        "Cooking",     "Dishwashing", "Eating", "Other", "Social_activity",
              "Vacuum_cleaner", "Watching_TV", "Working"};
    default:
      throw ConfigError("task must be 1-5, got " + std::to_string(task));
  }
}

/// Adapter for task 1-5; `classes` replaces the default vocabulary when
/// non-empty (the binary task must keep exactly two classes).
inline TaskAdapter task_adapter(int task, std::vector<std::string> classes = {}) {
  TaskAdapter t;
  t.id = task;
  t.classes = classes.empty() ? default_classes(task) : std::move(classes);
  validate_vocabulary(t.classes);
  switch (task) {
    case 1:
      t.scheme = SplitScheme::single;
      t.validation_metric = "accuracy";
      break;
    case 2:
      t.segment_seconds = 2.0;
      t.scheme = SplitScheme::kfold;
      t.verified_validation_only = true;
      t.validation_metric = "map@3";
      break;
    case 3:
      if (t.classes.size() != 2) throw ConfigError("task 3 is binary and needs exactly two classes");
      t.arity = LabelArity::binary;
      t.head = Head::sigmoid;
      t.scheme = SplitScheme::leave_one_dataset_out;
      t.validation_metric = "auc";
      break;
    case 4:
      t.arity = LabelArity::multi;
      t.head = Head::sigmoid;
      t.pooling = PoolingMode::frames;
      t.default_batch_size = 32;
      t.validation_metric = "at_auc";
      break;
    case 5:
      t.scheme = SplitScheme::kfold;
      t.validation_metric = "f1";
      break;
    default:
      throw ConfigError("task must be 1-5, got " + std::to_string(task));
  }
  return t;
}

}  // namespace crosstask
