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
#include <optional>
#include <string>
#include <vector>

#include "crosstask/core/autograd.hpp"
#include "crosstask/core/errors.hpp"
#include "crosstask/metrics/classification.hpp"
#include "crosstask/model/model.hpp"
#include "crosstask/train/dataset.hpp"
#include "crosstask/train/task.hpp"

namespace crosstask {

/// Model outputs for one clip. Multi-segment clips average their segment
/// probabilities. Frame probabilities (frames x classes, trimmed to the
/// clip's own length) are present for frames-pooling models only.
struct ClipOutput {
  std::string clip_id;
  std::vector<double> probs;
  Tensor<float> frame_probs;
  double frames_per_second = 0;
};

inline void check_model_matches(const ModelSpec& spec, const TaskAdapter& task) {
  if (spec.n_classes != task.n_classes() || spec.head != task.head || spec.pooling != task.pooling) {
    throw ConfigError("model (" + std::to_string(spec.n_classes) + " classes, " + to_string(spec.head) + ", " +
                      to_string(spec.pooling) + ") does not match task " + std::to_string(task.id) + " (" +
                      std::to_string(task.n_classes()) + " classes, " + to_string(task.head) + ", " +
                      to_string(task.pooling) + ")");
  }
}

/// Eval-mode inference over `clips` (all clips when empty), `batch_size`
/// segments per forward pass. Leaves the model in eval mode.
inline std::vector<ClipOutput> infer(ModelParams<float>& params, FeatureSet& set, std::size_t batch_size = 16,
                                     std::vector<std::size_t> clips = {}) {
  if (batch_size == 0) throw UsageError("inference batch size must be positive");
  if (clips.empty()) {
    clips.resize(set.clip_count());
    for (std::size_t c = 0; c < clips.size(); ++c) clips[c] = c;
  }
  params.set_mode(BnMode::eval);
  const std::size_t k = params.spec.n_classes;
  const bool frames_mode = params.spec.pooling == PoolingMode::frames;
  const std::size_t seg_frames = set.segment_frames();

  // Items of the requested clips, each tagged with its output slot.
  std::vector<std::size_t> items, slot_of_item;
  std::vector<ClipOutput> out(clips.size());
  std::vector<std::size_t> first_item(set.clip_count() + 1, 0);
  for (std::size_t i = 0; i < set.item_count(); ++i) ++first_item[set.item(i).first + 1];
  for (std::size_t c = 0; c < set.clip_count(); ++c) first_item[c + 1] += first_item[c];
  for (std::size_t slot = 0; slot < clips.size(); ++slot) {
    const ClipEntry& e = set.clip(clips[slot]);
    out[slot].clip_id = e.clip_id;
    out[slot].probs.assign(k, 0.0);
    out[slot].frames_per_second = set.frames_per_second();
    if (frames_mode) out[slot].frame_probs = Tensor<float>({e.segments * seg_frames, k}, 0.0f);
    for (std::size_t s = 0; s < e.segments; ++s) {
      items.push_back(first_item[clips[slot]] + s);
      slot_of_item.push_back(slot);
    }
  }

  for (std::size_t start = 0; start < items.size(); start += batch_size) {
    const std::size_t end = std::min(items.size(), start + batch_size);
    const std::vector<std::size_t> chunk(items.begin() + static_cast<std::ptrdiff_t>(start),
                                         items.begin() + static_cast<std::ptrdiff_t>(end));
    Tape<float> tape(false);
    const Var<float> x = constant(set.input_batch(chunk));
    Tensor<float> clip_probs, frame_probs;
    if (frames_mode) {
      auto f = forward_frames(tape, params, x);
      clip_probs = f.clip_probs.value();
      frame_probs = f.frame_probs.value();
    } else {
      clip_probs = forward_clip(tape, params, x).value();
    }
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      ClipOutput& o = out[slot_of_item[start + b]];
      for (std::size_t j = 0; j < k; ++j) o.probs[j] += clip_probs[b * k + j];
      if (frames_mode) {
        const std::size_t seg = set.item(chunk[b]).second;
        std::copy(frame_probs.data() + b * seg_frames * k, frame_probs.data() + (b + 1) * seg_frames * k,
                  o.frame_probs.data() + seg * seg_frames * k);
      }
    }
  }

  for (std::size_t slot = 0; slot < clips.size(); ++slot) {
    const ClipEntry& e = set.clip(clips[slot]);
    for (double& p : out[slot].probs) p /= static_cast<double>(e.segments);
    if (frames_mode) {
      Tensor<float> trimmed({e.frames, k});
      std::copy(out[slot].frame_probs.data(), out[slot].frame_probs.data() + e.frames * k, trimmed.data());
      out[slot].frame_probs = std::move(trimmed);
    }
  }
  return out;
}

/// Score of the task's validation metric, or nothing when the metric is
/// undefined on these clips (for example AUC with a single class present).
inline std::optional<double> validation_score(const TaskAdapter& task, const std::vector<ClipOutput>& outputs,
                                              const std::vector<std::vector<std::size_t>>& labels) {
  if (outputs.size() != labels.size()) throw ShapeError("validation: outputs and labels differ in count");
  if (outputs.empty()) return std::nullopt;
  ProbabilityRows probs;
  for (const auto& o : outputs) probs.push_back(o.probs);
  const std::size_t k = task.n_classes();
  auto single = [&] {
    std::vector<std::size_t> truth;
    for (const auto& l : labels) truth.push_back(l.at(0));
    return truth;
  };
  auto defined_average = [](const ClassScores& s) -> std::optional<double> {
    if (std::none_of(s.per_class.begin(), s.per_class.end(), [](const auto& v) { return v.has_value(); })) {
      return std::nullopt;
    }
    return s.average;
  };
  switch (task.id) {
    case 1:
      return defined_average(accuracy(probs, single(), k).classwise);
    case 2:
      return map_at_k(probs, single(), 3);
    case 3: {
      std::vector<double> scores;
      std::vector<bool> positive;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        scores.push_back(probs[i][1]);
        positive.push_back(labels[i].at(0) == 1);
      }
      const auto pos = std::count(positive.begin(), positive.end(), true);
      if (pos == 0 || static_cast<std::size_t>(pos) == positive.size()) return std::nullopt;
      return roc_auc(scores, positive);
    }
    case 4: {
      std::vector<std::vector<bool>> truth(labels.size(), std::vector<bool>(k, false));
      for (std::size_t i = 0; i < labels.size(); ++i)
        for (std::size_t c : labels[i]) truth[i][c] = true;
      return defined_average(tagging_auc(probs, truth));
    }
    case 5:
      return defined_average(f1_per_class(probs, single(), k));
    default:
      throw ConfigError("task must be 1-5, got " + std::to_string(task.id));
  }
}

}  // namespace crosstask
