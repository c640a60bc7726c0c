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
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crosstask/core/adam.hpp"
#include "crosstask/core/autograd.hpp"
#include "crosstask/core/errors.hpp"
#include "crosstask/core/ops.hpp"
#include "crosstask/core/text.hpp"
#include "crosstask/model/checkpoint.hpp"
#include "crosstask/model/model.hpp"
#include "crosstask/train/batches.hpp"
#include "crosstask/train/dataset.hpp"
#include "crosstask/train/inference.hpp"
#include "crosstask/train/task.hpp"

namespace crosstask {

struct TrainConfig {
  double learning_rate = 0.001;
  double lr_decay_factor = 0.9;
  std::size_t lr_decay_every = 200;
  std::size_t max_iterations = 5000;
  std::size_t batch_size = 0;  // 0 selects the task default
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 1000;
  std::size_t validate_every = 500;  // 0 disables validation during training
  std::size_t validation_cap = 1000;  // clips scored per validation, 0 for all
  std::size_t inference_batch = 16;
  std::string sampling = "uniform";

  void validate() const {
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
    if (!(lr_decay_factor > 0) || !std::isfinite(lr_decay_factor)) {
      throw ConfigError("lr_decay_factor must be positive");
    }
    if (lr_decay_every == 0) throw ConfigError("lr_decay_every must be positive");
    if (max_iterations == 0) throw ConfigError("max_iterations must be positive");
    if (checkpoint_every == 0) throw ConfigError("checkpoint_every must be positive");
    if (inference_batch == 0) throw ConfigError("inference_batch must be positive");
    if (sampling != "uniform") throw ConfigError("sampling must be \"uniform\", got \"" + sampling + "\"");
  }

  std::size_t effective_batch(const TaskAdapter& task) const {
    return batch_size == 0 ? task.default_batch_size : batch_size;
  }
};

/// Step-decayed rate for 0-based iteration i.
inline double learning_rate_at(const TrainConfig& cfg, std::size_t iteration) {
  return cfg.learning_rate *
         std::pow(cfg.lr_decay_factor, static_cast<double>(iteration / cfg.lr_decay_every));
}

/// Batch order is seeded separately from the weight initialization.
inline std::uint64_t batch_seed(std::uint64_t seed) { return seed ^ 0x9E3779B97F4A7C15ull; }

struct TrainOutputs {
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const std::string&)> log;  // one key=value record per call, no newline
  // Called after each validation with the completed step count; returning
  // true ends the run there. Unset for recipe runs, which use the full budget.
  std::function<bool(std::size_t, std::optional<double>)> stop_after_validation;
};

struct TrainResult {
  ModelParams<float> params;  // after the last step
  std::optional<ModelParams<float>> best_params;
  std::optional<double> best_score;
  std::size_t best_iteration = 0;  // completed steps at the best validation
  std::size_t iterations = 0;
  std::vector<double> losses;
};

inline std::string checkpoint_name(std::size_t completed) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "iter_%06zu.ctc", completed);
  return buf;
}

namespace detail {

/// Evenly spaced subset of at most `cap` clips, all when cap is 0.
inline std::vector<std::size_t> capped_clips(std::size_t n, std::size_t cap) {
  std::vector<std::size_t> out;
  const std::size_t take = cap == 0 ? n : std::min(n, cap);
  for (std::size_t i = 0; i < take; ++i) out.push_back(i * n / take);
  return out;
}

inline void save_model(const std::filesystem::path& path, const ModelParams<float>& params, const AdamState<float>& adam,
                       std::size_t completed, std::uint64_t seed, const std::string& rng_state) {
  Checkpoint<float> ckpt{params.clone(), adam, true, completed, seed, rng_state};
  save_checkpoint(path, ckpt);
}

}  // namespace detail

/// Runs cfg.max_iterations Adam steps on batches from `train_set`.
/// Log records:
///   iteration=I lr=R loss=L                 every step (I is 0-based)
///   iteration=I val_metric=M val_score=S    after steps where (I+1) % validate_every == 0
///   iteration=I checkpoint=NAME completed=C after steps where C=(I+1) % checkpoint_every == 0
/// plus best.ctc on each strict validation improvement and final.ctc at the end.
inline TrainResult train(const TaskAdapter& task, Variant variant, const TrainConfig& cfg, FeatureSet& train_set,
                         FeatureSet* validation = nullptr, const TrainOutputs& out = {}) {
  cfg.validate();
  if (train_set.item_count() == 0) throw ConfigError("training set is empty");
  const ModelSpec spec = task.model_spec(variant);
  const std::size_t batch = cfg.effective_batch(task);
  const auto emit = [&](const std::string& line) {
    if (out.log) out.log(line);
  };
  if (out.checkpoint_dir) std::filesystem::create_directories(*out.checkpoint_dir);

  TrainResult result;
  result.params = build_model<float>(spec, cfg.seed);
  ModelParams<float>& params = result.params;
  auto trainable = params.trainable();
  AdamState<float> adam = AdamState<float>::create(trainable);
  BatchStream stream(train_set.item_count(), batch, batch_seed(cfg.seed));
  const LossKind kind = loss_kind_for(spec.head);

  emit("task=" + std::to_string(task.id) + " model=" + to_string(variant) +
       " classes=" + std::to_string(spec.n_classes) + " batch=" + std::to_string(batch) +
       " iterations=" + std::to_string(cfg.max_iterations) + " seed=" + std::to_string(cfg.seed) +
       " train_clips=" + std::to_string(train_set.clip_count()) +
       " train_items=" + std::to_string(train_set.item_count()) +
       " validation_clips=" + std::to_string(validation ? validation->clip_count() : 0));

  std::vector<std::size_t> val_clips;
  std::vector<std::vector<std::size_t>> val_labels;
  if (validation && cfg.validate_every > 0) {
    val_clips = detail::capped_clips(validation->clip_count(), cfg.validation_cap);
    for (std::size_t c : val_clips) val_labels.push_back(validation->clip(c).labels);
  }

  std::size_t completed = 0;
  bool stop = false;
  for (std::size_t i = 0; i < cfg.max_iterations && !stop; ++i) {
    const double lr = learning_rate_at(cfg, i);
    const auto items = stream.next();
    double loss_value = 0.0;
    try {
      params.set_mode(BnMode::train);
      Tape<float> tape;
      const Var<float> x = constant(train_set.input_batch(items));
      const Tensor<float> y = train_set.target_batch(items, spec.n_classes);
      Var<float> l = loss(tape, forward_train(tape, params, x), y, kind);
      loss_value = l.value()[0];
      if (!std::isfinite(loss_value)) throw NumericError("loss is not finite");
      params.zero_grad();
      tape.backward(l);
      for (const auto& p : trainable) require_finite(p.grad(), "gradient");
      adam_step(std::span<Var<float>>(trainable), adam, lr);
    } catch (const NumericError& e) {
      throw NumericError("training diverged at iteration " + std::to_string(i) + ": " + e.what());
    }
    result.losses.push_back(loss_value);
    emit("iteration=" + std::to_string(i) + " lr=" + format_real(lr) + " loss=" + format_real(loss_value));
    completed = i + 1;

    if (validation && !val_clips.empty() && completed % cfg.validate_every == 0) {
      const auto outputs = infer(params, *validation, cfg.inference_batch, val_clips);
      const auto score = validation_score(task, outputs, val_labels);
      emit("iteration=" + std::to_string(i) + " val_metric=" + task.validation_metric +
           " val_score=" + (score ? format_real(*score) : std::string("NA")));
      if (score && (!result.best_score || *score > *result.best_score)) {
        result.best_score = score;
        result.best_iteration = completed;
        result.best_params = params.clone();
        if (out.checkpoint_dir) {
          detail::save_model(*out.checkpoint_dir / "best.ctc", params, adam, completed, cfg.seed, stream.rng_state());
        }
      }
      if (out.stop_after_validation) stop = out.stop_after_validation(completed, score);
    }
    if (completed % cfg.checkpoint_every == 0 && out.checkpoint_dir) {
      const std::string name = checkpoint_name(completed);
      detail::save_model(*out.checkpoint_dir / name, params, adam, completed, cfg.seed, stream.rng_state());
      emit("iteration=" + std::to_string(i) + " checkpoint=" + name + " completed=" + std::to_string(completed));
    }
  }
  result.iterations = completed;
  if (out.checkpoint_dir) {
    detail::save_model(*out.checkpoint_dir / "final.ctc", params, adam, completed, cfg.seed, stream.rng_state());
  }
  emit("done iterations=" + std::to_string(completed) +
       " best_score=" + (result.best_score ? format_real(*result.best_score) : std::string("NA")) +
       " best_completed=" + std::to_string(result.best_iteration));
  params.set_mode(BnMode::train);
  return result;
}

}  // namespace crosstask
