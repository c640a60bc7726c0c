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

// Tags one WAV file with a model trained by the crosstask CLI.
//
//   tag_clip CONFIG SPLIT WAV
//
// Uses the split's scaler and the configured checkpoint (final or best),
// then prints every class with its probability, highest first.
//
// On a copy of the bundled scenes fixture, after the features and train
// commands have run there:
//
//   tag_clip scenes/config.json fold2 scenes/audio/scene_20.wav

#include <algorithm>
#include <iomanip>
#include <iostream>
#include <numeric>

#include "crosstask/cli/commands.hpp"
#include "crosstask/cli/config.hpp"
#include "crosstask/model/checkpoint.hpp"
#include "crosstask/train/inference.hpp"

int main(int argc, char** argv) {
  using namespace crosstask;
  if (argc != 4) {
    std::cerr << "usage: tag_clip CONFIG SPLIT WAV\n";
    return kExitUsage;
  }
  try {
    const RunConfig cfg = load_config(argv[1]);
    validate_config(cfg);
    const std::string split = argv[2];
    const TaskAdapter task = cfg.adapter();

    auto features = extract_log_mel(load_wav(argv[3]), cfg.features, cfg.features.filterbank(), "clip");
    apply_scaler(features, cli_detail::load_scaler(cfg, split));

    auto ckpt = load_checkpoint<float>(cli_detail::checkpoint_dir(cfg, split) / (cfg.use_checkpoint + ".ctc"));
    check_model_matches(ckpt.params.spec, task);
    auto set = FeatureSet::from_memory({std::move(features)}, {{}}, cfg.segment_frames());
    const auto out = infer(ckpt.params, set).at(0);

    std::vector<std::size_t> order(out.probs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return out.probs[a] > out.probs[b]; });
    for (std::size_t k : order) {
      std::cout << std::fixed << std::setprecision(4) << out.probs[k] << "  " << task.classes[k] << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitOk;
}
