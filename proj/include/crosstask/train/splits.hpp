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
#include "crosstask/train/manifest.hpp"
#include "crosstask/train/task.hpp"

namespace crosstask {

/// One (train, validation) pair as row indices into a manifest.
struct Split {
  std::string name;  // "fold<k>"
  int validation_fold = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Each requested fold in turn is held out for validation and every other
/// fold trains. With no request, k-fold and leave-one-dataset-out schemes use
/// every fold present and the single scheme uses the highest fold. Tasks
/// flagged `verified_validation_only` drop unverified clips from validation
/// (they still never train in that split).
inline std::vector<Split> make_splits(const DatasetManifest& manifest, const TaskAdapter& task,
                                      std::vector<int> requested = {}) {
  const std::set<int> present = manifest.folds();
  if (present.empty()) throw ConfigError("cannot split an empty manifest");
  if (requested.empty()) {
    if (task.scheme == SplitScheme::single) {
      requested = {*present.rbegin()};
    } else {
      requested.assign(present.begin(), present.end());
    }
  }
  std::set<int> seen;
  for (int f : requested) {
    if (!present.contains(f)) throw ConfigError("requested fold " + std::to_string(f) + " is not in the manifest");
    if (!seen.insert(f).second) throw ConfigError("fold " + std::to_string(f) + " requested twice");
  }

  std::vector<Split> out;
  for (int f : requested) {
    Split s;
    s.name = "fold" + std::to_string(f);
    s.validation_fold = f;
    for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
      const auto& row = manifest.rows[i];
      if (row.fold != f) {
        s.train.push_back(i);
      } else if (row.verified || !task.verified_validation_only) {
        s.validation.push_back(i);
      }
    }
    if (s.train.empty()) throw ConfigError(s.name + ": no training clips outside fold " + std::to_string(f));
    if (s.validation.empty()) throw ConfigError(s.name + ": no validation clips (verified clips only for this task)");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace crosstask
