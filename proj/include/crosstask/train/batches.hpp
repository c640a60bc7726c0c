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
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "crosstask/core/errors.hpp"
#include "crosstask/core/random.hpp"

namespace crosstask {

/// Endless stream of fixed-size batches over item indices [0, n). Each epoch
/// is a fresh seeded permutation; a batch that runs past the end of an epoch
/// continues into the next one, so every batch is full.
class BatchStream {
 public:
  BatchStream(std::size_t items, std::size_t batch_size, std::uint64_t seed)
      : rng_(seed), order_(items), batch_size_(batch_size) {
    if (items == 0) throw UsageError("batch stream over an empty training set");
    if (batch_size == 0) throw UsageError("batch size must be positive");
    reshuffle();
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> batch;
    batch.reserve(batch_size_);
    while (batch.size() < batch_size_) {
      if (pos_ == order_.size()) reshuffle();
      batch.push_back(order_[pos_++]);
    }
    return batch;
  }

  std::size_t epoch() const { return epoch_; }
  std::size_t batch_size() const { return batch_size_; }
  std::string rng_state() const { return rng_.state(); }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    rng_.shuffle(std::span<std::size_t>(order_));
    pos_ = 0;
    ++epoch_;
  }

  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t pos_ = 0;
  std::size_t epoch_ = 0;
};

}  // namespace crosstask
