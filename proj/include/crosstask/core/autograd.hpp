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

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "crosstask/core/tensor.hpp"

namespace crosstask {

template <typename T>
struct VarNode {
  Tensor<T> value;
  Tensor<T> grad;
  bool has_grad = false;
  bool requires_grad = false;
};

/// Shared handle to a tensor taking part in differentiation. Copies alias
/// the same node.
template <typename T>
class Var {
 public:
  Var() = default;

  Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<VarNode<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }

  /// Gradient buffer, zero-filled on first access. Handles share the node,
  /// so this is available through const handles.
  Tensor<T>& grad() const {
    if (!node_->has_grad) {
      node_->grad = Tensor<T>(node_->value.shape(), T{});
      node_->has_grad = true;
    }
    return node_->grad;
  }

  bool has_grad() const noexcept { return node_ && node_->has_grad; }

  void zero_grad() const { grad().fill(T{}); }

  /// Frees the gradient buffer (intermediates after backward).
  void release_grad() const {
    node_->grad = Tensor<T>();
    node_->has_grad = false;
  }

  bool same_node(const Var& other) const noexcept { return node_ == other.node_; }

 private:
  std::shared_ptr<VarNode<T>> node_;
};

template <typename T>
Var<T> parameter(Tensor<T> value) {
  return Var<T>(std::move(value), true);
}

template <typename T>
Var<T> constant(Tensor<T> value) {
  return Var<T>(std::move(value), false);
}

/// Ordered record of executed operations. Ops append a backward closure when
/// any of their inputs requires a gradient and recording is enabled.
template <typename T>
class Tape {
 public:
  struct Record {
    std::string op;
    std::function<void()> backward;
  };

  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const noexcept { return recording_; }
  void set_recording(bool on) noexcept { recording_ = on; }

  bool should_record(std::initializer_list<const Var<T>*> inputs) const {
    if (!recording_) return false;
    for (const Var<T>* v : inputs) {
      if (v->requires_grad()) return true;
    }
    return false;
  }

  void record(std::string op, std::function<void()> backward) {
    records_.push_back(Record{std::move(op), std::move(backward)});
  }

  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }

  std::vector<std::string> op_names() const {
    std::vector<std::string> names;
    names.reserve(records_.size());
    for (const auto& r : records_) names.push_back(r.op);
    return names;
  }

  /// Seeds d(loss)/d(loss) = 1, replays every record once in reverse order,
  /// then clears the tape. Returns the number of records visited.
  std::size_t backward(Var<T>& loss) {
    if (loss.value().size() != 1) {
      throw UsageError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
    }
    if (records_.empty()) throw UsageError("backward on an empty tape");
    loss.grad().fill(T{1});
    std::size_t visited = 0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      it->backward();
      ++visited;
    }
    records_.clear();
    return visited;
  }

  void clear() noexcept { records_.clear(); }

 private:
  std::vector<Record> records_;
  bool recording_;
};

}  // namespace crosstask
