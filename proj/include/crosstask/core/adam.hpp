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
#include <cstdint>
#include <span>
#include <vector>

#include "crosstask/core/autograd.hpp"

namespace crosstask {

/// Adam moments, one pair per parameter in registration order.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState create(std::span<const Var<T>> params) {
    AdamState s;
    for (const auto& p : params) {
      s.first_moment.emplace_back(p.shape(), T{});
      s.second_moment.emplace_back(p.shape(), T{});
    }
    return s;
  }
};

/// One bias-corrected Adam update of every parameter from its gradient.
template <typename T>
void adam_step(std::span<Var<T>> params, AdamState<T>& state, double lr) {
  if (!(lr > 0.0)) throw UsageError("adam_step: learning rate must be positive");
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  state.step += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Var<T>& p = params[i];
    Tensor<T>& m = state.first_moment[i];
    Tensor<T>& v = state.second_moment[i];
    if (m.shape() != p.shape()) {
      throw ShapeError("adam_step: moment shape " + to_string(m.shape()) + " does not match parameter " +
                       to_string(p.shape()));
    }
    const Tensor<T>& g = p.grad();
    T* w = p.value().data();
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double gj = g[j];
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double m_hat = mj / correction1;
      const double v_hat = vj / correction2;
      w[j] = static_cast<T>(w[j] - lr * m_hat / (std::sqrt(v_hat) + state.eps));
    }
  }
}

}  // namespace crosstask
