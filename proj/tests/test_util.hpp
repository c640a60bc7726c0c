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
#include <cmath>
#include <functional>
#include <vector>

#include "crosstask/core/autograd.hpp"
#include "crosstask/core/random.hpp"
#include "crosstask/model/model.hpp"

namespace crosstask::testing {

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

/// Relative errors between the analytic gradient already stored in
/// `param.grad()` and central differences of `loss` at `points` random
/// coordinates. `loss` must evaluate with the current parameter values.
inline std::vector<double> gradient_errors(Var<double>& param, const std::function<double()>& loss, Rng& rng,
                                           int points = 20, double h = 1e-6) {
  std::vector<double> errors;
  const std::size_t n = param.value().size();
  for (int k = 0; k < points; ++k) {
    const std::size_t i = static_cast<std::size_t>(rng.below(n));
    const double saved = param.value()[i];
    param.value()[i] = saved + h;
    const double up = loss();
    param.value()[i] = saved - h;
    const double down = loss();
    param.value()[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = param.grad()[i];
    errors.push_back(std::abs(analytic - numeric) / std::max(std::abs(analytic), 1e-8));
  }
  return errors;
}

/// Central-difference check over every trainable tensor of a double model,
/// `points_per_tensor` coordinates each. Clip models use their training loss;
/// frames models add a random projection of the frame outputs so both heads
/// are exercised. Returns one relative error per sampled coordinate.
/// The step is 1e-7: first-layer weights touch ~10^5 ReLU and pooling
/// decisions, and wider steps start crossing them.
inline std::vector<double> model_gradient_errors(ModelParams<double>& model, std::size_t frames, Rng& rng,
                                                 int points_per_tensor = 2) {
  const std::size_t n = 2;
  const std::size_t k = model.spec.n_classes;
  auto x = constant(random_tensor({n, 1, frames, kMelBins}, rng));
  Tensor<double> target({n, k}, 0.0);
  for (std::size_t r = 0; r < n; ++r) target.at(r, static_cast<std::size_t>(rng.below(k))) = 1.0;
  const Tensor<double> projection = random_tensor({n, frames, k}, rng);
  const LossKind kind = loss_kind_for(model.spec.head);
  auto objective = [&](Tape<double>& tape) {
    if (model.spec.pooling == PoolingMode::clip) return loss(tape, forward_clip(tape, model, x), target, kind);
    auto out = forward_frames(tape, model, x);
    auto clip = loss(tape, out.clip_probs, target, kind);
    auto frame = dot(tape, out.frame_probs, projection);
    return add(tape, clip, frame);
  };

  model.set_mode(BnMode::train);
  model.zero_grad();
  Tape<double> tape;
  auto total = objective(tape);
  tape.backward(total);
  auto value = [&] {
    Tape<double> inert(false);
    return objective(inert).value().item();
  };
  std::vector<double> errors;
  for (auto& param : model.trainable()) {
    auto e = gradient_errors(param, value, rng, points_per_tensor, 1e-7);
    errors.insert(errors.end(), e.begin(), e.end());
  }
  return errors;
}

inline double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

}  // namespace crosstask::testing
