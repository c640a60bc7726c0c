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

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "crosstask/core/ops.hpp"
#include "crosstask/core/random.hpp"

namespace crosstask {

enum class Variant { cnn4, cnn8 };
enum class Head { softmax, sigmoid };
enum class PoolingMode { clip, frames };

inline constexpr std::size_t kMelBins = 64;
inline constexpr std::array<std::size_t, 4> kBlockChannels{64, 128, 256, 512};

inline std::string to_string(Variant v) { return v == Variant::cnn4 ? "cnn4" : "cnn8"; }
inline std::string to_string(Head h) { return h == Head::softmax ? "softmax" : "sigmoid"; }
inline std::string to_string(PoolingMode p) { return p == PoolingMode::clip ? "clip" : "frames"; }

inline Variant parse_variant(const std::string& s) {
  if (s == "cnn4") return Variant::cnn4;
  if (s == "cnn8") return Variant::cnn8;
  throw ConfigError("unknown model variant '" + s + "' (expected cnn4 or cnn8)");
}

/// Architecture of one network: trunk depth, class count, output
/// nonlinearity and whether the time axis is pooled.
struct ModelSpec {
  Variant variant = Variant::cnn4;
  std::size_t n_classes = 10;
  Head head = Head::softmax;
  PoolingMode pooling = PoolingMode::clip;

  void validate() const {
    if (n_classes < 1) throw ConfigError("model needs at least one class");
    if (head == Head::softmax && n_classes < 2) throw ConfigError("softmax head needs at least two classes");
    if (pooling == PoolingMode::frames && head != Head::sigmoid) {
      throw ConfigError("frame-wise pooling requires a sigmoid head (multi-label detection)");
    }
  }

  std::size_t convs_per_block() const { return variant == Variant::cnn4 ? 1 : 2; }
  std::size_t kernel_size() const { return variant == Variant::cnn4 ? 5 : 3; }
  std::size_t pool_h() const { return pooling == PoolingMode::clip ? 2 : 1; }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

template <typename T>
struct ConvLayer {
  std::string name;  // e.g. "block2.conv1"
  std::string bn_name;
  Var<T> weight;
  BatchNormState<T> bn;
};

/// Named view of one stored tensor.
template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T>* tensor;
  bool trainable;
};

/// Learned parameters plus batch-norm running statistics. Tensor names are
/// stable per variant:
///   block{b}.conv{j}.weight, block{b}.bn{j}.{gamma,beta,running_mean,running_var},
///   fc.weight, fc.bias
/// with b = 1..4 and j = 1 (cnn4) or 1..2 (cnn8).
template <typename T>
struct ModelParams {
  ModelSpec spec;
  std::vector<ConvLayer<T>> convs;
  Var<T> fc_weight;
  Var<T> fc_bias;

  /// Trainable tensors in a fixed order (optimizer slot order).
  std::vector<Var<T>> trainable() const {
    std::vector<Var<T>> out;
    for (const auto& c : convs) {
      out.push_back(c.weight);
      out.push_back(c.bn.gamma);
      out.push_back(c.bn.beta);
    }
    if (fc_weight.defined()) out.push_back(fc_weight);
    if (fc_bias.defined()) out.push_back(fc_bias);
    return out;
  }

  std::vector<NamedTensor<T>> named_tensors() {
    std::vector<NamedTensor<T>> out;
    for (auto& c : convs) {
      out.push_back({c.name + ".weight", &c.weight.value(), true});
      out.push_back({c.bn_name + ".gamma", &c.bn.gamma.value(), true});
      out.push_back({c.bn_name + ".beta", &c.bn.beta.value(), true});
      out.push_back({c.bn_name + ".running_mean", &c.bn.running_mean, false});
      out.push_back({c.bn_name + ".running_var", &c.bn.running_var, false});
    }
    if (fc_weight.defined()) out.push_back({"fc.weight", &fc_weight.value(), true});
    if (fc_bias.defined()) out.push_back({"fc.bias", &fc_bias.value(), true});
    return out;
  }

  void set_mode(BnMode mode) {
    for (auto& c : convs) c.bn.mode = mode;
  }

  void zero_grad() const {
    for (const auto& p : trainable()) p.zero_grad();
  }

  /// Deep copy; parameters of the copy do not alias this one.
  ModelParams clone() const {
    ModelParams out;
    out.spec = spec;
    for (const auto& c : convs) {
      ConvLayer<T> l;
      l.name = c.name;
      l.bn_name = c.bn_name;
      l.weight = parameter(c.weight.value());
      l.bn = c.bn;
      l.bn.gamma = parameter(c.bn.gamma.value());
      l.bn.beta = parameter(c.bn.beta.value());
      out.convs.push_back(std::move(l));
    }
    if (fc_weight.defined()) out.fc_weight = parameter(fc_weight.value());
    if (fc_bias.defined()) out.fc_bias = parameter(fc_bias.value());
    return out;
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.spec = spec;
    for (const auto& c : convs) {
      ConvLayer<U> l;
      l.name = c.name;
      l.bn_name = c.bn_name;
      l.weight = parameter(c.weight.value().template cast<U>());
      l.bn.gamma = parameter(c.bn.gamma.value().template cast<U>());
      l.bn.beta = parameter(c.bn.beta.value().template cast<U>());
      l.bn.running_mean = c.bn.running_mean.template cast<U>();
      l.bn.running_var = c.bn.running_var.template cast<U>();
      l.bn.eps = c.bn.eps;
      l.bn.momentum = c.bn.momentum;
      l.bn.mode = c.bn.mode;
      out.convs.push_back(std::move(l));
    }
    out.fc_weight = parameter(fc_weight.value().template cast<U>());
    out.fc_bias = parameter(fc_bias.value().template cast<U>());
    return out;
  }
};

/// Element count of trainable tensors; running statistics are excluded.
template <typename T>
std::size_t count_parameters(const ModelParams<T>& params) {
  std::size_t total = 0;
  for (const auto& p : params.trainable()) total += p.value().size();
  return total;
}

namespace detail {

template <typename T>
Tensor<T> glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (T& v : t.values()) v = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

}  // namespace detail

/// CNN4: four blocks of [5x5 conv, BN, ReLU, pool]; CNN8: four blocks of
/// [3x3 conv, BN, ReLU] x2 then pool. Channels 64/128/256/512, convolutions
/// without bias, then a 512 -> n_classes affine head. Glorot-uniform
/// weights drawn from `seed`.
template <typename T>
ModelParams<T> build_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  ModelParams<T> params;
  params.spec = spec;
  const std::size_t k = spec.kernel_size();
  std::size_t in_ch = 1;
  for (std::size_t b = 0; b < kBlockChannels.size(); ++b) {
    const std::size_t out_ch = kBlockChannels[b];
    for (std::size_t j = 0; j < spec.convs_per_block(); ++j) {
      ConvLayer<T> layer;
      layer.name = "block" + std::to_string(b + 1) + ".conv" + std::to_string(j + 1);
      layer.bn_name = "block" + std::to_string(b + 1) + ".bn" + std::to_string(j + 1);
      layer.weight =
          parameter(detail::glorot_uniform<T>({out_ch, in_ch, k, k}, in_ch * k * k, out_ch * k * k, rng));
      layer.bn = BatchNormState<T>::create(out_ch);
      params.convs.push_back(std::move(layer));
      in_ch = out_ch;
    }
  }
  params.fc_weight = parameter(detail::glorot_uniform<T>({spec.n_classes, in_ch}, in_ch, spec.n_classes, rng));
  params.fc_bias = parameter(Tensor<T>({spec.n_classes}, T{0}));
  return params;
}

/// Shape of the activation after a named layer, for ladder inspection.
struct LayerTrace {
  std::string layer;
  Shape shape;
};

namespace detail {

/// Shared convolutional trunk. Input (N, 1, T, 64).
template <typename T>
Var<T> trunk(Tape<T>& tape, ModelParams<T>& params, const Var<T>& input, std::vector<LayerTrace>* trace) {
  const ModelSpec& spec = params.spec;
  if (input.shape().size() != 4 || input.shape()[1] != 1) {
    throw ShapeError("model input must be (N, 1, T, " + std::to_string(kMelBins) + "), got " +
                     to_string(input.shape()));
  }
  if (input.shape()[3] != kMelBins) {
    throw ShapeError("model input must have " + std::to_string(kMelBins) + " mel bins, got " +
                     std::to_string(input.shape()[3]));
  }
  const std::size_t pool_h = spec.pool_h();
  std::size_t frames = input.shape()[2];
  for (std::size_t b = 0; b < kBlockChannels.size(); ++b) {
    if (frames % pool_h != 0) {
      throw ShapeError("block" + std::to_string(b + 1) + ".pool: " + std::to_string(frames) +
                       " time steps are not divisible by " + std::to_string(pool_h) + " (clip-mode input needs T" +
                       " divisible by 16, got " + std::to_string(input.shape()[2]) + ")");
    }
    frames /= pool_h;
  }

  Var<T> x = input;
  std::size_t layer = 0;
  for (std::size_t b = 0; b < kBlockChannels.size(); ++b) {
    for (std::size_t j = 0; j < spec.convs_per_block(); ++j, ++layer) {
      auto& conv = params.convs.at(layer);
      x = conv2d(tape, x, conv.weight);
      x = batchnorm2d(tape, x, conv.bn);
      x = relu(tape, x);
    }
    x = maxpool2d(tape, x, pool_h, std::size_t{2});
    if (trace) trace->push_back({"block" + std::to_string(b + 1) + ".pool", x.shape()});
  }
  return x;
}

}  // namespace detail

/// Clip-level probabilities (N, n_classes) for input (N, 1, T, 64) with T
/// divisible by 16: trunk -> global max pooling -> affine -> head.
template <typename T>
Var<T> forward_clip(Tape<T>& tape, ModelParams<T>& params, const Var<T>& input,
                    std::vector<LayerTrace>* trace = nullptr) {
  if (params.spec.pooling != PoolingMode::clip) {
    throw ConfigError("forward_clip needs a clip-pooling model");
  }
  Var<T> x = detail::trunk(tape, params, input, trace);
  x = global_max_pool(tape, x);
  if (trace) trace->push_back({"global_max_pool", x.shape()});
  x = linear(tape, x, params.fc_weight, params.fc_bias);
  return params.spec.head == Head::softmax ? softmax(tape, x) : sigmoid(tape, x);
}

template <typename T>
struct FramesOutput {
  Var<T> clip_probs;   // (N, n_classes), from the time-averaged embedding
  Var<T> frame_probs;  // (N, T, n_classes)
  Var<T> embeddings;   // (N, 512, T) before the head
};

/// Frame-wise detection model: the trunk pools frequency only, the residual
/// 4 frequency bins are max-pooled, and the 512-d frame embeddings feed the
/// head. Training uses `clip_probs` (mean over time, then affine + sigmoid);
/// inference reads `frame_probs` (affine + sigmoid per frame).
template <typename T>
FramesOutput<T> forward_frames(Tape<T>& tape, ModelParams<T>& params, const Var<T>& input,
                               std::vector<LayerTrace>* trace = nullptr) {
  if (params.spec.pooling != PoolingMode::frames) {
    throw ConfigError("forward_frames needs a frames-pooling model");
  }
  Var<T> x = detail::trunk(tape, params, input, trace);
  const std::size_t n = x.shape()[0], c = x.shape()[1], frames = x.shape()[2], freq = x.shape()[3];
  x = maxpool2d(tape, x, std::size_t{1}, freq);
  x = reshape(tape, x, {n, c, frames});
  if (trace) trace->push_back({"frequency_max_pool", x.shape()});

  FramesOutput<T> out;
  out.embeddings = x;
  Var<T> pooled = mean_over_time(tape, x);
  out.clip_probs = sigmoid(tape, linear(tape, pooled, params.fc_weight, params.fc_bias));

  Var<T> rows = reshape(tape, channels_last(tape, x), {n * frames, c});
  Var<T> frame_logits = linear(tape, rows, params.fc_weight, params.fc_bias);
  out.frame_probs = reshape(tape, sigmoid(tape, frame_logits), {n, frames, params.spec.n_classes});
  return out;
}

/// Model output used for training: clip probabilities for either pooling mode.
template <typename T>
Var<T> forward_train(Tape<T>& tape, ModelParams<T>& params, const Var<T>& input) {
  if (params.spec.pooling == PoolingMode::clip) return forward_clip(tape, params, input);
  return forward_frames(tape, params, input).clip_probs;
}

inline LossKind loss_kind_for(Head head) {
  return head == Head::softmax ? LossKind::categorical_ce : LossKind::binary_ce;
}

/// Stable text listing of every layer and parameter tensor.
inline std::string describe(const ModelSpec& spec) {
  spec.validate();
  auto params = build_model<float>(spec, 0);
  std::ostringstream out;
  out << "model variant=" << to_string(spec.variant) << " classes=" << spec.n_classes
      << " head=" << to_string(spec.head) << " pooling=" << to_string(spec.pooling) << "\n";
  const std::size_t k = spec.kernel_size();
  std::size_t in_ch = 1;
  std::size_t layer = 0;
  const std::string pool = std::to_string(spec.pool_h()) + "x2";
  for (std::size_t b = 0; b < kBlockChannels.size(); ++b) {
    for (std::size_t j = 0; j < spec.convs_per_block(); ++j, ++layer) {
      const auto& c = params.convs[layer];
      const std::size_t out_ch = kBlockChannels[b];
      out << "layer " << c.name << " conv2d " << k << "x" << k << " " << in_ch << "->" << out_ch
          << " params=" << c.weight.value().size() << "\n";
      out << "layer " << c.bn_name << " batchnorm2d " << out_ch << " params=" << 2 * out_ch << "\n";
      out << "layer block" << b + 1 << ".relu" << j + 1 << " relu params=0\n";
      in_ch = out_ch;
    }
    out << "layer block" << b + 1 << ".pool maxpool2d " << pool << " params=0\n";
  }
  if (spec.pooling == PoolingMode::clip) {
    out << "layer global_max_pool global_max_pool params=0\n";
  } else {
    out << "layer frequency_max_pool maxpool2d 1x4 params=0\n";
    out << "layer time_mean mean_over_time training-only params=0\n";
  }
  out << "layer fc linear " << in_ch << "->" << spec.n_classes << " params=" << in_ch * spec.n_classes + spec.n_classes
      << "\n";
  out << "layer head " << to_string(spec.head) << " params=0\n";
  for (const auto& nt : params.named_tensors()) {
    out << "tensor " << nt.name << " " << to_string(nt.tensor->shape()) << " "
        << (nt.trainable ? "trainable" : "buffer") << "\n";
  }
  out << "total_params=" << count_parameters(params) << "\n";
  return out.str();
}

}  // namespace crosstask
