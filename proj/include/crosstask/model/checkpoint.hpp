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
#include <filesystem>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include "crosstask/core/adam.hpp"
#include "crosstask/core/binary_io.hpp"
#include "crosstask/model/model.hpp"

// Checkpoint container, little-endian throughout:
//
//   "CTCK" u32 version
//   u8 variant  u32 n_classes  u8 head  u8 pooling
//   u8 scalar_bytes (4 = float32, 8 = float64)
//   u64 iteration  u64 seed  str rng_state
//   u32 tensor_count, then per tensor: str name, u32 rank, u32 dims[rank], data
//   u8 has_adam; if set: u64 step, f64 beta1, f64 beta2, f64 eps, u32 slots,
//     then per trainable tensor (registration order): first moment, second moment
//
// Strings are u32 length + bytes. Tensor data is raw IEEE-754 in the
// declared width, so a load reproduces every bit.

namespace crosstask {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct Checkpoint {
  ModelParams<T> params;
  AdamState<T> adam;
  bool has_adam = false;
  std::uint64_t iteration = 0;
  std::uint64_t seed = 0;
  std::string rng_state;
};

namespace detail {

template <typename T>
void write_scalar(BinaryWriter& w, T v) {
  if constexpr (std::is_same_v<T, float>) {
    w.f32(v);
  } else {
    w.f64(v);
  }
}

template <typename T>
T read_scalar(BinaryReader& r) {
  if constexpr (std::is_same_v<T, float>) {
    return r.f32();
  } else {
    return r.f64();
  }
}

template <typename T>
void write_data(BinaryWriter& w, const Tensor<T>& t) {
  for (T v : t.values()) write_scalar(w, v);
}

template <typename T>
void read_data(BinaryReader& r, Tensor<T>& t) {
  for (T& v : t.values()) v = read_scalar<T>(r);
}

}  // namespace detail

template <typename T>
BinaryWriter encode_checkpoint(Checkpoint<T>& ckpt) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  BinaryWriter w;
  w.raw("CTCK");
  w.u32(kCheckpointVersion);
  const ModelSpec& spec = ckpt.params.spec;
  w.u8(static_cast<std::uint8_t>(spec.variant));
  w.u32(static_cast<std::uint32_t>(spec.n_classes));
  w.u8(static_cast<std::uint8_t>(spec.head));
  w.u8(static_cast<std::uint8_t>(spec.pooling));
  w.u8(sizeof(T));
  w.u64(ckpt.iteration);
  w.u64(ckpt.seed);
  w.str(ckpt.rng_state);
  auto named = ckpt.params.named_tensors();
  w.u32(static_cast<std::uint32_t>(named.size()));
  for (const auto& nt : named) {
    w.str(nt.name);
    w.u32(static_cast<std::uint32_t>(nt.tensor->rank()));
    for (std::size_t d : nt.tensor->shape()) w.u32(static_cast<std::uint32_t>(d));
    detail::write_data(w, *nt.tensor);
  }
  w.u8(ckpt.has_adam ? 1 : 0);
  if (ckpt.has_adam) {
    const auto& a = ckpt.adam;
    w.u64(static_cast<std::uint64_t>(a.step));
    w.f64(a.beta1);
    w.f64(a.beta2);
    w.f64(a.eps);
    w.u32(static_cast<std::uint32_t>(a.first_moment.size()));
    for (std::size_t i = 0; i < a.first_moment.size(); ++i) {
      detail::write_data(w, a.first_moment[i]);
      detail::write_data(w, a.second_moment[i]);
    }
  }
  return w;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, Checkpoint<T>& ckpt) {
  encode_checkpoint(ckpt).save(path);
}

template <typename T>
Checkpoint<T> decode_checkpoint(BinaryReader& r) {
  r.header("CTCK", kCheckpointVersion);
  ModelSpec spec;
  const std::uint8_t variant = r.u8();
  spec.n_classes = r.u32();
  const std::uint8_t head = r.u8();
  const std::uint8_t pooling = r.u8();
  if (variant > 1 || head > 1 || pooling > 1) throw FormatError(r.source() + ": invalid model spec");
  spec.variant = static_cast<Variant>(variant);
  spec.head = static_cast<Head>(head);
  spec.pooling = static_cast<PoolingMode>(pooling);
  const std::uint8_t width = r.u8();
  if (width != sizeof(T)) {
    throw FormatError(r.source() + ": checkpoint stores " + std::to_string(width * 8) + "-bit values, reader expects " +
                      std::to_string(sizeof(T) * 8) + "-bit");
  }
  Checkpoint<T> ckpt;
  ckpt.iteration = r.u64();
  ckpt.seed = r.u64();
  ckpt.rng_state = r.str();
  ckpt.params = build_model<T>(spec, 0);

  auto named = ckpt.params.named_tensors();
  std::map<std::string, Tensor<T>*> by_name;
  for (auto& nt : named) by_name[nt.name] = nt.tensor;
  const std::uint32_t count = r.u32();
  if (count != named.size()) {
    throw FormatError(r.source() + ": expected " + std::to_string(named.size()) + " tensors, found " +
                      std::to_string(count));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError(r.source() + ": unknown tensor '" + name + "'");
    Shape shape(r.u32());
    for (auto& d : shape) d = r.u32();
    if (shape != it->second->shape()) {
      throw FormatError(r.source() + ": tensor '" + name + "' has shape " + to_string(shape) + ", expected " +
                        to_string(it->second->shape()));
    }
    detail::read_data(r, *it->second);
  }
  ckpt.has_adam = r.u8() != 0;
  if (ckpt.has_adam) {
    auto trainable = ckpt.params.trainable();
    ckpt.adam = AdamState<T>::create(trainable);
    ckpt.adam.step = static_cast<std::int64_t>(r.u64());
    ckpt.adam.beta1 = r.f64();
    ckpt.adam.beta2 = r.f64();
    ckpt.adam.eps = r.f64();
    if (r.u32() != trainable.size()) throw FormatError(r.source() + ": optimizer slot count mismatch");
    for (std::size_t i = 0; i < trainable.size(); ++i) {
      detail::read_data(r, ckpt.adam.first_moment[i]);
      detail::read_data(r, ckpt.adam.second_moment[i]);
    }
  }
  r.expect_end();
  return ckpt;
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  auto r = BinaryReader::from_file(path);
  return decode_checkpoint<T>(r);
}

}  // namespace crosstask
