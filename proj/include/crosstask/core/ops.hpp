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

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "crosstask/core/autograd.hpp"
#include "crosstask/core/tensor.hpp"

// Differentiable operations over Var. Every op checks its output for
// NaN/Inf and records a backward closure on the tape when an input requires
// a gradient. Convolutions lower to im2col + GEMM through Eigen.

namespace crosstask {

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstRowMap = Eigen::Map<const RowMatrix<T>>;

inline void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + " input, got " +
                     to_string(s));
  }
}

template <typename T>
bool any_requires_grad(std::initializer_list<const Var<T>*> vars) {
  for (const auto* v : vars) {
    if (v->requires_grad()) return true;
  }
  return false;
}

/// Geometry of one "same"-padded convolution.
struct ConvGeometry {
  std::size_t n, cin, h, w, cout, kh, kw;
  std::size_t hw() const { return h * w; }
  std::size_t k() const { return cin * kh * kw; }
};

// Max elements held in one im2col buffer.
inline constexpr std::size_t kIm2colBudget = std::size_t{1} << 23;

inline std::size_t conv_chunk(const ConvGeometry& g) {
  const std::size_t per_sample = g.k() * g.hw();
  return std::clamp<std::size_t>(kIm2colBudget / std::max<std::size_t>(per_sample, 1), 1, g.n);
}

// cols is K x (count*HW), row-major; column s*HW+p holds sample first+s at pixel p.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, std::size_t first, std::size_t count, T* cols) {
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(g.kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(g.kw / 2);
  const std::size_t width = count * g.hw();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = cols + ((c * g.kh + i) * g.kw + j) * width;
        for (std::size_t s = 0; s < count; ++s) {
          const T* plane = x + ((first + s) * g.cin + c) * g.hw();
          T* dst = row + s * g.hw();
          for (std::size_t y = 0; y < g.h; ++y) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + i) - ph;
            T* out = dst + y * g.w;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.h)) {
              std::fill(out, out + g.w, T{});
              continue;
            }
            const T* src = plane + static_cast<std::size_t>(sy) * g.w;
            for (std::size_t xo = 0; xo < g.w; ++xo) {
              const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xo + j) - pw;
              out[xo] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(g.w)) ? T{} : src[sx];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, std::size_t first, std::size_t count, T* dx) {
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(g.kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(g.kw / 2);
  const std::size_t width = count * g.hw();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = cols + ((c * g.kh + i) * g.kw + j) * width;
        for (std::size_t s = 0; s < count; ++s) {
          T* plane = dx + ((first + s) * g.cin + c) * g.hw();
          const T* src = row + s * g.hw();
          for (std::size_t y = 0; y < g.h; ++y) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + i) - ph;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            T* dst = plane + static_cast<std::size_t>(sy) * g.w;
            const T* in = src + y * g.w;
            for (std::size_t xo = 0; xo < g.w; ++xo) {
              const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xo + j) - pw;
              if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(g.w)) dst[sx] += in[xo];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

/// "Same" zero-padded 2-D cross-correlation without bias.
/// input (N, Cin, H, W), kernel (Cout, Cin, kh, kw) with odd kh, kw.
template <typename T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& input, const Var<T>& kernel) {
  detail::require_rank(input.shape(), 4, "conv2d");
  detail::require_rank(kernel.shape(), 4, "conv2d kernel");
  const Shape& xs = input.shape();
  const Shape& ks = kernel.shape();
  if (ks[1] != xs[1]) {
    throw ShapeError("conv2d: input has " + std::to_string(xs[1]) + " channels but kernel expects " +
                     std::to_string(ks[1]));
  }
  if (ks[2] % 2 == 0 || ks[3] % 2 == 0) {
    throw ShapeError("conv2d: kernel size must be odd, got " + to_string(ks));
  }
  const detail::ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ks[0], ks[2], ks[3]};
  const std::size_t chunk = detail::conv_chunk(g);

  Tensor<T> out({g.n, g.cout, g.h, g.w});
  {
    std::vector<T> cols(g.k() * chunk * g.hw());
    detail::RowMatrix<T> y;
    const detail::ConstRowMap<T> wmat(kernel.value().data(), g.cout, g.k());
    for (std::size_t first = 0; first < g.n; first += chunk) {
      const std::size_t count = std::min(chunk, g.n - first);
      const std::size_t width = count * g.hw();
      detail::im2col(input.value().data(), g, first, count, cols.data());
      y.noalias() = wmat * detail::ConstRowMap<T>(cols.data(), g.k(), width);
      for (std::size_t s = 0; s < count; ++s) {
        for (std::size_t co = 0; co < g.cout; ++co) {
          const T* src = y.data() + co * width + s * g.hw();
          std::copy(src, src + g.hw(), out.data() + ((first + s) * g.cout + co) * g.hw());
        }
      }
    }
  }
  require_finite(out, "conv2d");

  Var<T> result(std::move(out), detail::any_requires_grad({&input, &kernel}));
  if (tape.should_record({&input, &kernel})) {
    tape.record("conv2d", [input, kernel, result, g, chunk]() mutable {
      if (!result.has_grad()) return;
      const Tensor<T>& dy = result.grad();
      std::vector<T> cols(g.k() * chunk * g.hw());
      std::vector<T> dy_block(g.cout * chunk * g.hw());
      detail::RowMatrix<T> dcols;
      const detail::ConstRowMap<T> wmat(kernel.value().data(), g.cout, g.k());
      for (std::size_t first = 0; first < g.n; first += chunk) {
        const std::size_t count = std::min(chunk, g.n - first);
        const std::size_t width = count * g.hw();
        for (std::size_t s = 0; s < count; ++s) {
          for (std::size_t co = 0; co < g.cout; ++co) {
            const T* src = dy.data() + ((first + s) * g.cout + co) * g.hw();
            std::copy(src, src + g.hw(), dy_block.data() + co * width + s * g.hw());
          }
        }
        const detail::ConstRowMap<T> dy_mat(dy_block.data(), g.cout, width);
        if (kernel.requires_grad()) {
          detail::im2col(input.value().data(), g, first, count, cols.data());
          detail::RowMap<T> dw(kernel.grad().data(), g.cout, g.k());
          dw.noalias() += dy_mat * detail::ConstRowMap<T>(cols.data(), g.k(), width).transpose();
        }
        if (input.requires_grad()) {
          dcols.noalias() = wmat.transpose() * dy_mat;
          detail::col2im_add(dcols.data(), g, first, count, input.grad().data());
        }
      }
    });
  }
  return result;
}

enum class BnMode { train, eval };

/// Per-channel batch normalization parameters and running statistics.
template <typename T>
struct BatchNormState {
  Var<T> gamma;
  Var<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double eps = 1e-5;
  double momentum = 0.1;
  BnMode mode = BnMode::train;

  static BatchNormState create(std::size_t channels) {
    BatchNormState s;
    s.gamma = parameter(Tensor<T>({channels}, T{1}));
    s.beta = parameter(Tensor<T>({channels}, T{0}));
    s.running_mean = Tensor<T>({channels}, T{0});
    s.running_var = Tensor<T>({channels}, T{1});
    return s;
  }

  std::size_t channels() const { return gamma.value().size(); }
};

/// Train mode normalizes with batch statistics over (N, H, W) and updates the
/// running estimates (unbiased variance, exponential moving average with
/// `momentum`). Eval mode uses the running estimates.
template <typename T>
Var<T> batchnorm2d(Tape<T>& tape, const Var<T>& input, BatchNormState<T>& state) {
  detail::require_rank(input.shape(), 4, "batchnorm2d");
  const Shape& xs = input.shape();
  const std::size_t n = xs[0], c = xs[1], hw = xs[2] * xs[3];
  if (state.channels() != c) {
    throw ShapeError("batchnorm2d: state has " + std::to_string(state.channels()) +
                     " channels, input has " + std::to_string(c));
  }
  const std::size_t count = n * hw;
  const bool train = state.mode == BnMode::train;
  if (train && count < 2) {
    throw ShapeError("batchnorm2d: training needs at least 2 values per channel, got " +
                     std::to_string(count));
  }

  std::vector<T> mean(c), inv_std(c);
  const T* x = input.value().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double m, v;
    if (train) {
      double sum = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const T* p = x + (s * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) sum += p[i];
      }
      m = sum / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const T* p = x + (s * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = p[i] - m;
          sq += d * d;
        }
      }
      v = sq / static_cast<double>(count);
      const double unbiased = sq / static_cast<double>(count - 1);
      state.running_mean[ch] =
          static_cast<T>((1.0 - state.momentum) * state.running_mean[ch] + state.momentum * m);
      state.running_var[ch] =
          static_cast<T>((1.0 - state.momentum) * state.running_var[ch] + state.momentum * unbiased);
    } else {
      m = state.running_mean[ch];
      v = state.running_var[ch];
    }
    mean[ch] = static_cast<T>(m);
    inv_std[ch] = static_cast<T>(1.0 / std::sqrt(v + state.eps));
  }

  const T* gamma = state.gamma.value().data();
  const T* beta = state.beta.value().data();
  Tensor<T> out(xs);
  Tensor<T> xhat(xs);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (s * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T h = (x[base + i] - mean[ch]) * inv_std[ch];
        xhat[base + i] = h;
        out[base + i] = gamma[ch] * h + beta[ch];
      }
    }
  }
  require_finite(out, "batchnorm2d");

  Var<T> gamma_var = state.gamma;
  Var<T> beta_var = state.beta;
  Var<T> result(std::move(out), detail::any_requires_grad({&input, &gamma_var, &beta_var}));
  if (tape.should_record({&input, &gamma_var, &beta_var})) {
    tape.record("batchnorm2d", [input, gamma_var, beta_var, result, xhat = std::move(xhat), inv_std,
                                n, c, hw, train]() mutable {
      if (!result.has_grad()) return;
      const T* dy = result.grad().data();
      const T* g = gamma_var.value().data();
      for (std::size_t ch = 0; ch < c; ++ch) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
          const std::size_t base = (s * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            sum_dy += dy[base + i];
            sum_dy_xhat += static_cast<double>(dy[base + i]) * xhat[base + i];
          }
        }
        if (gamma_var.requires_grad()) gamma_var.grad()[ch] += static_cast<T>(sum_dy_xhat);
        if (beta_var.requires_grad()) beta_var.grad()[ch] += static_cast<T>(sum_dy);
        if (!input.requires_grad()) continue;
        T* dx = input.grad().data();
        const double scale = static_cast<double>(g[ch]) * inv_std[ch];
        const double cnt = static_cast<double>(n * hw);
        const double mean_dy = sum_dy / cnt;
        const double mean_dy_xhat = sum_dy_xhat / cnt;
        for (std::size_t s = 0; s < n; ++s) {
          const std::size_t base = (s * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            const double d = train ? dy[base + i] - mean_dy - xhat[base + i] * mean_dy_xhat
                                   : static_cast<double>(dy[base + i]);
            dx[base + i] += static_cast<T>(scale * d);
          }
        }
      }
    });
  }
  return result;
}

template <typename T>
Var<T> relu(Tape<T>& tape, const Var<T>& input) {
  Tensor<T> out = input.value();
  for (T& v : out.values()) {
    if (v < T{0}) v = T{0};  // NaN passes through to the finiteness check
  }
  require_finite(out, "relu");
  Var<T> result(std::move(out), input.requires_grad());
  if (tape.should_record({&input})) {
    tape.record("relu", [input, result]() mutable {
      if (!result.has_grad()) return;
      const Tensor<T>& x = input.value();
      const Tensor<T>& dy = result.grad();
      Tensor<T>& dx = input.grad();
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > T{0}) dx[i] += dy[i];
      }
    });
  }
  return result;
}

/// Non-overlapping max pooling. Gradient goes to the first maximum in
/// row-major window order.
template <typename T>
Var<T> maxpool2d(Tape<T>& tape, const Var<T>& input, std::size_t pool_h, std::size_t pool_w) {
  detail::require_rank(input.shape(), 4, "maxpool2d");
  const Shape& xs = input.shape();
  if (pool_h == 0 || pool_w == 0 || xs[2] % pool_h != 0 || xs[3] % pool_w != 0) {
    throw ShapeError("maxpool2d: input " + to_string(xs) + " is not divisible by pool (" +
                     std::to_string(pool_h) + ", " + std::to_string(pool_w) + ")");
  }
  const std::size_t planes = xs[0] * xs[1];
  const std::size_t h = xs[2], w = xs[3];
  const std::size_t oh = h / pool_h, ow = w / pool_w;
  Tensor<T> out({xs[0], xs[1], oh, ow});
  std::vector<std::size_t> argmax(out.size());
  const T* x = input.value().data();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* plane = x + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (oy * pool_h) * w + ox * pool_w;
        for (std::size_t dy = 0; dy < pool_h; ++dy) {
          for (std::size_t dx = 0; dx < pool_w; ++dx) {
            const std::size_t idx = (oy * pool_h + dy) * w + ox * pool_w + dx;
            if (plane[idx] > plane[best]) best = idx;
          }
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = plane[best];
        argmax[o] = p * h * w + best;
      }
    }
  }
  require_finite(out, "maxpool2d");
  Var<T> result(std::move(out), input.requires_grad());
  if (tape.should_record({&input})) {
    tape.record("maxpool2d", [input, result, argmax = std::move(argmax)]() mutable {
      if (!result.has_grad()) return;
      const Tensor<T>& dy = result.grad();
      Tensor<T>& dx = input.grad();
      for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += dy[o];
    });
  }
  return result;
}

/// (N, C, H, W) -> (N, C): maximum over all spatial positions.
template <typename T>
Var<T> global_max_pool(Tape<T>& tape, const Var<T>& input) {
  detail::require_rank(input.shape(), 4, "global_max_pool");
  const Shape& xs = input.shape();
  const std::size_t planes = xs[0] * xs[1], hw = xs[2] * xs[3];
  Tensor<T> out({xs[0], xs[1]});
  std::vector<std::size_t> argmax(planes);
  const T* x = input.value().data();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* plane = x + p * hw;
    std::size_t best = 0;
    for (std::size_t i = 1; i < hw; ++i) {
      if (plane[i] > plane[best]) best = i;
    }
    out[p] = plane[best];
    argmax[p] = p * hw + best;
  }
  require_finite(out, "global_max_pool");
  Var<T> result(std::move(out), input.requires_grad());
  if (tape.should_record({&input})) {
    tape.record("global_max_pool", [input, result, argmax = std::move(argmax)]() mutable {
      if (!result.has_grad()) return;
      const Tensor<T>& dy = result.grad();
      Tensor<T>& dx = input.grad();
      for (std::size_t p = 0; p < argmax.size(); ++p) dx[argmax[p]] += dy[p];
    });
  }
  return result;
}

/// (N, C, T) -> (N, C): arithmetic mean along the last axis.
template <typename T>
Var<T> mean_over_time(Tape<T>& tape, const Var<T>& input) {
  detail::require_rank(input.shape(), 3, "mean_over_time");
  const Shape& xs = input.shape();
  const std::size_t rows = xs[0] * xs[1], len = xs[2];
  Tensor<T> out({xs[0], xs[1]});
  const T* x = input.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (std::size_t t = 0; t < len; ++t) sum += x[r * len + t];
    out[r] = static_cast<T>(sum / static_cast<double>(len));
  }
  require_finite(out, "mean_over_time");
  Var<T> result(std::move(out), input.requires_grad());
  if (tape.should_record({&input})) {
    tape.record("mean_over_time", [input, result, rows, len]() mutable {
      if (!result.has_grad()) return;
      const Tensor<T>& dy = result.grad();
      Tensor<T>& dx = input.grad();
      const T scale = T{1} / static_cast<T>(len);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t t = 0; t < len; ++t) dx[r * len + t] += dy[r] * scale;
      }
    });
  }
  return result;
}

/// x * W^T + b with x (N, D), W (K, D), b (K).
template <typename T>
Var<T> linear(Tape<T>& tape, const Var<T>& input, const Var<T>& weight, const Var<T>& bias) {
  detail::require_rank(input.shape(), 2, "linear");
  detail::require_rank(weight.shape(), 2, "linear weight");
  detail::require_rank(bias.shape(), 1, "linear bias");
  const std::size_t n = input.shape()[0], d = input.shape()[1], k = weight.shape()[0];
  if (weight.shape()[1] != d || bias.shape()[0] != k) {
    throw ShapeError("linear: input " + to_string(input.shape()) + ", weight " + to_string(weight.shape()) +
                     ", bias " + to_string(bias.shape()) + " do not agree");
  }
  Tensor<T> out({n, k});
  {
    detail::RowMap<T> y(out.data(), n, k);
    const detail::ConstRowMap<T> x(input.value().data(), n, d);
    const detail::ConstRowMap<T> wm(weight.value().data(), k, d);
    y.noalias() = x * wm.transpose();
    const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.value().data(), k);
    y.rowwise() += b;
  }
  require_finite(out, "linear");
  Var<T> result(std::move(out), detail::any_requires_grad({&input, &weight, &bias}));
  if (tape.should_record({&input, &weight, &bias})) {
    tape.record("linear", [input, weight, bias, result, n, d, k]() mutable {
      if (!result.has_grad()) return;
      const detail::ConstRowMap<T> dy(result.grad().data(), n, k);
      if (input.requires_grad()) {
        detail::RowMap<T> dx(input.grad().data(), n, d);
        dx.noalias() += dy * detail::ConstRowMap<T>(weight.value().data(), k, d);
      }
      if (weight.requires_grad()) {
        detail::RowMap<T> dw(weight.grad().data(), k, d);
        dw.noalias() += dy.transpose() * detail::ConstRowMap<T>(input.value().data(), n, d);
      }
      if (bias.requires_grad()) {
        Tensor<T>& db = bias.grad();
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t j = 0; j < k; ++j) db[j] += dy(r, j);
        }
      }
    });
  }
  return result;
}

/// Row-wise softmax of (N, K) logits, max-subtracted.
template <typename T>
Var<T> softmax(Tape<T>& tape, const Var<T>& input) {
  detail::require_rank(input.shape(), 2, "softmax");
  const std::size_t n = input.shape()[0], k = input.shape()[1];
  Tensor<T> out(input.shape());
  const T* x = input.value().data();
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = x + r * k;
    const T mx = *std::max_element(row, row + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double e = std::exp(static_cast<double>(row[j] - mx));
      out[r * k + j] = static_cast<T>(e);
      sum += e;
    }
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] = static_cast<T>(out[r * k + j] / sum);
  }
  require_finite(out, "softmax");
  Var<T> result(std::move(out), input.requires_grad());
  if (tape.should_record({&input})) {
    tape.record("softmax", [input, result, n, k]() mutable {
      if (!result.has_grad()) return;
      const Tensor<T>& p = result.value();
      const Tensor<T>& dy = result.grad();
      Tensor<T>& dx = input.grad();
      for (std::size_t r = 0; r < n; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < k; ++j) dot += static_cast<double>(dy[r * k + j]) * p[r * k + j];
        for (std::size_t j = 0; j < k; ++j) {
          dx[r * k + j] += static_cast<T>(p[r * k + j] * (dy[r * k + j] - dot));
        }
      }
    });
  }
  return result;
}

template <typename T>
Var<T> sigmoid(Tape<T>& tape, const Var<T>& input) {
  Tensor<T> out = input.value();
  for (T& v : out.values()) {
    const double x = v;
    v = static_cast<T>(x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)));
  }
  require_finite(out, "sigmoid");
  Var<T> result(std::move(out), input.requires_grad());
  if (tape.should_record({&input})) {
    tape.record("sigmoid", [input, result]() mutable {
      if (!result.has_grad()) return;
      const Tensor<T>& p = result.value();
      const Tensor<T>& dy = result.grad();
      Tensor<T>& dx = input.grad();
      for (std::size_t i = 0; i < p.size(); ++i) dx[i] += dy[i] * p[i] * (T{1} - p[i]);
    });
  }
  return result;
}

enum class LossKind { categorical_ce, binary_ce };

inline constexpr double kProbabilityClamp = 1e-7;

/// Cross-entropy on probabilities (N, K) against a target of the same shape,
/// averaged over the batch. Probabilities are clamped to [1e-7, 1 - 1e-7];
/// the gradient is zero where the clamp is active.
template <typename T>
Var<T> loss(Tape<T>& tape, const Var<T>& pred, const Tensor<T>& target, LossKind kind) {
  detail::require_rank(pred.shape(), 2, "loss");
  if (target.shape() != pred.shape()) {
    throw ShapeError("loss: target " + to_string(target.shape()) + " does not match prediction " +
                     to_string(pred.shape()));
  }
  const std::size_t n = pred.shape()[0];
  const T* p = pred.value().data();
  const double lo = kProbabilityClamp, hi = 1.0 - kProbabilityClamp;
  double total = 0.0;
  for (std::size_t i = 0; i < pred.value().size(); ++i) {
    const double q = std::clamp(static_cast<double>(p[i]), lo, hi);
    const double t = target[i];
    if (kind == LossKind::categorical_ce) {
      if (t != 0.0) total -= t * std::log(q);
    } else {
      total -= t * std::log(q) + (1.0 - t) * std::log(1.0 - q);
    }
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(n)));
  require_finite(out, "loss");
  Var<T> result(std::move(out), pred.requires_grad());
  if (tape.should_record({&pred})) {
    tape.record("loss", [pred, result, target, kind, n, lo, hi]() mutable {
      if (!result.has_grad()) return;
      const double scale = static_cast<double>(result.grad()[0]) / static_cast<double>(n);
      const Tensor<T>& pv = pred.value();
      Tensor<T>& dp = pred.grad();
      for (std::size_t i = 0; i < pv.size(); ++i) {
        const double q = pv[i];
        if (q < lo || q > hi) continue;
        const double t = target[i];
        const double g = kind == LossKind::categorical_ce ? -t / q : -t / q + (1.0 - t) / (1.0 - q);
        dp[i] += static_cast<T>(scale * g);
      }
    });
  }
  return result;
}

/// Sum of all elements as a scalar.
template <typename T>
Var<T> sum(Tape<T>& tape, const Var<T>& input) {
  double total = 0.0;
  for (T v : input.value().values()) total += v;
  Var<T> result(Tensor<T>::scalar(static_cast<T>(total)), input.requires_grad());
  require_finite(result.value(), "sum");
  if (tape.should_record({&input})) {
    tape.record("sum", [input, result]() mutable {
      if (!result.has_grad()) return;
      const T g = result.grad()[0];
      for (T& v : input.grad().values()) v += g;
    });
  }
  return result;
}

/// Elementwise a + b for equal shapes.
template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " differ");
  }
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  Var<T> result(std::move(out), a.requires_grad() || b.requires_grad());
  require_finite(result.value(), "add");
  if (tape.should_record({&a, &b})) {
    tape.record("add", [a, b, result]() mutable {
      if (!result.has_grad()) return;
      const Tensor<T>& dy = result.grad();
      if (a.requires_grad()) {
        Tensor<T>& da = a.grad();
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
      }
      if (b.requires_grad()) {
        Tensor<T>& db = b.grad();
        for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
      }
    });
  }
  return result;
}

/// Scalar <input, weights> with constant weights of the same shape.
template <typename T>
Var<T> dot(Tape<T>& tape, const Var<T>& input, const Tensor<T>& weights) {
  if (weights.shape() != input.shape()) {
    throw ShapeError("dot: weights " + to_string(weights.shape()) + " do not match input " +
                     to_string(input.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) total += static_cast<double>(input.value()[i]) * weights[i];
  Var<T> result(Tensor<T>::scalar(static_cast<T>(total)), input.requires_grad());
  require_finite(result.value(), "dot");
  if (tape.should_record({&input})) {
    tape.record("dot", [input, result, weights]() mutable {
      if (!result.has_grad()) return;
      const T g = result.grad()[0];
      Tensor<T>& dx = input.grad();
      for (std::size_t i = 0; i < weights.size(); ++i) dx[i] += g * weights[i];
    });
  }
  return result;
}

template <typename T>
Var<T> reshape(Tape<T>& tape, const Var<T>& input, Shape shape) {
  if (numel(shape) != input.value().size()) {
    throw ShapeError("reshape: cannot view " + to_string(input.shape()) + " as " + to_string(shape));
  }
  Var<T> result(input.value().reshaped(std::move(shape)), input.requires_grad());
  if (tape.should_record({&input})) {
    tape.record("reshape", [input, result]() mutable {
      if (!result.has_grad()) return;
      const Tensor<T>& dy = result.grad();
      Tensor<T>& dx = input.grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    });
  }
  return result;
}

/// (N, C, T) -> (N, T, C).
template <typename T>
Var<T> channels_last(Tape<T>& tape, const Var<T>& input) {
  detail::require_rank(input.shape(), 3, "channels_last");
  const std::size_t n = input.shape()[0], c = input.shape()[1], len = input.shape()[2];
  Tensor<T> out({n, len, c});
  const T* x = input.value().data();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t t = 0; t < len; ++t) out[(s * len + t) * c + ch] = x[(s * c + ch) * len + t];
    }
  }
  Var<T> result(std::move(out), input.requires_grad());
  if (tape.should_record({&input})) {
    tape.record("channels_last", [input, result, n, c, len]() mutable {
      if (!result.has_grad()) return;
      const Tensor<T>& dy = result.grad();
      Tensor<T>& dx = input.grad();
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t t = 0; t < len; ++t) dx[(s * c + ch) * len + t] += dy[(s * len + t) * c + ch];
        }
      }
    });
  }
  return result;
}

}  // namespace crosstask
