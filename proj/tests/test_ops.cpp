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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "crosstask/core/adam.hpp"
#include "crosstask/core/ops.hpp"
#include "test_util.hpp"

namespace crosstask {
namespace {

using testing::gradient_errors;
using testing::max_of;
using testing::random_tensor;

// Direct summation over each zero-padded window.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& k) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  Tensor<double> out({n, cout, h, w});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xo = 0; xo < w; ++xo) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) {
                const long sy = static_cast<long>(y + i) - static_cast<long>(kh / 2);
                const long sx = static_cast<long>(xo + j) - static_cast<long>(kw / 2);
                if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
                acc += x.at(s, ci, sy, sx) * k.at(co, ci, i, j);
              }
          out.at(s, co, y, xo) = acc;
        }
  return out;
}

TEST(Conv2d, IdentityKernel) {
  Tape<double> tape;
  Rng rng(1);
  auto x = constant(random_tensor({1, 1, 3, 3}, rng));
  auto k = constant(Tensor<double>({1, 1, 1, 1}, 1.0));
  EXPECT_EQ(conv2d(tape, x, k).value(), x.value());
}

TEST(Conv2d, AllOnesKernelOnTwoByTwo) {
  // Every 3x3 window around a 2x2 input covers all four values: 1+2+3+4.
  Tape<double> tape;
  auto x = constant(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
  auto k = constant(Tensor<double>({1, 1, 3, 3}, 1.0));
  const auto y = conv2d(tape, x, k).value();
  EXPECT_EQ(y, conv_oracle(x.value(), k.value()));
  EXPECT_EQ(y, Tensor<double>({1, 1, 2, 2}, {10, 10, 10, 10}));
}

TEST(Conv2d, MatchesDirectSummation) {
  Rng rng(2);
  Tape<double> tape(false);
  auto x = constant(random_tensor({2, 3, 5, 6}, rng));
  auto k = constant(random_tensor({4, 3, 3, 5}, rng));
  const auto y = conv2d(tape, x, k).value();
  const auto ref = conv_oracle(x.value(), k.value());
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(Conv2d, PreservesSpatialShape) {
  Tape<float> tape(false);
  auto x = constant(Tensor<float>({1, 1, 16, 64}, 0.5f));
  auto k = constant(Tensor<float>({64, 1, 5, 5}, 0.01f));
  EXPECT_EQ(conv2d(tape, x, k).shape(), (Shape{1, 64, 16, 64}));
}

TEST(Conv2d, ChannelMismatchIsShapeError) {
  Tape<double> tape;
  auto x = constant(Tensor<double>({1, 2, 4, 4}));
  auto k = constant(Tensor<double>({3, 1, 3, 3}));
  EXPECT_THROW(conv2d(tape, x, k), ShapeError);
}

TEST(Conv2d, IsLinear) {
  Rng rng(3);
  Tape<double> tape(false);
  auto k = constant(random_tensor({3, 2, 3, 3}, rng));
  const auto a = random_tensor({2, 2, 4, 5}, rng);
  const auto b = random_tensor({2, 2, 4, 5}, rng);
  const double alpha = 1.7, beta = -0.4;
  Tensor<double> mix(a.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = alpha * a[i] + beta * b[i];
  const auto lhs = conv2d(tape, constant(mix), k).value();
  const auto ca = conv2d(tape, constant(a), k).value();
  const auto cb = conv2d(tape, constant(b), k).value();
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    const double rhs = alpha * ca[i] + beta * cb[i];
    EXPECT_LE(std::abs(lhs[i] - rhs), 1e-6 * std::max(1.0, std::abs(rhs)));
  }
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  auto x = parameter(random_tensor({2, 2, 5, 4}, rng));
  auto k = parameter(random_tensor({3, 2, 3, 3}, rng));
  const auto r = random_tensor({2, 3, 5, 4}, rng);
  auto eval = [&] {
    Tape<double> t(false);
    return dot(t, conv2d(t, x, k), r).value().item();
  };
  Tape<double> tape;
  auto l = dot(tape, conv2d(tape, x, k), r);
  tape.backward(l);
  EXPECT_LT(max_of(gradient_errors(x, eval, rng)), 1e-4);
  EXPECT_LT(max_of(gradient_errors(k, eval, rng)), 1e-4);
}

TEST(BatchNorm, TrainModeNormalizes) {
  Rng rng(5);
  Tape<double> tape(false);
  auto bn = BatchNormState<double>::create(3);
  auto x = constant(random_tensor({4, 3, 2, 5}, rng, -3.0, 7.0));
  const auto y = batchnorm2d(tape, x, bn).value();
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0, sq = 0;
    int n = 0;
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t i = 0; i < 10; ++i) {
        const double v = y[(s * 3 + c) * 10 + i];
        sum += v;
        sq += v * v;
        ++n;
      }
    EXPECT_NEAR(sum / n, 0.0, 1e-12);
    EXPECT_NEAR(sq / n, 1.0, 1e-4);
  }
}

TEST(BatchNorm, AffineOnNormalizedInput) {
  Tape<double> tape(false);
  auto bn = BatchNormState<double>::create(1);
  bn.gamma.value().fill(2.0);
  bn.beta.value().fill(3.0);
  // Already zero-mean, unit (biased) variance.
  auto x = constant(Tensor<double>({1, 1, 1, 4}, {-1, 1, -1, 1}));
  const auto y = batchnorm2d(tape, x, bn).value();
  const double mean = std::accumulate(y.values().begin(), y.values().end(), 0.0) / 4.0;
  double var = 0;
  for (double v : y.values()) var += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 3.0, 1e-12);
  EXPECT_NEAR(std::sqrt(var / 4.0), 2.0, 1e-4);
}

TEST(BatchNorm, HandComputedFourValues) {
  // mean 2.5, biased variance ((1.5^2 + 0.5^2) * 2) / 4 = 1.25.
  Tape<double> tape(false);
  auto bn = BatchNormState<double>::create(1);
  auto x = constant(Tensor<double>({4, 1, 1, 1}, {1, 2, 3, 4}));
  const auto y = batchnorm2d(tape, x, bn).value();
  const double denom = std::sqrt(1.25 + 1e-5);
  EXPECT_NEAR(y[0], -1.5 / denom, 1e-12);
  EXPECT_NEAR(y[1], -0.5 / denom, 1e-12);
  EXPECT_NEAR(y[2], 0.5 / denom, 1e-12);
  EXPECT_NEAR(y[3], 1.5 / denom, 1e-12);
  // running stats: 0.9*0 + 0.1*2.5 and 0.9*1 + 0.1*(5/3)
  EXPECT_NEAR(bn.running_mean[0], 0.25, 1e-12);
  EXPECT_NEAR(bn.running_var[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-12);
}

TEST(BatchNorm, EvalUsesInitialRunningStats) {
  Tape<double> tape(false);
  auto bn = BatchNormState<double>::create(1);
  bn.mode = BnMode::eval;
  auto x = constant(Tensor<double>({1, 1, 1, 2}, {0.5, -2.0}));
  const auto y = batchnorm2d(tape, x, bn).value();
  EXPECT_NEAR(y[0], 0.5 / std::sqrt(1.0 + 1e-5), 1e-12);
  EXPECT_NEAR(y[1], -2.0 / std::sqrt(1.0 + 1e-5), 1e-12);
}

TEST(BatchNorm, ZeroVarianceStaysFinite) {
  Tape<double> tape(false);
  auto bn = BatchNormState<double>::create(1);
  auto x = constant(Tensor<double>({2, 1, 2, 2}, 4.0));
  const auto y = batchnorm2d(tape, x, bn).value();
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, SingleValueTrainIsShapeError) {
  Tape<double> tape(false);
  auto bn = BatchNormState<double>::create(1);
  EXPECT_THROW(batchnorm2d(tape, constant(Tensor<double>({1, 1, 1, 1}, 1.0)), bn), ShapeError);
}

TEST(BatchNorm, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  for (BnMode mode : {BnMode::train, BnMode::eval}) {
    auto bn = BatchNormState<double>::create(2);
    bn.mode = mode;
    bn.gamma.value() = random_tensor({2}, rng, 0.5, 1.5);
    bn.beta.value() = random_tensor({2}, rng);
    bn.running_var.fill(0.7);
    auto x = parameter(random_tensor({3, 2, 2, 3}, rng));
    const auto r = random_tensor({3, 2, 2, 3}, rng);
    auto eval = [&] {
      Tape<double> t(false);
      auto copy = bn;
      return dot(t, batchnorm2d(t, x, copy), r).value().item();
    };
    Tape<double> tape;
    auto state = bn;
    auto l = dot(tape, batchnorm2d(tape, x, state), r);
    tape.backward(l);
    EXPECT_LT(max_of(gradient_errors(x, eval, rng)), 1e-4);
    EXPECT_LT(max_of(gradient_errors(bn.gamma, eval, rng)), 1e-4);
    EXPECT_LT(max_of(gradient_errors(bn.beta, eval, rng)), 1e-4);
  }
}

TEST(Relu, Values) {
  Tape<double> tape(false);
  EXPECT_EQ(relu(tape, constant(Tensor<double>({3}, {-1, 0, 2}))).value(), Tensor<double>({3}, {0, 0, 2}));
}

TEST(Relu, AllNegativeHasZeroGradient) {
  Tape<double> tape;
  auto x = parameter(Tensor<double>({4}, {-1, -2, -0.5, -3}));
  auto y = relu(tape, x);
  for (double v : y.value().values()) EXPECT_EQ(v, 0.0);
  auto l = sum(tape, y);
  tape.backward(l);
  for (double g : x.grad().values()) EXPECT_EQ(g, 0.0);
}

TEST(Relu, GradientAwayFromKink) {
  Rng rng(7);
  auto x = parameter(random_tensor({40}, rng));
  for (double& v : x.value().values()) {
    if (std::abs(v) < 1e-3) v = 0.5;
  }
  const auto r = random_tensor({40}, rng);
  auto eval = [&] {
    Tape<double> t(false);
    return dot(t, relu(t, x), r).value().item();
  };
  Tape<double> tape;
  auto l = dot(tape, relu(tape, x), r);
  tape.backward(l);
  EXPECT_LT(max_of(gradient_errors(x, eval, rng)), 1e-4);
}

TEST(MaxPool, TwoByTwo) {
  Tape<double> tape(false);
  auto y = maxpool2d(tape, constant(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4})), 2, 2);
  EXPECT_EQ(y.value(), Tensor<double>({1, 1, 1, 1}, {4}));
}

TEST(MaxPool, TiesRouteGradientToFirstElement) {
  Tape<double> tape;
  auto x = parameter(Tensor<double>({1, 1, 2, 4}, 3.0));
  auto y = maxpool2d(tape, x, 2, 2);
  EXPECT_EQ(y.value(), Tensor<double>({1, 1, 1, 2}, 3.0));
  auto l = sum(tape, y);
  tape.backward(l);
  EXPECT_EQ(x.grad(), Tensor<double>({1, 1, 2, 4}, {1, 0, 1, 0, 0, 0, 0, 0}));
}

TEST(MaxPool, LadderReachesGlobalMax) {
  Rng rng(8);
  Tape<double> tape(false);
  auto x = constant(random_tensor({1, 1, 16, 16}, rng));
  auto y = x;
  for (int i = 0; i < 4; ++i) y = maxpool2d(tape, y, 2, 2);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.value()[0], *std::max_element(x.value().values().begin(), x.value().values().end()));
}

TEST(MaxPool, NonDivisibleIsShapeError) {
  Tape<double> tape(false);
  EXPECT_THROW(maxpool2d(tape, constant(Tensor<double>({1, 1, 3, 4})), 2, 2), ShapeError);
}

TEST(MaxPool, FullExtentEqualsGlobalMaxPool) {
  Rng rng(9);
  Tape<double> tape(false);
  auto x = constant(random_tensor({2, 3, 4, 6}, rng));
  auto a = maxpool2d(tape, x, 4, 6).value().reshaped({2, 3});
  EXPECT_EQ(a, global_max_pool(tape, x).value());
}

TEST(MaxPool, GradientMatchesFiniteDifferences) {
  Rng rng(10);
  auto x = parameter(random_tensor({2, 2, 4, 6}, rng));
  const auto r = random_tensor({2, 2, 2, 2}, rng);
  auto eval = [&] {
    Tape<double> t(false);
    return dot(t, maxpool2d(t, x, 2, 3), r).value().item();
  };
  Tape<double> tape;
  auto l = dot(tape, maxpool2d(tape, x, 2, 3), r);
  tape.backward(l);
  EXPECT_LT(max_of(gradient_errors(x, eval, rng)), 1e-4);
}

TEST(GlobalMaxPool, MatchesExhaustiveScan) {
  Rng rng(11);
  Tape<double> tape(false);
  auto x = constant(random_tensor({2, 3, 4, 5}, rng));
  const auto y = global_max_pool(tape, x).value();
  ASSERT_EQ(y.shape(), (Shape{2, 3}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c) {
      double best = -1e300;
      for (std::size_t h = 0; h < 4; ++h)
        for (std::size_t w = 0; w < 5; ++w) best = std::max(best, x.value().at(n, c, h, w));
      EXPECT_EQ(y.at(n, c), best);
    }
}

TEST(GlobalMaxPool, InvariantToCircularShift) {
  Rng rng(12);
  Tape<double> tape(false);
  const auto x = random_tensor({2, 3, 4, 5}, rng);
  const auto ref = global_max_pool(tape, constant(x)).value();
  for (std::size_t sh = 0; sh < 4; ++sh)
    for (std::size_t sw = 0; sw < 5; ++sw) {
      Tensor<double> shifted(x.shape());
      for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t c = 0; c < 3; ++c)
          for (std::size_t h = 0; h < 4; ++h)
            for (std::size_t w = 0; w < 5; ++w)
              shifted.at(n, c, (h + sh) % 4, (w + sw) % 5) = x.at(n, c, h, w);
      EXPECT_EQ(global_max_pool(tape, constant(shifted)).value(), ref);
    }
}

TEST(GlobalMaxPool, GradientMatchesFiniteDifferences) {
  Rng rng(13);
  auto x = parameter(random_tensor({2, 2, 3, 3}, rng));
  const auto r = random_tensor({2, 2}, rng);
  auto eval = [&] {
    Tape<double> t(false);
    return dot(t, global_max_pool(t, x), r).value().item();
  };
  Tape<double> tape;
  auto l = dot(tape, global_max_pool(tape, x), r);
  tape.backward(l);
  EXPECT_LT(max_of(gradient_errors(x, eval, rng)), 1e-4);
}

TEST(MeanOverTime, Values) {
  Tape<double> tape(false);
  EXPECT_EQ(mean_over_time(tape, constant(Tensor<double>({1, 1, 3}, {1, 2, 3}))).value()[0], 2.0);
  EXPECT_EQ(mean_over_time(tape, constant(Tensor<double>({1, 2, 5}, 0.25))).value(),
            Tensor<double>({1, 2}, 0.25));
}

TEST(MeanOverTime, MatchesSummationLoop) {
  Rng rng(14);
  Tape<double> tape(false);
  auto x = constant(random_tensor({2, 4, 7}, rng));
  const auto y = mean_over_time(tape, x).value();
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 4; ++c) {
      double s = 0;
      for (std::size_t t = 0; t < 7; ++t) s += x.value().at(n, c, t);
      EXPECT_NEAR(y.at(n, c), s / 7.0, 1e-15);
    }
}

TEST(MeanOverTime, GradientMatchesFiniteDifferences) {
  Rng rng(15);
  auto x = parameter(random_tensor({2, 3, 5}, rng));
  const auto r = random_tensor({2, 3}, rng);
  auto eval = [&] {
    Tape<double> t(false);
    return dot(t, mean_over_time(t, x), r).value().item();
  };
  Tape<double> tape;
  auto l = dot(tape, mean_over_time(tape, x), r);
  tape.backward(l);
  EXPECT_LT(max_of(gradient_errors(x, eval, rng)), 1e-4);
}

TEST(Linear, IdentityAndHandArithmetic) {
  Tape<double> tape(false);
  auto x = constant(Tensor<double>({2, 2}, {1, 2, 3, 4}));
  auto eye = constant(Tensor<double>({2, 2}, {1, 0, 0, 1}));
  auto zero = constant(Tensor<double>({2}, 0.0));
  EXPECT_EQ(linear(tape, x, eye, zero).value(), x.value());

  auto y = linear(tape, constant(Tensor<double>({1, 2}, {2, 3})), constant(Tensor<double>({1, 2}, {1, 1})),
                  constant(Tensor<double>({1}, {0.5})));
  EXPECT_EQ(y.value()[0], 5.5);
}

TEST(Linear, ShapeMismatch) {
  Tape<double> tape(false);
  EXPECT_THROW(linear(tape, constant(Tensor<double>({1, 3})), constant(Tensor<double>({2, 2})),
                      constant(Tensor<double>({2}))),
               ShapeError);
}

TEST(Linear, GradientMatchesFiniteDifferences) {
  Rng rng(16);
  auto x = parameter(random_tensor({3, 5}, rng));
  auto w = parameter(random_tensor({4, 5}, rng));
  auto b = parameter(random_tensor({4}, rng));
  const auto target = Tensor<double>({3, 4}, {1, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0, 0});
  auto eval = [&] {
    Tape<double> t(false);
    return loss(t, softmax(t, linear(t, x, w, b)), target, LossKind::categorical_ce).value().item();
  };
  Tape<double> tape;
  auto l = loss(tape, softmax(tape, linear(tape, x, w, b)), target, LossKind::categorical_ce);
  tape.backward(l);
  EXPECT_LT(max_of(gradient_errors(w, eval, rng)), 1e-4);
  EXPECT_LT(max_of(gradient_errors(b, eval, rng)), 1e-4);
  EXPECT_LT(max_of(gradient_errors(x, eval, rng)), 1e-4);
}

TEST(Softmax, UniformAndStable) {
  Tape<double> tape(false);
  auto u = softmax(tape, constant(Tensor<double>({1, 4}, 0.3))).value();
  for (double v : u.values()) EXPECT_NEAR(v, 0.25, 1e-15);
  auto big = softmax(tape, constant(Tensor<double>({1, 2}, {1000, 1000}))).value();
  EXPECT_EQ(big, Tensor<double>({1, 2}, {0.5, 0.5}));
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(17);
  Tape<double> tape(false);
  auto p = softmax(tape, constant(random_tensor({6, 9}, rng, -30, 30))).value();
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 9; ++j) {
      EXPECT_GE(p.at(r, j), 0.0);
      EXPECT_LE(p.at(r, j), 1.0);
      s += p.at(r, j);
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Sigmoid, ValuesAndGradient) {
  Tape<double> tape(false);
  EXPECT_EQ(sigmoid(tape, constant(Tensor<double>::scalar(0.0))).value().item(), 0.5);
  auto ext = sigmoid(tape, constant(Tensor<double>({2}, {-800, 800}))).value();
  EXPECT_GE(ext[0], 0.0);
  EXPECT_LE(ext[1], 1.0);

  Rng rng(18);
  auto x = parameter(random_tensor({2, 3}, rng, -3, 3));
  const auto target = Tensor<double>({2, 3}, {1, 0, 1, 0, 0, 1});
  auto eval = [&] {
    Tape<double> t(false);
    return loss(t, sigmoid(t, x), target, LossKind::binary_ce).value().item();
  };
  Tape<double> tp;
  auto l = loss(tp, sigmoid(tp, x), target, LossKind::binary_ce);
  tp.backward(l);
  EXPECT_LT(max_of(gradient_errors(x, eval, rng)), 1e-4);
}

TEST(Loss, PerfectAndUniform) {
  Tape<double> tape(false);
  const auto onehot = Tensor<double>({2, 3}, {1, 0, 0, 0, 0, 1});
  auto perfect = loss(tape, constant(onehot), onehot, LossKind::categorical_ce).value().item();
  EXPECT_NEAR(perfect, -std::log(1.0 - 1e-7), 1e-12);
  auto uniform = loss(tape, constant(Tensor<double>({2, 3}, 1.0 / 3.0)), onehot, LossKind::categorical_ce);
  EXPECT_NEAR(uniform.value().item(), std::log(3.0), 1e-12);
}

TEST(Loss, MatchesFormula) {
  Rng rng(19);
  Tape<double> tape(false);
  const auto p = random_tensor({4, 3}, rng, 0.01, 0.99);
  Tensor<double> t(p.shape());
  for (double& v : t.values()) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
  double expected = 0;
  for (std::size_t i = 0; i < p.size(); ++i) expected += -(t[i] * std::log(p[i]) + (1 - t[i]) * std::log(1 - p[i]));
  expected /= 4.0;
  EXPECT_NEAR(loss(tape, constant(p), t, LossKind::binary_ce).value().item(), expected, 1e-12);

  Tensor<double> onehot({4, 3}, 0.0);
  double cat = 0;
  for (std::size_t r = 0; r < 4; ++r) {
    const std::size_t k = rng.below(3);
    onehot.at(r, k) = 1.0;
    cat -= std::log(p.at(r, k));
  }
  EXPECT_NEAR(loss(tape, constant(p), onehot, LossKind::categorical_ce).value().item(), cat / 4.0, 1e-12);
}

TEST(Backward, SumGivesOnes) {
  Tape<double> tape;
  auto x = parameter(Tensor<double>({2, 3}, 1.5));
  auto l = sum(tape, x);
  tape.backward(l);
  EXPECT_EQ(x.grad(), Tensor<double>({2, 3}, 1.0));
}

TEST(Backward, UnusedParameterHasZeroGradient) {
  Tape<double> tape;
  auto used = parameter(Tensor<double>({2}, 1.0));
  auto unused = parameter(Tensor<double>({3}, 2.0));
  auto l = sum(tape, used);
  tape.backward(l);
  EXPECT_EQ(unused.grad(), Tensor<double>({3}, 0.0));
}

TEST(Backward, NonScalarIsUsageError) {
  Tape<double> tape;
  auto x = parameter(Tensor<double>({2}, 1.0));
  auto y = relu(tape, x);
  EXPECT_THROW(tape.backward(y), UsageError);
}

TEST(Backward, VisitsRecordsInReverseExactlyOnce) {
  Tape<double> tape;
  std::vector<int> order;
  for (int i = 0; i < 5; ++i) tape.record("op" + std::to_string(i), [&order, i] { order.push_back(i); });
  auto l = parameter(Tensor<double>::scalar(1.0));
  EXPECT_EQ(tape.backward(l), 5u);
  EXPECT_EQ(order, (std::vector<int>{4, 3, 2, 1, 0}));
  EXPECT_TRUE(tape.empty());
}

TEST(Backward, ConstantsAreNotRecorded) {
  Tape<double> tape;
  auto x = constant(Tensor<double>({1, 1, 2, 2}, 1.0));
  relu(tape, x);
  EXPECT_TRUE(tape.empty());
}

TEST(Backward, NonFiniteForwardIsNumericError) {
  Tape<double> tape;
  auto x = constant(Tensor<double>({2}, {1.0, std::nan("")}));
  EXPECT_THROW(relu(tape, x), NumericError);
}

// Hand-rolled scalar Adam.
struct ScalarAdam {
  double m = 0, v = 0;
  int t = 0;
  double step(double w, double g, double lr) {
    ++t;
    m = 0.9 * m + (1 - 0.9) * g;
    v = 0.999 * v + (1 - 0.999) * g * g;
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    return w - lr * mh / (std::sqrt(vh) + 1e-8);
  }
};

TEST(Adam, MatchesScalarReference) {
  std::vector<Var<double>> params{parameter(Tensor<double>::scalar(0.3))};
  auto state = AdamState<double>::create(params);
  ScalarAdam ref;
  double w = 0.3;
  for (int i = 0; i < 50; ++i) {
    const double g = i < 25 ? 0.7 : -0.2 + 0.01 * i;
    params[0].grad()[0] = g;
    adam_step<double>(params, state, 1e-3);
    w = ref.step(w, g, 1e-3);
    EXPECT_DOUBLE_EQ(params[0].value()[0], w);
    EXPECT_EQ(state.step, i + 1);
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<Var<double>> params{parameter(Tensor<double>::scalar(1.0))};
  auto state = AdamState<double>::create(params);
  params[0].grad()[0] = 5.0;
  adam_step<double>(params, state, 1e-3);
  EXPECT_NEAR(params[0].value()[0], 1.0 - 1e-3, 1e-10);
}

TEST(Adam, ZeroGradientKeepsParametersAndDecaysMoments) {
  std::vector<Var<double>> params{parameter(Tensor<double>({2}, {1.0, -1.0}))};
  auto state = AdamState<double>::create(params);
  params[0].grad().fill(0.0);
  const auto kept = params[0].value();
  adam_step<double>(params, state, 1e-3);
  EXPECT_EQ(params[0].value(), kept);

  state.first_moment[0].fill(0.5);
  state.second_moment[0].fill(0.25);
  adam_step<double>(params, state, 1e-3);
  EXPECT_NEAR(state.first_moment[0][0], 0.45, 1e-15);
  EXPECT_NEAR(state.second_moment[0][0], 0.24975, 1e-15);
}

}  // namespace
}  // namespace crosstask
