// Copyright 2026 The cefpn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>

#include "cefpn/ops.hpp"
#include "cefpn/random.hpp"
#include "oracles.hpp"

namespace cefpn {
namespace {

constexpr std::uint64_t kSeed = 20260101;

// ---------------------------------------------------------------------------
// conv2d

TEST(Conv2dTest, IdentityKernelReproducesInput) {
  Rng rng(kSeed);
  const auto x = random_tensor<double>({2, 3, 4, 5}, rng);
  auto spec = ConvSpec<double>::make(3, 3, 1);
  for (std::size_t j = 0; j < 3; ++j) spec.weights(j, j, 0, 0) = 1.0;
  EXPECT_EQ(ops::conv2d(x, spec), x);
}

TEST(Conv2dTest, ZeroInputYieldsBias) {
  auto spec = ConvSpec<double>::make(2, 3, 3);
  Rng rng(kSeed);
  spec.init_uniform(rng);
  const auto y = ops::conv2d(Tensor<double>({1, 2, 4, 4}), spec);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t p = 0; p < 16; ++p) EXPECT_EQ(y.plane(0, j)[p], spec.bias[j]);
}

TEST(Conv2dTest, MatchesNestedLoopOracle) {
  Rng rng(kSeed + 1);
  const auto x = random_tensor<double>({1, 3, 5, 5}, rng);
  auto spec = ConvSpec<double>::make(3, 4, 3);
  spec.init_uniform(rng);
  const auto y = ops::conv2d(x, spec);
  EXPECT_LE(oracle::max_abs_diff(y, oracle::conv2d(x, spec.weights, spec.bias, 1, 1)), 1e-12);
}

TEST(Conv2dTest, RandomizedPropertyAgainstOracle) {
  Rng rng(kSeed + 2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::size_t>(rng.range(1, 2));
    const auto ci = static_cast<std::size_t>(rng.range(1, 4));
    const auto co = static_cast<std::size_t>(rng.range(1, 4));
    const int k = rng.range(0, 1) ? 3 : 1;
    const int stride = static_cast<int>(rng.range(1, 2));
    const int pad = static_cast<int>(rng.range(0, (k - 1) / 2));
    const auto h = static_cast<std::size_t>(rng.range(k, 8));
    const auto w = static_cast<std::size_t>(rng.range(k, 8));
    const auto x = random_tensor<double>({n, ci, h, w}, rng);
    const auto weight = random_tensor<double>({co, ci, static_cast<std::size_t>(k), static_cast<std::size_t>(k)}, rng);
    std::vector<double> bias(co);
    for (auto& b : bias) b = rng.uniform(-1, 1);
    const auto y = ops::conv2d(x, weight, std::span<const double>(bias), stride, pad);
    ASSERT_LE(oracle::max_abs_diff(y, oracle::conv2d(x, weight, bias, stride, pad)), 1e-12) << "trial " << trial;
  }
}

TEST(Conv2dTest, ChannelMismatchNamesBothCounts) {
  const auto spec = ConvSpec<double>::make(4, 2, 1);
  try {
    ops::conv2d(Tensor<double>({1, 3, 2, 2}), spec);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('3'), std::string::npos);
    EXPECT_NE(msg.find('4'), std::string::npos);
  }
}

TEST(Conv2dTest, OutputShapeFollowsWindowFormula) {
  const auto w = Tensor<double>({2, 1, 3, 3});
  const auto y = ops::conv2d(Tensor<double>({1, 1, 7, 6}), w, {}, 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 4, 3}));
  EXPECT_THROW(ops::conv2d(Tensor<double>({1, 1, 1, 1}), w, {}, 1, 0), ShapeError);
}

TEST(ConvSpecTest, ParamCountAndSamePadding) {
  const auto a = ConvSpec<double>::make(8, 4, 3);
  EXPECT_EQ(a.padding, 1);
  EXPECT_EQ(a.param_count(), 8u * 4 * 9 + 4);
  const auto b = ConvSpec<double>::make(8, 4, 1, false);
  EXPECT_EQ(b.padding, 0);
  EXPECT_EQ(b.param_count(), 32u);
  EXPECT_EQ(b.param_count(), b.weights.numel() + b.bias.size());
}

// ---------------------------------------------------------------------------
// Pooling

TEST(MaxPoolTest, ConstantField) {
  const auto y = ops::max_pool2d(Tensor<double>({1, 2, 6, 6}, 3.5), 3, 2, 1);
  for (double v : y.data()) EXPECT_EQ(v, 3.5);
}

TEST(MaxPoolTest, SingleWindow) {
  const Tensor<double> x({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto y = ops::max_pool2d(x, 2, 2, 0);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y[0], 4.0);
}

TEST(MaxPoolTest, MatchesOracleOnRandomInput) {
  Rng rng(kSeed + 3);
  const auto x = random_tensor<double>({1, 2, 6, 6}, rng);
  EXPECT_EQ(ops::max_pool2d(x, 3, 2, 1), oracle::max_pool2d(x, 3, 2, 1));
}

TEST(MaxPoolTest, RandomizedPropertyAgainstOracle) {
  Rng rng(kSeed + 4);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = static_cast<int>(rng.range(1, 4));
    const int s = static_cast<int>(rng.range(1, 3));
    const int p = static_cast<int>(rng.range(0, k / 2));
    const auto x = random_tensor<double>({static_cast<std::size_t>(rng.range(1, 2)),
                                          static_cast<std::size_t>(rng.range(1, 3)),
                                          static_cast<std::size_t>(rng.range(k, 9)),
                                          static_cast<std::size_t>(rng.range(k, 9))},
                                         rng);
    ASSERT_EQ(ops::max_pool2d(x, k, s, p), oracle::max_pool2d(x, k, s, p)) << "trial " << trial;
  }
}

TEST(MaxPoolTest, PaddingNeverSelected) {
  const auto y = ops::max_pool2d(Tensor<double>({1, 1, 3, 3}, -5.0), 3, 1, 1);
  for (double v : y.data()) EXPECT_EQ(v, -5.0);
}

TEST(MaxPoolTest, ErrorsOnBadGeometry) {
  EXPECT_THROW(ops::max_pool2d(Tensor<double>({1, 1, 2, 2}), 5, 1, 1), ShapeError);
  EXPECT_THROW(ops::max_pool2d(Tensor<double>({1, 1, 2, 2}), 0, 1, 0), ConfigError);
  EXPECT_THROW(ops::max_pool2d(Tensor<double>({1, 1, 2, 2}), 2, 0, 0), ConfigError);
}

TEST(MaxPoolTest, BackwardRoutesTiesToFirstInScanOrder) {
  const Tensor<double> x({1, 1, 2, 2}, {7, 7, 7, 7});
  const auto dx = ops::max_pool2d_backward(x, 2, 2, 0, Tensor<double>({1, 1, 1, 1}, 1.0));
  EXPECT_EQ(dx.values(), (std::vector<double>{1, 0, 0, 0}));
}

TEST(GlobalPoolTest, AverageExamples) {
  EXPECT_EQ(ops::global_avg_pool(Tensor<double>({1, 3, 4, 4}, 2.25))[1], 2.25);
  EXPECT_EQ(ops::global_avg_pool(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}))[0], 2.5);
}

TEST(GlobalPoolTest, AverageMatchesSummationOracle) {
  Rng rng(kSeed + 5);
  const auto x = random_tensor<double>({2, 5, 7, 3}, rng);
  EXPECT_LE(oracle::max_rel_diff(ops::global_avg_pool(x), oracle::global_avg_pool(x)), 1e-14);
}

TEST(GlobalPoolTest, MaxExamples) {
  EXPECT_EQ(ops::global_max_pool(Tensor<double>({1, 3, 4, 4}, -1.5))[2], -1.5);
  EXPECT_EQ(ops::global_max_pool(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}))[0], 4.0);
  Rng rng(kSeed + 6);
  const auto x = random_tensor<double>({2, 5, 7, 3}, rng);
  EXPECT_EQ(ops::global_max_pool(x), oracle::global_max_pool(x));
}

TEST(GlobalPoolTest, EmptySpatialExtentIsShapeError) {
  EXPECT_THROW(ops::global_avg_pool(Tensor<double>({1, 2, 0, 3})), ShapeError);
  EXPECT_THROW(ops::global_max_pool(Tensor<double>({1, 2, 3, 0})), ShapeError);
}

// ---------------------------------------------------------------------------
// Resampling

TEST(InterpolateTest, Examples) {
  Rng rng(kSeed + 7);
  const auto x = random_tensor<double>({1, 2, 3, 3}, rng);
  EXPECT_EQ(ops::interpolate_nearest(x, 1), x);
  const auto y = ops::interpolate_nearest(Tensor<double>({1, 1, 1, 1}, 5.0), 2);
  EXPECT_EQ(y, Tensor<double>({1, 1, 2, 2}, 5.0));
  EXPECT_EQ(ops::interpolate_nearest(x, 2), oracle::interpolate_nearest(x, 2));
  EXPECT_THROW(ops::interpolate_nearest(x, 0), ConfigError);
}

TEST(InterpolateTest, RandomizedPropertyAgainstOracle) {
  Rng rng(kSeed + 8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = static_cast<int>(rng.range(1, 4));
    const auto x = random_tensor<double>({static_cast<std::size_t>(rng.range(1, 2)),
                                          static_cast<std::size_t>(rng.range(1, 3)),
                                          static_cast<std::size_t>(rng.range(1, 6)),
                                          static_cast<std::size_t>(rng.range(1, 6))},
                                         rng);
    ASSERT_EQ(ops::interpolate_nearest(x, s), oracle::interpolate_nearest(x, static_cast<std::size_t>(s)));
  }
}

// ---------------------------------------------------------------------------
// Dense and elementwise

TEST(LinearTest, Examples) {
  auto spec = LinearSpec<double>::make(4, 4);
  for (std::size_t i = 0; i < 4; ++i) spec.weight(i, i) = 1.0;
  const std::vector<double> x{0.5, -1.0, 2.0, 3.0};
  EXPECT_EQ(ops::linear(std::span<const double>(x), spec), x);

  Rng rng(kSeed + 9);
  auto r = LinearSpec<double>::make(3, 5);
  r.init_uniform(rng);
  EXPECT_EQ(ops::linear(std::span<const double>(std::vector<double>(3, 0.0)), r), r.bias);

  const auto xt = random_tensor<double>({2, 3, 1, 1}, rng);
  EXPECT_LE(oracle::max_abs_diff(ops::linear(xt, r), oracle::linear(xt, r.weights, r.bias)), 1e-12);
  EXPECT_THROW(ops::linear(std::span<const double>(std::vector<double>(4)), r), ConfigError);
  EXPECT_EQ(r.param_count(), 3u * 5 + 5);
}

TEST(ElementwiseTest, Examples) {
  Rng rng(kSeed + 10);
  const auto x = random_tensor<double>({2, 3, 4, 4}, rng);
  const auto half = ops::sigmoid(Tensor<double>({1, 2, 3, 3}));
  for (double v : half.data()) EXPECT_EQ(v, 0.5);
  const std::vector<double> ones(3, 1.0);
  EXPECT_EQ(ops::mul_channelwise(x, std::span<const double>(ones)), x);
  const auto zero = ops::add(x, ops::scale(x, -1.0));
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(ops::add(x, Tensor<double>({2, 3, 4, 3})), ShapeError);
  EXPECT_THROW(ops::mul_channelwise(x, std::span<const double>(std::vector<double>(2))), ShapeError);
}

TEST(ElementwiseTest, MulChannelwiseScalesEachChannel) {
  Rng rng(kSeed + 11);
  const auto x = random_tensor<double>({1, 3, 2, 2}, rng);
  const std::vector<double> w{2.0, -1.0, 0.5};
  const auto y = ops::mul_channelwise(x, std::span<const double>(w));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < 4; ++p) EXPECT_EQ(y.plane(0, c)[p], x.plane(0, c)[p] * w[c]);
}

TEST(ElementwiseTest, SigmoidIsStableForLargeInputs) {
  const Tensor<double> x({1, 1, 1, 4}, {-800.0, -30.0, 30.0, 800.0});
  const auto y = ops::sigmoid(x);
  for (double v : y.data()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_GT(y[0], -1e-300);
  EXPECT_EQ(y[3], 1.0);
}

TEST(PurityTest, RepeatedCallsAreBitIdentical) {
  Rng rng(kSeed + 12);
  const auto x = random_tensor<double>({1, 4, 8, 8}, rng);
  auto spec = ConvSpec<double>::make(4, 4, 3);
  spec.init_uniform(rng);
  EXPECT_EQ(ops::conv2d(x, spec), ops::conv2d(x, spec));
  EXPECT_EQ(ops::max_pool2d(x, 3, 2, 1), ops::max_pool2d(x, 3, 2, 1));
  EXPECT_EQ(ops::pixel_shuffle(x, 2), ops::pixel_shuffle(x, 2));
}

}  // namespace
}  // namespace cefpn
