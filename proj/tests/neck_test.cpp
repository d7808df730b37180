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

#include <chrono>
#include <string>

#include "cefpn/cost_model.hpp"
#include "cefpn/gradcheck.hpp"
#include "cefpn/neck.hpp"
#include "composites.hpp"
#include "oracles.hpp"

namespace cefpn {
namespace {

constexpr std::size_t kDeskWidth = 16;
const Geometry kDesk{1, 64, 64};

NeckParams<double> desk_params(std::uint64_t seed, NeckConfig cfg = NeckConfig::cefpn(kDeskWidth)) {
  return make_params<double>(cfg, seed);
}

// ---------------------------------------------------------------------------
// ssf_fuse

TEST(SsfFuseTest, FourTimesWidthSourceIsShuffledDirectly) {
  Rng rng(1);
  const auto c4 = random_tensor<double>({1, 4 * kDeskWidth, 4, 4}, rng);
  const auto f3 = random_tensor<double>({1, kDeskWidth, 8, 8}, rng);
  const auto params = desk_params(1);
  for (SsfScheme s : {SsfScheme::a, SsfScheme::b, SsfScheme::c}) {
    EXPECT_EQ(ssf_fuse(c4, f3, s, params), ops::add(f3, ops::pixel_shuffle(c4, 2)));
  }
}

TEST(SsfFuseTest, SchemeCWithZeroLowerLevelIsSumOfShuffledHalves) {
  Rng rng(2);
  const auto c5 = random_tensor<double>({1, 8 * kDeskWidth, 2, 2}, rng);
  const Tensor<double> zero({1, kDeskWidth, 4, 4});
  const auto first = ops::pixel_shuffle(ops::slice_channels(c5, 0, 4 * kDeskWidth), 2);
  const auto second = ops::pixel_shuffle(ops::slice_channels(c5, 4 * kDeskWidth, 4 * kDeskWidth), 2);
  EXPECT_LE(oracle::max_abs_diff(ssf_fuse(c5, zero, SsfScheme::c, desk_params(2)), ops::add(first, second)), 0.0);
}

TEST(SsfFuseTest, SchemesBAndCAgreeWhenSecondHalfIsZero) {
  Rng rng(3);
  auto c5 = random_tensor<double>({2, 8 * kDeskWidth, 2, 3}, rng);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t ch = 4 * kDeskWidth; ch < 8 * kDeskWidth; ++ch)
      for (std::size_t p = 0; p < 6; ++p) c5.plane(b, ch)[p] = 0.0;
  const auto f4 = random_tensor<double>({2, kDeskWidth, 4, 6}, rng);
  const auto params = desk_params(3);
  EXPECT_EQ(ssf_fuse(c5, f4, SsfScheme::b, params), ssf_fuse(c5, f4, SsfScheme::c, params));
}

TEST(SsfFuseTest, SchemeAUsesTheReductionConvolution) {
  Rng rng(4);
  auto cfg = NeckConfig::cefpn(kDeskWidth);
  cfg.ssf_scheme = SsfScheme::a;
  const auto params = desk_params(4, cfg);
  ASSERT_TRUE(params.ssf_reduce.has_value());
  EXPECT_EQ(params.ssf_reduce->param_count(), 8 * kDeskWidth * 4 * kDeskWidth + 4 * kDeskWidth);
  const auto c5 = random_tensor<double>({1, 8 * kDeskWidth, 2, 2}, rng);
  const auto f4 = random_tensor<double>({1, kDeskWidth, 4, 4}, rng);
  EXPECT_LE(oracle::max_abs_diff(ssf_fuse(c5, f4, SsfScheme::a, params), oracle::ssf(c5, f4, SsfScheme::a, params)),
            1e-12);
  EXPECT_THROW(ssf_fuse(c5, f4, SsfScheme::a, desk_params(4)), ConfigError);
}

TEST(SsfFuseTest, Errors) {
  const auto params = desk_params(5);
  EXPECT_THROW(ssf_fuse(Tensor<double>({1, 8 * kDeskWidth, 2, 2}), Tensor<double>({1, kDeskWidth, 4, 3}),
                        SsfScheme::c, params),
               ShapeError);
  EXPECT_THROW(ssf_fuse(Tensor<double>({1, 6 * kDeskWidth, 2, 2}), Tensor<double>({1, kDeskWidth, 4, 4}),
                        SsfScheme::c, params),
               ConfigError);
}

TEST(SsfFuseTest, RandomizedAgainstCompositionOracle) {
  Rng rng(6);
  auto cfg = NeckConfig::cefpn(kDeskWidth);
  cfg.ssf_scheme = SsfScheme::a;
  const auto params = desk_params(6, cfg);
  for (int trial = 0; trial < 30; ++trial) {
    const auto scheme = static_cast<SsfScheme>(rng.range(0, 2));
    const std::size_t mult = rng.range(0, 1) ? 8 : 4;
    const auto h = static_cast<std::size_t>(rng.range(1, 3));
    const auto w = static_cast<std::size_t>(rng.range(1, 3));
    const auto hi = random_tensor<double>({1, mult * kDeskWidth, h, w}, rng);
    const auto lo = random_tensor<double>({1, kDeskWidth, 2 * h, 2 * w}, rng);
    ASSERT_LE(oracle::max_abs_diff(ssf_fuse(hi, lo, scheme, params), oracle::ssf(hi, lo, scheme, params)), 1e-12);
  }
}

// ---------------------------------------------------------------------------
// top_down_merge

TEST(TopDownMergeTest, SingleLevelIsPostMergeConvolution) {
  Rng rng(7);
  auto conv = ConvSpec<double>::make(4, 4, 3);
  conv.init_uniform(rng);
  const std::vector<Tensor<double>> f{random_tensor<double>({1, 4, 4, 4}, rng)};
  const auto p = top_down_merge(std::span<const Tensor<double>>(f), std::span<const ConvSpec<double>>(&conv, 1), 4);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0], ops::conv2d(f[0], conv));
}

TEST(TopDownMergeTest, ZeroLateralsGiveZeroPyramid) {
  std::vector<ConvSpec<double>> convs;
  Rng rng(8);
  for (int i = 0; i < 3; ++i) {
    convs.push_back(ConvSpec<double>::make(4, 4, 3));
    fill_uniform(convs.back().weights, rng, -1, 1);
  }
  const std::vector<Tensor<double>> f{Tensor<double>({1, 4, 16, 16}), Tensor<double>({1, 4, 8, 8}),
                                      Tensor<double>({1, 4, 4, 4})};
  for (const auto& p : top_down_merge(std::span<const Tensor<double>>(f), std::span<const ConvSpec<double>>(convs))) {
    for (double v : p.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(TopDownMergeTest, TwoLevelsMatchCompositionOracle) {
  Rng rng(9);
  std::vector<ConvSpec<double>> convs(2, ConvSpec<double>::make(3, 3, 3));
  for (auto& c : convs) c.init_uniform(rng);
  const std::vector<Tensor<double>> f{random_tensor<double>({1, 3, 6, 8}, rng), random_tensor<double>({1, 3, 3, 4}, rng)};
  const auto p = top_down_merge(std::span<const Tensor<double>>(f), std::span<const ConvSpec<double>>(convs));
  const auto merged = ops::add(f[0], oracle::interpolate_nearest(f[1], 2));
  EXPECT_LE(oracle::max_abs_diff(p[0], oracle::conv2d(merged, convs[0].weights, convs[0].bias, 1, 1)), 1e-12);
  EXPECT_LE(oracle::max_abs_diff(p[1], oracle::conv2d(f[1], convs[1].weights, convs[1].bias, 1, 1)), 1e-12);
}

TEST(TopDownMergeTest, MismatchNamesTheLevel) {
  std::vector<ConvSpec<double>> convs(2, ConvSpec<double>::make(3, 3, 3));
  const std::vector<Tensor<double>> f{Tensor<double>({1, 3, 6, 6}), Tensor<double>({1, 3, 4, 4})};
  try {
    top_down_merge(std::span<const Tensor<double>>(f), std::span<const ConvSpec<double>>(convs));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("level P2"), std::string::npos) << e.what();
  }
}

// ---------------------------------------------------------------------------
// build_integration_map

TEST(IntegrationMapTest, ConstantLevelsAverageToConstant) {
  const std::vector<Tensor<double>> p{Tensor<double>({1, 4, 16, 16}, 1.5), Tensor<double>({1, 4, 8, 8}, 1.5),
                                      Tensor<double>({1, 4, 4, 4}, 1.5)};
  const auto i = build_integration_map<double>(std::span<const Tensor<double>>(p), Tensor<double>({1, 4, 4, 4}));
  EXPECT_EQ(i.shape(), (Shape{1, 4, 4, 4}));
  for (double v : i.data()) EXPECT_DOUBLE_EQ(v, 1.5);
}

TEST(IntegrationMapTest, ZeroLevelsPassContextThrough) {
  Rng rng(10);
  const std::vector<Tensor<double>> p{Tensor<double>({1, 4, 16, 16}), Tensor<double>({1, 4, 8, 8}),
                                      Tensor<double>({1, 4, 4, 4})};
  const auto s = random_tensor<double>({1, 4, 4, 4}, rng);
  EXPECT_EQ(build_integration_map<double>(std::span<const Tensor<double>>(p), s), s);
}

TEST(IntegrationMapTest, RandomizedAgainstResizeMeanAddOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto h = static_cast<std::size_t>(rng.range(1, 4));
    const auto w = static_cast<std::size_t>(rng.range(1, 4));
    const std::vector<Tensor<double>> p{random_tensor<double>({1, 4, 4 * h, 4 * w}, rng),
                                        random_tensor<double>({1, 4, 2 * h, 2 * w}, rng),
                                        random_tensor<double>({1, 4, h, w}, rng)};
    const auto s = random_tensor<double>({1, 4, h, w}, rng);
    ASSERT_LE(oracle::max_rel_diff(build_integration_map<double>(std::span<const Tensor<double>>(p), s),
                                   oracle::integration(p, s)),
              1e-14);
  }
}

TEST(IntegrationMapTest, CoarserLevelIsInterpolated) {
  Rng rng(12);
  const std::vector<Tensor<double>> p{random_tensor<double>({1, 2, 8, 8}, rng), random_tensor<double>({1, 2, 4, 4}, rng),
                                      random_tensor<double>({1, 2, 2, 2}, rng), random_tensor<double>({1, 2, 1, 1}, rng)};
  const auto i = build_integration_map<double>(std::span<const Tensor<double>>(p), std::nullopt);
  auto expected = ops::add(ops::add(ops::max_pool2d(p[0], 4, 4, 0), ops::max_pool2d(p[1], 2, 2, 0)), p[2]);
  expected = ops::scale(ops::add(expected, ops::interpolate_nearest(p[3], 2)), 0.25);
  EXPECT_LE(oracle::max_rel_diff(i, expected), 1e-14);
}

TEST(IntegrationMapTest, ContextResolutionMismatchIsShapeError) {
  const std::vector<Tensor<double>> p{Tensor<double>({1, 4, 16, 16}), Tensor<double>({1, 4, 8, 8}),
                                      Tensor<double>({1, 4, 4, 4})};
  EXPECT_THROW(build_integration_map<double>(std::span<const Tensor<double>>(p), Tensor<double>({1, 4, 8, 8})), ShapeError);
}

// ---------------------------------------------------------------------------
// sce_forward

TEST(SceTest, Width256OutputShape) {
  // C5 at 2w x 2h x 8C with C = 256 -> 4w x 4h x C.
  const auto params = make_params<double>(NeckConfig::cefpn(256), 0, ParamInit::zeros);
  const auto out = sce_forward(Tensor<double>({1, 2048, 16, 16}), params, 256);
  EXPECT_EQ(out.shape(), (Shape{1, 256, 32, 32}));
}

TEST(SceTest, ZeroWeightsGiveZeroOutput) {
  Rng rng(13);
  const auto params = make_params<double>(NeckConfig::cefpn(kDeskWidth), 0, ParamInit::zeros);
  const auto out = sce_forward(random_tensor<double>({1, 8 * kDeskWidth, 4, 4}, rng), params, kDeskWidth);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(SceTest, GlobalPathwayBroadcastsOneValue) {
  // Only the global pathway is live; its squeeze sums every input channel.
  const double k = 0.75;
  auto params = make_params<double>(NeckConfig::cefpn(kDeskWidth), 0, ParamInit::zeros);
  for (std::size_t o = 0; o < kDeskWidth; ++o)
    for (std::size_t i = 0; i < 8 * kDeskWidth; ++i) params.sce->global.weights(o, i, 0, 0) = 1.0;
  const auto out = sce_forward(Tensor<double>({1, 8 * kDeskWidth, 2, 2}, k), params, kDeskWidth);
  const double expected = k * static_cast<double>(8 * kDeskWidth);
  EXPECT_EQ(out.shape(), (Shape{1, kDeskWidth, 4, 4}));
  for (double v : out.data()) EXPECT_EQ(v, expected);
}

TEST(SceTest, RandomizedAgainstCompositionOracle) {
  Rng rng(14);
  const auto params = desk_params(14);
  for (int trial = 0; trial < 10; ++trial) {
    const auto h = static_cast<std::size_t>(rng.range(1, 4));
    const auto w = static_cast<std::size_t>(rng.range(1, 4));
    const auto c5 = random_tensor<double>({1, 8 * kDeskWidth, h, w}, rng);
    const auto out = sce_forward(c5, params, kDeskWidth);
    ASSERT_EQ(out.shape(), (Shape{1, kDeskWidth, 2 * h, 2 * w}));
    ASSERT_LE(oracle::max_abs_diff(out, oracle::sce(c5, params)), 1e-12);
  }
}

TEST(SceTest, WrongChannelCountIsConfigError) {
  EXPECT_THROW(sce_forward(Tensor<double>({1, 4 * kDeskWidth, 2, 2}), desk_params(15), kDeskWidth), ConfigError);
}

// ---------------------------------------------------------------------------
// cag_weights / cag_apply

TEST(CagTest, ZeroParametersGiveOneHalf) {
  Rng rng(16);
  const auto params = make_params<double>(NeckConfig::cefpn(kDeskWidth), 0, ParamInit::zeros);
  const auto w = cag_weights(random_tensor<double>({2, kDeskWidth, 4, 4}, rng), params);
  EXPECT_EQ(w.shape(), (Shape{2, kDeskWidth, 1, 1}));
  for (double v : w.data()) EXPECT_EQ(v, 0.5);
}

TEST(CagTest, Width256ParameterCount) {
  const auto params = make_params<float>(NeckConfig::cefpn(256), 0, ParamInit::shape_only);
  const auto& a = *params.cag;
  const std::size_t total = a.fc1_reduce.param_count() + a.fc1_expand.param_count() + a.fc2_reduce.param_count() +
                            a.fc2_expand.param_count();
  EXPECT_EQ(a.fc1_reduce.out_features, 8u);
  EXPECT_EQ(total, 8720u);
}

TEST(CagTest, RandomizedAgainstCompositionOracle) {
  Rng rng(17);
  const auto params = desk_params(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto i = random_tensor<double>(
        {static_cast<std::size_t>(rng.range(1, 2)), kDeskWidth, static_cast<std::size_t>(rng.range(1, 5)),
         static_cast<std::size_t>(rng.range(1, 5))},
        rng, -3.0, 3.0);
    const auto w = cag_weights(i, params);
    ASSERT_LE(oracle::max_abs_diff(w, oracle::cag(i, params)), 1e-12);
    for (double v : w.data()) {
      ASSERT_GT(v, 0.0);
      ASSERT_LT(v, 1.0);
    }
  }
}

TEST(CagTest, WidthMismatchIsConfigError) {
  EXPECT_THROW(cag_weights(Tensor<double>({1, 8, 2, 2}), desk_params(18)), ConfigError);
}

TEST(CagTest, ApplyExamples) {
  Rng rng(19);
  const auto p = random_tensor<double>({1, 4, 3, 3}, rng);
  const std::vector<double> ones(4, 1.0), zeros(4, 0.0), w{0.1, 0.2, 0.3, 0.4};
  EXPECT_EQ(cag_apply(p, std::span<const double>(ones)), p);
  const auto zeroed = cag_apply(p, std::span<const double>(zeros));
  for (double v : zeroed.data()) EXPECT_EQ(v, 0.0);
  const auto r = cag_apply(p, std::span<const double>(w));
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t q = 0; q < 9; ++q) EXPECT_EQ(r.plane(0, c)[q], p.plane(0, c)[q] * w[c]);
  EXPECT_THROW(cag_apply(p, std::span<const double>(std::vector<double>(3))), ShapeError);
}

// ---------------------------------------------------------------------------
// cefpn_forward

TEST(CefpnForwardTest, DeskScaleShapeContract) {
  const auto cfg = NeckConfig::cefpn(kDeskWidth);
  const auto backbone = synthetic_backbone<double>(cfg, kDesk, BackbonePattern::noise, 1);
  EXPECT_EQ(backbone.level(2).shape(), (Shape{1, 16, 16, 16}));
  EXPECT_EQ(backbone.level(5).shape(), (Shape{1, 128, 2, 2}));
  const auto out = cefpn_forward(backbone, desk_params(1), cfg);
  const std::size_t extents[] = {16, 8, 4, 2};
  for (int i = 2; i <= 5; ++i) {
    const std::size_t e = extents[i - 2];
    EXPECT_EQ(out.level(i).shape(), (Shape{1, kDeskWidth, e, e})) << "R" << i;
  }
  ASSERT_TRUE(out.integration.has_value());
  EXPECT_EQ(out.integration->shape(), (Shape{1, kDeskWidth, 4, 4}));
}

TEST(CefpnForwardTest, SameSeedIsBitIdentical) {
  const auto cfg = NeckConfig::cefpn(kDeskWidth);
  auto run = [&] {
    return cefpn_forward(synthetic_backbone<double>(cfg, kDesk, BackbonePattern::noise, 3), desk_params(3), cfg).levels;
  };
  EXPECT_EQ(run(), run());
}

TEST(CefpnForwardTest, OnesAttentionOverrideExposesPyramid) {
  const auto cfg = NeckConfig::cefpn(kDeskWidth);
  const auto backbone = synthetic_backbone<double>(cfg, kDesk, BackbonePattern::noise, 4);
  ForwardOptions<double> opt;
  opt.attention_override = std::vector<double>(kDeskWidth, 1.0);
  const auto r = cefpn_forward(backbone, desk_params(4), cfg, opt);
  const auto weighted = cefpn_forward(backbone, desk_params(4), cfg);
  // R = w * P, so dividing back recovers the override result.
  const auto& w = *weighted.attention;
  for (int i = 2; i <= 5; ++i) {
    const auto& a = r.level(i);
    const auto& b = weighted.level(i);
    for (std::size_t c = 0; c < kDeskWidth; ++c)
      for (std::size_t q = 0; q < a.h() * a.w(); ++q) {
        ASSERT_EQ(b.plane(0, c)[q], a.plane(0, c)[q] * w(0, c, 0, 0));
      }
  }
}

TEST(CefpnForwardTest, R5IsStrideTwoSubsampleOfWeightedP4) {
  const auto cfg = NeckConfig::cefpn(kDeskWidth);
  const auto out = cefpn_forward(synthetic_backbone<double>(cfg, kDesk, BackbonePattern::noise, 5), desk_params(5), cfg);
  EXPECT_EQ(out.level(5), ops::max_pool2d(out.level(4), 1, 2, 0));
}

TEST(CefpnForwardTest, BaselineKeepsP5) {
  const auto cfg = NeckConfig::fpn_baseline(kDeskWidth);
  const auto params = make_params<double>(cfg, 6);
  EXPECT_EQ(params.lateral.size(), 4u);
  const auto out = cefpn_forward(synthetic_backbone<double>(cfg, kDesk, BackbonePattern::noise, 6), params, cfg);
  EXPECT_FALSE(out.integration.has_value());
  EXPECT_EQ(out.level(5).shape(), (Shape{1, kDeskWidth, 2, 2}));
}

TEST(CefpnForwardTest, EveryVariantRuns) {
  for (const auto& [name, cfg] : ablation_variants(kDeskWidth, 4)) {
    const auto out = cefpn_forward(synthetic_backbone<double>(cfg, kDesk, BackbonePattern::noise, 7),
                                   make_params<double>(cfg, 7), cfg);
    for (int i = 2; i <= 5; ++i) EXPECT_EQ(out.level(i).c(), kDeskWidth) << name;
  }
}

TEST(CefpnForwardTest, OddC5ExtentStillMeetsStrideContract) {
  const auto cfg = NeckConfig::cefpn(kDeskWidth);
  const Geometry g{1, 96, 160};
  const auto out = cefpn_forward(synthetic_backbone<double>(cfg, g, BackbonePattern::noise, 8), desk_params(8), cfg);
  EXPECT_EQ(out.level(4).shape(), (Shape{1, kDeskWidth, 6, 10}));
  EXPECT_EQ(out.level(5).shape(), (Shape{1, kDeskWidth, 3, 5}));
}

TEST(CefpnForwardTest, ErrorsCarryLevelContext) {
  const auto cfg = NeckConfig::cefpn(kDeskWidth);
  auto backbone = synthetic_backbone<double>(cfg, kDesk, BackbonePattern::noise, 9);
  backbone.level(3) = Tensor<double>({1, 2 * kDeskWidth, 8, 7});
  EXPECT_THROW(cefpn_forward(backbone, desk_params(9), cfg), ShapeError);

  auto wrong = make_params<double>(NeckConfig::cefpn(kDeskWidth), 9);
  wrong.lateral[1] = ConvSpec<double>::make(2 * kDeskWidth, kDeskWidth + 4, 1);
  auto ok = synthetic_backbone<double>(cfg, kDesk, BackbonePattern::noise, 9);
  try {
    cefpn_forward(ok, wrong, cfg);
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("level"), std::string::npos) << e.what();
  }
}

TEST(CefpnForwardTest, ParamsMustMatchConfig) {
  const auto cfg = NeckConfig::cefpn(kDeskWidth);
  auto backbone = synthetic_backbone<double>(cfg, kDesk, BackbonePattern::noise, 10);
  EXPECT_THROW(cefpn_forward(backbone, make_params<double>(NeckConfig::fpn_baseline(kDeskWidth), 1), cfg), ConfigError);
}

TEST(CefpnForwardTest, SumLossGradientMatchesFiniteDifferences) {
  const auto cfg = NeckConfig::cefpn(kDeskWidth);
  auto params = desk_params(21);
  const auto backbone = synthetic_backbone<double>(cfg, kDesk, BackbonePattern::noise, 22);
  auto loss = [&](bool grad, std::vector<Var>* pv, GradTape<double>& tape) {
    std::array<Var, 4> in;
    for (int i = 2; i <= 5; ++i) in[static_cast<std::size_t>(i - 2)] = tape.constant(backbone.level(i));
    const auto vars = bind(tape, params, grad);
    if (pv) *pv = parameter_vars(vars);
    const auto g = cefpn_forward(tape, in, vars, cfg);
    Var total = tape.sum(g.outputs[0]);
    for (std::size_t k = 1; k < 4; ++k) total = tape.add(total, tape.sum(g.outputs[k]));
    return total;
  };
  GradTape<double> tape;
  std::vector<Var> pv;
  const auto grads = tape.backward(loss(true, &pv, tape));

  std::vector<std::span<double>> buffers;
  for_each_parameter(params, [&](const std::string&, std::span<double> s) { buffers.push_back(s); });
  ASSERT_EQ(buffers.size(), pv.size());
  double worst = 0.0;
  for (std::size_t b = 0; b < buffers.size(); ++b) {
    const auto g = grads.of(pv[b]);
    for (std::size_t i : {std::size_t{0}, buffers[b].size() / 2, buffers[b].size() - 1}) {
      const double orig = buffers[b][i];
      auto eval = [&](double v) {
        buffers[b][i] = v;
        GradTape<double> t;
        return t.value(loss(false, nullptr, t))[0];
      };
      const double numeric = (eval(orig + 1e-6) - eval(orig - 1e-6)) / 2e-6;
      buffers[b][i] = orig;
      worst = std::max(worst, gradcheck::relative_error(g[i], numeric));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(CefpnForwardTest, GradcheckOverSampledParameters) {
  const auto r = gradcheck::check_neck(NeckConfig::cefpn(kDeskWidth), kDesk, 31, 256, 32);
  EXPECT_GE(r.parameters.checked, 200u);
  EXPECT_LT(r.parameters.max_rel_error, 1e-4);
  EXPECT_LT(r.inputs.max_rel_error, 1e-4);
}

}  // namespace
}  // namespace cefpn
