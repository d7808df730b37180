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

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cefpn/backbone.hpp"
#include "cefpn/errors.hpp"
#include "cefpn/neck_config.hpp"
#include "cefpn/neck_params.hpp"
#include "cefpn/tape.hpp"
#include "cefpn/tensor.hpp"

namespace cefpn {

using NeckVars = NeckLayers<ConvVars, LinearVars>;

template <typename T>
NeckVars bind(GradTape<T>& tape, const NeckParams<T>& params, bool requires_grad) {
  return params.template transform<ConvVars, LinearVars>(
      [&](const LayerInfo&, const auto& layer) { return bind(tape, layer, requires_grad); });
}

// Tape handles in the same order as for_each_parameter visits the buffers.
inline std::vector<Var> parameter_vars(const NeckVars& vars) {
  std::vector<Var> out;
  vars.for_each_layer([&](const LayerInfo&, const auto& layer) {
    out.push_back(layer.weight);
    if (layer.bias) out.push_back(*layer.bias);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Sub-pixel skip fusion: f_lo + PS(transform(c_hi)) with a 2x shuffle.
//
// A 4c-channel source is shuffled as is. An 8c-channel source is first brought
// to 4c channels according to `scheme`; `reduce` is the scheme-a convolution.
template <typename T>
Var ssf_fuse(GradTape<T>& tape, Var c_hi, Var f_lo, SsfScheme scheme, const std::optional<ConvVars>& reduce) {
  const Shape hi = tape.value(c_hi).shape();
  const Shape lo = tape.value(f_lo).shape();
  const std::size_t width = lo.c;
  if (hi.n != lo.n || lo.h != 2 * hi.h || lo.w != 2 * hi.w) {
    throw ShapeError("ssf_fuse: lower level " + lo.str() + " must be exactly twice the source " + hi.str() +
                     " spatially");
  }
  if (hi.c == 4 * width) return tape.add(f_lo, tape.pixel_shuffle(c_hi, 2));
  if (hi.c != 8 * width) {
    throw ConfigError("ssf_fuse: source has " + std::to_string(hi.c) + " channels, expected 4x or 8x the pyramid width " +
                      std::to_string(width));
  }
  switch (scheme) {
    case SsfScheme::a:
      if (!reduce) throw ConfigError("ssf_fuse: scheme a needs the ssf.reduce convolution");
      return tape.add(f_lo, tape.pixel_shuffle(apply(tape, c_hi, *reduce), 2));
    case SsfScheme::b:
      return tape.add(f_lo, tape.pixel_shuffle(tape.slice_channels(c_hi, 0, 4 * width), 2));
    case SsfScheme::c: {
      const Var first = tape.pixel_shuffle(tape.slice_channels(c_hi, 0, 4 * width), 2);
      const Var second = tape.pixel_shuffle(tape.slice_channels(c_hi, 4 * width, 4 * width), 2);
      return tape.add(tape.add(f_lo, first), second);
    }
  }
  throw ConfigError("ssf_fuse: unknown scheme");
}

// ---------------------------------------------------------------------------
// FPN top-down pathway. `laterals` run finest first; the coarsest is the top.
// M_top = F_top, M_i = F_i + up2(M_{i+1}), P_i = conv3x3(M_i).
template <typename T>
std::vector<Var> top_down_merge(GradTape<T>& tape, std::span<const Var> laterals, std::span<const ConvVars> post_merge,
                                int first_level = 2) {
  if (laterals.empty() || laterals.size() != post_merge.size()) {
    throw ConfigError("top_down_merge: " + std::to_string(laterals.size()) + " laterals but " +
                      std::to_string(post_merge.size()) + " post-merge convolutions");
  }
  const std::size_t width = tape.value(laterals.back()).c();
  std::vector<Var> merged(laterals.size());
  for (std::size_t k = laterals.size(); k-- > 0;) {
    const std::string level = "level P" + std::to_string(first_level + static_cast<int>(k));
    const Shape s = tape.value(laterals[k]).shape();
    if (s.c != width) {
      throw ShapeError(level + ": lateral width " + std::to_string(s.c) + " differs from " + std::to_string(width));
    }
    if (k + 1 == laterals.size()) {
      merged[k] = laterals[k];
    } else {
      merged[k] = with_context(level, [&] {
        const Var up = tape.interpolate_nearest(merged[k + 1], 2);
        return tape.add(laterals[k], up);
      });
    }
  }
  std::vector<Var> pyramid(laterals.size());
  for (std::size_t k = 0; k < laterals.size(); ++k) {
    pyramid[k] = with_context("level P" + std::to_string(first_level + static_cast<int>(k)),
                              [&] { return apply(tape, merged[k], post_merge[k]); });
  }
  return pyramid;
}

// ---------------------------------------------------------------------------
// Integration map: every level resized to the resolution of pyramid[target]
// (finer levels by max-pooling, coarser ones by nearest interpolation), the
// arithmetic mean taken, then the context map added when present.
template <typename T>
Var build_integration_map(GradTape<T>& tape, std::span<const Var> pyramid, std::size_t target,
                          std::optional<Var> context) {
  if (pyramid.empty() || target >= pyramid.size()) throw ConfigError("build_integration_map: bad target level");
  const Shape ts = tape.value(pyramid[target]).shape();
  std::optional<Var> acc;
  for (std::size_t k = 0; k < pyramid.size(); ++k) {
    const Shape s = tape.value(pyramid[k]).shape();
    if (s.c != ts.c || s.n != ts.n) {
      throw ShapeError("build_integration_map: level " + std::to_string(k) + " " + s.str() + " incompatible with " +
                       ts.str());
    }
    Var resized = pyramid[k];
    if (s.h > ts.h) {
      const std::size_t f = s.h / ts.h;
      if (s.h != f * ts.h || s.w != f * ts.w) {
        throw ShapeError("build_integration_map: " + s.str() + " is not an integer multiple of " + ts.str());
      }
      resized = tape.max_pool2d(pyramid[k], static_cast<int>(f), static_cast<int>(f), 0);
    } else if (s.h < ts.h) {
      const std::size_t f = ts.h / s.h;
      if (ts.h != f * s.h || ts.w != f * s.w) {
        throw ShapeError("build_integration_map: " + ts.str() + " is not an integer multiple of " + s.str());
      }
      resized = tape.interpolate_nearest(pyramid[k], static_cast<int>(f));
    } else if (s.w != ts.w) {
      throw ShapeError("build_integration_map: " + s.str() + " incompatible with " + ts.str());
    }
    acc = acc ? tape.add(*acc, resized) : resized;
  }
  Var mean = tape.scale(*acc, T{1} / static_cast<T>(pyramid.size()));
  if (!context) return mean;
  const Shape cs = tape.value(*context).shape();
  if (!(cs == ts)) {
    throw ShapeError("build_integration_map: context map " + cs.str() + " does not match the integration resolution " +
                     ts.str());
  }
  return tape.add(mean, *context);
}

// ---------------------------------------------------------------------------
// Sub-pixel context enhancement on C5 (n, 8c, h, w) -> (n, c, 2h, 2w), the
// sum of three pathways:
//   local:  3x3 conv 8c -> 4c, 2x shuffle;
//   pooled: 3x3/2 max-pool, 1x1 conv 8c -> 16c, 4x shuffle (cropped to 2h x 2w
//           when h or w is odd);
//   global: global average pool, 1x1 conv 8c -> c, broadcast.
template <typename T, typename Context>
Var sce_forward(GradTape<T>& tape, Var c5, const Context& layers, std::size_t width) {
  const Shape s = tape.value(c5).shape();
  if (s.c != 8 * width) {
    throw ConfigError("sce_forward: C5 has " + std::to_string(s.c) + " channels, expected 8 x " + std::to_string(width));
  }
  const std::size_t oh = 2 * s.h;
  const std::size_t ow = 2 * s.w;
  const Var local = tape.pixel_shuffle(apply(tape, c5, layers.local), 2);
  Var pooled = tape.pixel_shuffle(apply(tape, tape.max_pool2d(c5, 3, 2, 1), layers.pooled), 4);
  if (tape.value(pooled).h() != oh || tape.value(pooled).w() != ow) pooled = tape.crop_spatial(pooled, oh, ow);
  const Var global = tape.broadcast_spatial(apply(tape, tape.global_avg_pool(c5), layers.global), oh, ow);
  return tape.add(tape.add(local, pooled), global);
}

// ---------------------------------------------------------------------------
// Channel attention: sigmoid(fc1(avg(I)) + fc2(max(I))), each fc a
// reduce-relu-expand bottleneck. Returns (n, c, 1, 1) weights.
template <typename T, typename Attention>
Var cag_weights(GradTape<T>& tape, Var integration, const Attention& layers) {
  const Var avg = tape.global_avg_pool(integration);
  const Var mx = tape.global_max_pool(integration);
  const Var a = apply(tape, tape.relu(apply(tape, avg, layers.fc1_reduce)), layers.fc1_expand);
  const Var m = apply(tape, tape.relu(apply(tape, mx, layers.fc2_reduce)), layers.fc2_expand);
  return tape.sigmoid(tape.add(a, m));
}

template <typename T>
Var cag_apply(GradTape<T>& tape, Var level, Var weights) {
  return tape.mul_channelwise(level, weights);
}

// ---------------------------------------------------------------------------
// Full neck.

template <typename T>
struct ForwardOptions {
  // Replaces the learned attention weights with a fixed per-channel vector.
  std::optional<std::vector<T>> attention_override;
};

// Tape handles produced by one forward pass.
struct NeckGraph {
  std::array<Var, 4> outputs{};  // R2..R5
  std::vector<Var> pyramid;      // P2..P4 (, P5)
  std::optional<Var> context;
  std::optional<Var> integration;
  std::optional<Var> attention;
};

namespace detail {

inline void check_backbone(const std::array<Shape, 4>& shapes, const NeckConfig& config) {
  for (int i = 2; i <= 5; ++i) {
    const Shape& s = shapes[static_cast<std::size_t>(i - 2)];
    if (s.c != config.backbone_channels(i)) {
      throw ConfigError("C" + std::to_string(i) + " has " + std::to_string(s.c) + " channels, expected " +
                        std::to_string(config.backbone_channels(i)));
    }
    if (s.h == 0 || s.w == 0) throw ShapeError("C" + std::to_string(i) + " has an empty spatial extent");
    if (i > 2) {
      const Shape& f = shapes[static_cast<std::size_t>(i - 3)];
      if (f.n != s.n || f.h != 2 * s.h || f.w != 2 * s.w) {
        throw ShapeError("C" + std::to_string(i - 1) + " " + f.str() + " must be exactly twice C" + std::to_string(i) +
                         " " + s.str() + " spatially");
      }
    }
  }
}

inline void check_layers(const NeckVars& vars, const NeckConfig& config) {
  const std::size_t levels = config.include_f5_p5 ? 4 : 3;
  if (vars.lateral.size() != levels || vars.post_merge.size() != levels) {
    throw ConfigError("neck parameters hold " + std::to_string(vars.lateral.size()) + " levels, config needs " +
                      std::to_string(levels));
  }
  if (config.use_sce && !vars.sce) throw ConfigError("config enables context enhancement but parameters lack it");
  if (config.use_cag && !vars.cag) throw ConfigError("config enables attention but parameters lack it");
  if (config.use_ssf && config.ssf_scheme == SsfScheme::a && !vars.ssf_reduce) {
    throw ConfigError("config selects ssf scheme a but parameters lack ssf.reduce");
  }
}

}  // namespace detail

template <typename T>
NeckGraph cefpn_forward(GradTape<T>& tape, const std::array<Var, 4>& backbone, const NeckVars& vars,
                        const NeckConfig& config, const ForwardOptions<T>& options = {}) {
  config.validate();
  std::array<Shape, 4> shapes;
  for (std::size_t i = 0; i < 4; ++i) shapes[i] = tape.value(backbone[i]).shape();
  detail::check_backbone(shapes, config);
  detail::check_layers(vars, config);

  const std::size_t levels = vars.lateral.size();
  std::vector<Var> laterals;
  for (std::size_t k = 0; k < levels; ++k) {
    laterals.push_back(with_context("level F" + std::to_string(k + 2),
                                    [&] { return apply(tape, backbone[k], vars.lateral[k]); }));
  }
  if (config.use_ssf) {
    laterals[2] = with_context("level F4 (fusion from C5)", [&] {
      return ssf_fuse(tape, backbone[3], laterals[2], config.ssf_scheme, vars.ssf_reduce);
    });
    laterals[1] = with_context("level F3 (fusion from C4)", [&] {
      return ssf_fuse(tape, backbone[2], laterals[1], config.ssf_scheme, vars.ssf_reduce);
    });
  }

  NeckGraph g;
  g.pyramid = top_down_merge(tape, std::span<const Var>(laterals), std::span<const ConvVars>(vars.post_merge));

  if (config.use_sce) {
    g.context = with_context("context enhancement",
                             [&] { return sce_forward(tape, backbone[3], *vars.sce, config.base_channel); });
  }
  if (config.needs_integration_map()) {
    g.integration = with_context("integration map", [&] {
      return build_integration_map(tape, std::span<const Var>(g.pyramid), 2, g.context);
    });
  }
  if (options.attention_override) {
    const auto& w = *options.attention_override;
    if (w.size() != config.base_channel) {
      throw ShapeError("attention override has " + std::to_string(w.size()) + " entries, expected " +
                       std::to_string(config.base_channel));
    }
    const std::size_t n = shapes[0].n;
    Tensor<T> wt({n, w.size(), 1, 1});
    for (std::size_t b = 0; b < n; ++b) std::copy(w.begin(), w.end(), wt.plane(b, 0));
    g.attention = tape.constant(std::move(wt));
  } else if (config.use_cag) {
    g.attention = with_context("attention", [&] { return cag_weights(tape, *g.integration, *vars.cag); });
  }

  for (std::size_t k = 0; k < 4; ++k) {
    Var level;
    if (k < 3 || levels == 4) {
      level = g.pyramid[k];
    } else {
      // No P5: the fifth level is a parameter-free stride-2 subsample of P4.
      level = tape.max_pool2d(g.pyramid[2], 1, 2, 0);
    }
    g.outputs[k] = g.attention ? with_context("level R" + std::to_string(k + 2),
                                              [&] { return cag_apply(tape, level, *g.attention); })
                               : level;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Value-level API. Each call records on a private tape without gradients.

template <typename T>
struct PyramidOutputs {
  std::array<Tensor<T>, 4> levels;  // R2..R5
  std::optional<Tensor<T>> integration;
  std::optional<Tensor<T>> attention;

  const Tensor<T>& level(int i) const { return levels.at(static_cast<std::size_t>(i - 2)); }
};

template <typename T>
PyramidOutputs<T> cefpn_forward(const BackbonePyramid<T>& backbone, const NeckParams<T>& params,
                                const NeckConfig& config, const ForwardOptions<T>& options = {}) {
  GradTape<T> tape;
  std::array<Var, 4> inputs;
  for (int i = 2; i <= 5; ++i) inputs[static_cast<std::size_t>(i - 2)] = tape.constant(backbone.level(i));
  const NeckVars vars = bind(tape, params, false);
  const NeckGraph g = cefpn_forward(tape, inputs, vars, config, options);
  PyramidOutputs<T> out;
  for (std::size_t k = 0; k < 4; ++k) out.levels[k] = tape.value(g.outputs[k]);
  if (g.integration) out.integration = tape.value(*g.integration);
  if (g.attention) out.attention = tape.value(*g.attention);
  return out;
}

template <typename T>
Tensor<T> ssf_fuse(const Tensor<T>& c_hi, const Tensor<T>& f_lo, SsfScheme scheme, const NeckParams<T>& params) {
  GradTape<T> tape;
  std::optional<ConvVars> reduce;
  if (params.ssf_reduce) reduce = bind(tape, *params.ssf_reduce, false);
  return tape.value(ssf_fuse(tape, tape.constant(c_hi), tape.constant(f_lo), scheme, reduce));
}

template <typename T>
std::vector<Tensor<T>> top_down_merge(std::span<const Tensor<T>> laterals, std::span<const ConvSpec<T>> post_merge,
                                      int first_level = 2) {
  GradTape<T> tape;
  std::vector<Var> lv;
  std::vector<ConvVars> pv;
  for (const auto& t : laterals) lv.push_back(tape.constant(t));
  for (const auto& s : post_merge) pv.push_back(bind(tape, s, false));
  std::vector<Tensor<T>> out;
  for (Var v : top_down_merge(tape, std::span<const Var>(lv), std::span<const ConvVars>(pv), first_level)) {
    out.push_back(tape.value(v));
  }
  return out;
}

// Integration map at the resolution of pyramid[2] (P4).
template <typename T>
Tensor<T> build_integration_map(std::span<const Tensor<T>> pyramid, const std::optional<Tensor<T>>& context) {
  GradTape<T> tape;
  std::vector<Var> pv;
  for (const auto& t : pyramid) pv.push_back(tape.constant(t));
  std::optional<Var> cv;
  if (context) cv = tape.constant(*context);
  return tape.value(build_integration_map(tape, std::span<const Var>(pv), 2, cv));
}

template <typename T>
Tensor<T> sce_forward(const Tensor<T>& c5, const NeckParams<T>& params, std::size_t width) {
  if (!params.sce) throw ConfigError("sce_forward: parameters lack the context layers");
  GradTape<T> tape;
  const auto layers = NeckVars::Context{bind(tape, params.sce->local, false), bind(tape, params.sce->pooled, false),
                                        bind(tape, params.sce->global, false)};
  return tape.value(sce_forward(tape, tape.constant(c5), layers, width));
}

// (n, c, 1, 1) attention weights.
template <typename T>
Tensor<T> cag_weights(const Tensor<T>& integration, const NeckParams<T>& params) {
  if (!params.cag) throw ConfigError("cag_weights: parameters lack the attention layers");
  GradTape<T> tape;
  const auto& a = *params.cag;
  const auto layers = NeckVars::Attention{bind(tape, a.fc1_reduce, false), bind(tape, a.fc1_expand, false),
                                          bind(tape, a.fc2_reduce, false), bind(tape, a.fc2_expand, false)};
  return tape.value(cag_weights(tape, tape.constant(integration), layers));
}

template <typename T>
Tensor<T> cag_apply(const Tensor<T>& level, std::span<const T> weights) {
  return ops::mul_channelwise(level, weights);
}

}  // namespace cefpn
