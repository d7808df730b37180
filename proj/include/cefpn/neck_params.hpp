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
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cefpn/layers.hpp"
#include "cefpn/neck_config.hpp"
#include "cefpn/random.hpp"

namespace cefpn {

enum class Module { laterals, post_merge, ssf, sce, integration, cag };

inline const char* to_string(Module m) {
  switch (m) {
    case Module::laterals: return "laterals";
    case Module::post_merge: return "post_merge";
    case Module::ssf: return "ssf";
    case Module::sce: return "sce";
    case Module::integration: return "integration";
    case Module::cag: return "cag";
  }
  return "?";
}

// Where a layer sits in the neck. The layer's output map has extent
// ceil(image / feature_stride); feature_stride == 0 marks a 1x1 (global) map.
struct LayerInfo {
  std::string name;
  Module module;
  std::size_t feature_stride;
};

// Learnable layers of the neck, generic over the layer representation so the
// same structure holds parameter values (NeckParams) and tape handles
// (NeckVars).
template <typename Conv, typename Linear>
struct NeckLayers {
  struct Context {
    Conv local;   // 3x3, 8c -> 4c, feeds the 2x shuffle
    Conv pooled;  // 1x1, 8c -> 16c, feeds the 4x shuffle
    Conv global;  // 1x1, 8c -> c on the pooled 1x1 map
  };
  struct Attention {
    Linear fc1_reduce;  // average branch, c -> c/r
    Linear fc1_expand;  // c/r -> c
    Linear fc2_reduce;  // max branch
    Linear fc2_expand;
  };

  std::vector<Conv> lateral;     // C2, C3, C4 (, C5)
  std::vector<Conv> post_merge;  // P2, P3, P4 (, P5)
  std::optional<Conv> ssf_reduce;
  std::optional<Context> sce;
  std::optional<Attention> cag;

  // Visits every layer in a fixed order: fn(const LayerInfo&, layer&).
  template <typename Fn>
  void for_each_layer(Fn&& fn) {
    visit(*this, fn);
  }
  template <typename Fn>
  void for_each_layer(Fn&& fn) const {
    visit(*this, fn);
  }

  // Same structure with each layer mapped through fn(info, layer).
  template <typename Conv2, typename Linear2, typename Fn>
  NeckLayers<Conv2, Linear2> transform(Fn&& fn) const {
    NeckLayers<Conv2, Linear2> out;
    for (std::size_t i = 0; i < lateral.size(); ++i) out.lateral.push_back(fn(lateral_info(i), lateral[i]));
    for (std::size_t i = 0; i < post_merge.size(); ++i) {
      out.post_merge.push_back(fn(post_merge_info(i), post_merge[i]));
    }
    if (ssf_reduce) out.ssf_reduce = fn(ssf_info(), *ssf_reduce);
    if (sce) {
      auto infos = sce_infos();
      out.sce = typename NeckLayers<Conv2, Linear2>::Context{fn(infos[0], sce->local), fn(infos[1], sce->pooled),
                                                             fn(infos[2], sce->global)};
    }
    if (cag) {
      auto infos = cag_infos();
      out.cag = typename NeckLayers<Conv2, Linear2>::Attention{fn(infos[0], cag->fc1_reduce),
                                                               fn(infos[1], cag->fc1_expand),
                                                               fn(infos[2], cag->fc2_reduce),
                                                               fn(infos[3], cag->fc2_expand)};
    }
    return out;
  }

  static LayerInfo lateral_info(std::size_t i) {
    return {"lateral.c" + std::to_string(i + 2), Module::laterals, std::size_t{4} << i};
  }
  static LayerInfo post_merge_info(std::size_t i) {
    return {"post_merge.p" + std::to_string(i + 2), Module::post_merge, std::size_t{4} << i};
  }
  static LayerInfo ssf_info() { return {"ssf.reduce", Module::ssf, 32}; }
  static std::array<LayerInfo, 3> sce_infos() {
    return {LayerInfo{"sce.local", Module::sce, 32}, LayerInfo{"sce.pooled", Module::sce, 64},
            LayerInfo{"sce.global", Module::sce, 0}};
  }
  static std::array<LayerInfo, 4> cag_infos() {
    return {LayerInfo{"cag.fc1.reduce", Module::cag, 0}, LayerInfo{"cag.fc1.expand", Module::cag, 0},
            LayerInfo{"cag.fc2.reduce", Module::cag, 0}, LayerInfo{"cag.fc2.expand", Module::cag, 0}};
  }

 private:
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn& fn) {
    for (std::size_t i = 0; i < self.lateral.size(); ++i) fn(lateral_info(i), self.lateral[i]);
    for (std::size_t i = 0; i < self.post_merge.size(); ++i) fn(post_merge_info(i), self.post_merge[i]);
    if (self.ssf_reduce) fn(ssf_info(), *self.ssf_reduce);
    if (self.sce) {
      auto infos = sce_infos();
      fn(infos[0], self.sce->local);
      fn(infos[1], self.sce->pooled);
      fn(infos[2], self.sce->global);
    }
    if (self.cag) {
      auto infos = cag_infos();
      fn(infos[0], self.cag->fc1_reduce);
      fn(infos[1], self.cag->fc1_expand);
      fn(infos[2], self.cag->fc2_reduce);
      fn(infos[3], self.cag->fc2_expand);
    }
  }
};

template <typename T>
using NeckParams = NeckLayers<ConvSpec<T>, LinearSpec<T>>;

enum class ParamInit {
  seeded_uniform,  // +-1/sqrt(fan_in), drawn in layer-visit order
  zeros,
  shape_only,  // dimensions only, no buffers
};

// Allocates every layer the configuration calls for.
template <typename T>
NeckParams<T> make_params(const NeckConfig& config, std::uint64_t seed = 0,
                          ParamInit init = ParamInit::seeded_uniform) {
  config.validate();
  const std::size_t c = config.base_channel;
  const bool bias = config.bias_enabled;
  const int levels = config.include_f5_p5 ? 4 : 3;
  const bool alloc = init != ParamInit::shape_only;
  auto conv = [&](std::size_t in, std::size_t out, int k) { return ConvSpec<T>::make(in, out, k, bias, 1, alloc); };
  auto dense = [&](std::size_t in, std::size_t out) { return LinearSpec<T>::make(in, out, bias, alloc); };

  NeckParams<T> p;
  for (int i = 0; i < levels; ++i) {
    p.lateral.push_back(conv(config.backbone_channels(i + 2), c, 1));
    p.post_merge.push_back(conv(c, c, 3));
  }
  if (config.use_ssf && config.ssf_scheme == SsfScheme::a) {
    p.ssf_reduce = conv(8 * c, 4 * c, 1);
  }
  if (config.use_sce) {
    p.sce = typename NeckParams<T>::Context{conv(8 * c, 4 * c, 3), conv(8 * c, 16 * c, 1), conv(8 * c, c, 1)};
  }
  if (config.use_cag) {
    const std::size_t hidden = config.attention_hidden();
    p.cag = typename NeckParams<T>::Attention{dense(c, hidden), dense(hidden, c), dense(c, hidden),
                                              dense(hidden, c)};
  }
  if (init == ParamInit::seeded_uniform) {
    Rng rng(seed);
    p.for_each_layer([&](const LayerInfo&, auto& layer) { layer.init_uniform(rng); });
  }
  return p;
}

// Visits fn(name, span) over every weight and bias buffer in layer order.
template <typename T, typename Fn>
void for_each_parameter(NeckParams<T>& params, Fn&& fn) {
  params.for_each_layer([&](const LayerInfo& info, auto& layer) { layer.for_each_parameter(info.name, fn); });
}

template <typename U, typename T>
NeckParams<U> params_cast(const NeckParams<T>& params) {
  return params.template transform<ConvSpec<U>, LinearSpec<U>>(
      [](const LayerInfo&, const auto& layer) { return layer.template cast<U>(); });
}

// Number of scalars actually held in the weight and bias buffers.
template <typename T>
std::size_t allocated_scalars(const NeckParams<T>& params) {
  std::size_t total = 0;
  params.for_each_layer([&](const LayerInfo&, const auto& layer) {
    total += layer.weights.numel() + layer.bias.size();
  });
  return total;
}

}  // namespace cefpn
