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

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "cefpn/errors.hpp"

namespace cefpn {

// Channel transformation applied to the 8c-channel source before the 2x
// pixel shuffle in sub-pixel skip fusion.
enum class SsfScheme {
  a,  // 1x1 convolution 8c -> 4c
  b,  // keep the first 4c channels
  c,  // shuffle both 4c halves and sum
};

inline std::string_view to_string(SsfScheme s) {
  switch (s) {
    case SsfScheme::a: return "a";
    case SsfScheme::b: return "b";
    case SsfScheme::c: return "c";
  }
  return "?";
}

inline SsfScheme parse_ssf_scheme(std::string_view s) {
  if (s == "a") return SsfScheme::a;
  if (s == "b") return SsfScheme::b;
  if (s == "c") return SsfScheme::c;
  throw ConfigError("unknown ssf scheme '" + std::string(s) + "' (expected a, b or c)");
}

enum class Interpolation { nearest };

// Architecture hyperparameters. The backbone is assumed to produce channels
// {c, 2c, 4c, 8c} at strides {4, 8, 16, 32} for base channel c, and every
// pyramid level has width c.
struct NeckConfig {
  std::size_t base_channel = 256;
  bool use_ssf = true;
  SsfScheme ssf_scheme = SsfScheme::c;
  bool use_sce = true;
  bool use_cag = true;
  bool include_f5_p5 = false;
  std::size_t attention_reduction = 32;
  int upscale = 2;
  Interpolation interpolation = Interpolation::nearest;
  bool bias_enabled = true;

  // Full neck: scheme-c fusion, context enhancement, attention, no F5/P5.
  static NeckConfig cefpn(std::size_t c) {
    NeckConfig cfg;
    cfg.base_channel = c;
    return cfg;
  }

  // Plain FPN over C2..C5 with P2..P5.
  static NeckConfig fpn_baseline(std::size_t c) {
    NeckConfig cfg;
    cfg.base_channel = c;
    cfg.use_ssf = false;
    cfg.use_sce = false;
    cfg.use_cag = false;
    cfg.include_f5_p5 = true;
    return cfg;
  }

  std::size_t backbone_channels(int level) const { return base_channel << (level - 2); }
  std::size_t attention_hidden() const { return std::max<std::size_t>(1, base_channel / attention_reduction); }
  bool needs_integration_map() const { return use_sce || use_cag; }

  void validate() const {
    if (base_channel == 0 || base_channel % 4 != 0) {
      throw ConfigError("base channel " + std::to_string(base_channel) + " must be a positive multiple of 4");
    }
    if (upscale != 2) throw ConfigError("fusion upscale factor must be 2, got " + std::to_string(upscale));
    if (use_cag) {
      if (attention_reduction == 0) throw ConfigError("attention reduction must be positive");
    }
  }
};

// Notional input image extents.
struct Geometry {
  std::size_t batch = 1;
  std::size_t height = 64;
  std::size_t width = 64;

  void validate() const {
    if (batch == 0) throw ConfigError("batch must be >= 1");
    if (height == 0 || width == 0 || height % 32 != 0 || width % 32 != 0) {
      throw ConfigError("input geometry " + std::to_string(height) + "x" + std::to_string(width) +
                        " must be positive and divisible by 32");
    }
  }

  friend bool operator==(const Geometry&, const Geometry&) = default;
};

}  // namespace cefpn
