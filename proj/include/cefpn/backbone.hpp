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
#include <string>

#include "cefpn/errors.hpp"
#include "cefpn/neck_config.hpp"
#include "cefpn/random.hpp"
#include "cefpn/tensor.hpp"

namespace cefpn {

// Backbone outputs C2..C5: strides {4, 8, 16, 32}, channels {c, 2c, 4c, 8c}.
template <typename T>
struct BackbonePyramid {
  std::array<Tensor<T>, 4> levels;

  Tensor<T>& level(int i) { return levels.at(static_cast<std::size_t>(i - 2)); }
  const Tensor<T>& level(int i) const { return levels.at(static_cast<std::size_t>(i - 2)); }

  void validate(const NeckConfig& config) const {
    for (int i = 2; i <= 5; ++i) {
      const auto& t = level(i);
      if (t.c() != config.backbone_channels(i)) {
        throw ConfigError("C" + std::to_string(i) + " has " + std::to_string(t.c()) + " channels, expected " +
                          std::to_string(config.backbone_channels(i)));
      }
      if (t.h() == 0 || t.w() == 0) throw ShapeError("C" + std::to_string(i) + " has an empty spatial extent");
      if (i > 2) {
        const auto& finer = level(i - 1);
        if (finer.n() != t.n() || finer.h() != 2 * t.h() || finer.w() != 2 * t.w()) {
          throw ShapeError("C" + std::to_string(i - 1) + " " + finer.shape().str() + " must be exactly twice C" +
                           std::to_string(i) + " " + t.shape().str() + " spatially");
        }
      }
    }
  }
};

enum class BackbonePattern {
  noise,  // seeded uniform in [-1, 1)
  ramp,   // fixed integer ramp, independent of the seed
};

inline std::string to_string(BackbonePattern p) { return p == BackbonePattern::noise ? "noise" : "ramp"; }

// Value of the ramp pattern at level i, sample b, channel ch, row y, column x.
// Every value is k/8 - 1 for integer k in [0, 16], so it is exact in any
// floating-point type.
inline double ramp_value(int level, std::size_t b, std::size_t ch, std::size_t y, std::size_t x) {
  const std::size_t k = (ch * 7 + y * 3 + x * 5 + static_cast<std::size_t>(level) * 11 + b * 13) % 17;
  return static_cast<double>(k) / 8.0 - 1.0;
}

template <typename T>
BackbonePyramid<T> synthetic_backbone(const NeckConfig& config, const Geometry& geometry,
                                      BackbonePattern pattern, std::uint64_t seed) {
  config.validate();
  geometry.validate();
  Rng rng(seed);
  BackbonePyramid<T> p;
  for (int i = 2; i <= 5; ++i) {
    const std::size_t stride = std::size_t{1} << i;
    Shape s{geometry.batch, config.backbone_channels(i), geometry.height / stride, geometry.width / stride};
    Tensor<T> t(s);
    if (pattern == BackbonePattern::noise) {
      fill_uniform(t, rng, -1.0, 1.0);
    } else {
      for (std::size_t b = 0; b < s.n; ++b)
        for (std::size_t ch = 0; ch < s.c; ++ch)
          for (std::size_t y = 0; y < s.h; ++y)
            for (std::size_t x = 0; x < s.w; ++x) t(b, ch, y, x) = static_cast<T>(ramp_value(i, b, ch, y, x));
    }
    p.level(i) = std::move(t);
  }
  return p;
}

}  // namespace cefpn
