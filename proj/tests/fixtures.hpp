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

#include "cefpn/neck.hpp"

namespace cefpn::fixture {

// Laterals copy the first c backbone channels, post-merge convs pass their
// input through the centre tap, everything else is zero.
inline NeckParams<double> identity_params(const NeckConfig& config) {
  auto p = make_params<double>(config, 0, ParamInit::zeros);
  const std::size_t c = config.base_channel;
  for (auto& l : p.lateral)
    for (std::size_t o = 0; o < c; ++o) l.weights(o, o, 0, 0) = 1.0;
  for (auto& m : p.post_merge)
    for (std::size_t o = 0; o < c; ++o) m.weights(o, o, 1, 1) = 1.0;
  return p;
}

// Ramp input, SSF off, zero SCE, attention forced to ones.
inline NeckConfig ramp_config(std::size_t c) {
  auto cfg = NeckConfig::cefpn(c);
  cfg.use_ssf = false;
  return cfg;
}

inline ForwardOptions<double> unit_attention(std::size_t c) {
  ForwardOptions<double> o;
  o.attention_override = std::vector<double>(c, 1.0);
  return o;
}

}  // namespace cefpn::fixture
