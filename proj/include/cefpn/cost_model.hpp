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
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cefpn/errors.hpp"
#include "cefpn/neck_config.hpp"
#include "cefpn/neck_params.hpp"

// Static parameter and FLOP accounting for the neck.
//
// Conventions:
//   - convolution: mac * out * in * k^2 * h_out * w_out per sample;
//   - linear: mac * out * in per sample;
//   - elementwise add / mul: 1 per output element, independent of mac;
//   - pooling, interpolation, pixel shuffle, slicing, cropping, broadcasting
//     and activations: 0.
// Layer FLOPs (conv + linear) and elementwise FLOPs are totalled separately.
namespace cefpn {

enum class EntryKind { conv, linear, elementwise };

inline const char* to_string(EntryKind k) {
  switch (k) {
    case EntryKind::conv: return "conv";
    case EntryKind::linear: return "linear";
    case EntryKind::elementwise: return "elementwise";
  }
  return "?";
}

struct CostEntry {
  std::string layer;
  Module module;
  EntryKind kind;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

struct AccountingConvention {
  int mac_flops = 2;  // FLOPs per multiply-accumulate: 1 or 2
  bool bias_included = true;
  std::optional<Geometry> geometry;  // unset when only parameters were counted

  friend bool operator==(const AccountingConvention&, const AccountingConvention&) = default;
};

struct ModuleTotals {
  Module module;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

struct CostReport {
  std::string name;
  NeckConfig config;
  AccountingConvention convention;
  std::vector<CostEntry> entries;

  std::uint64_t total_params() const {
    std::uint64_t s = 0;
    for (const auto& e : entries) s += e.params;
    return s;
  }
  std::uint64_t layer_flops() const { return flops_of(false); }
  std::uint64_t elementwise_flops() const { return flops_of(true); }

  // Subtotals in Module enum order; modules without entries are omitted.
  std::vector<ModuleTotals> subtotals() const {
    std::vector<ModuleTotals> out;
    for (Module m : all_modules()) {
      ModuleTotals t{m};
      bool any = false;
      for (const auto& e : entries) {
        if (e.module != m) continue;
        any = true;
        t.params += e.params;
        t.flops += e.flops;
      }
      if (any) out.push_back(t);
    }
    return out;
  }

  const CostEntry* find(const std::string& layer) const {
    for (const auto& e : entries) {
      if (e.layer == layer) return &e;
    }
    return nullptr;
  }

  static constexpr std::array<Module, 6> all_modules() {
    return {Module::laterals, Module::post_merge, Module::ssf, Module::sce, Module::integration, Module::cag};
  }

 private:
  std::uint64_t flops_of(bool elementwise) const {
    std::uint64_t s = 0;
    for (const auto& e : entries) {
      if ((e.kind == EntryKind::elementwise) == elementwise) s += e.flops;
    }
    return s;
  }
};

namespace detail {

inline std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

inline std::uint64_t area(const Geometry& g, std::uint64_t stride) {
  if (stride == 0) return 1;
  return ceil_div(g.height, stride) * ceil_div(g.width, stride);
}

template <typename T>
std::uint64_t layer_flops(const ConvSpec<T>& s, const LayerInfo& info, const Geometry& g, int mac) {
  const auto k = static_cast<std::uint64_t>(s.kernel);
  return static_cast<std::uint64_t>(mac) * s.out_channels * s.in_channels * k * k * area(g, info.feature_stride) *
         g.batch;
}

template <typename T>
std::uint64_t layer_flops(const LinearSpec<T>& s, const LayerInfo&, const Geometry& g, int mac) {
  return static_cast<std::uint64_t>(mac) * s.out_features * s.in_features * g.batch;
}

template <typename T>
EntryKind kind_of(const ConvSpec<T>&) {
  return EntryKind::conv;
}
template <typename T>
EntryKind kind_of(const LinearSpec<T>&) {
  return EntryKind::linear;
}

// Adds and multiplies performed between layers.
inline void elementwise_entries(const NeckConfig& cfg, const Geometry& g, std::vector<CostEntry>& out) {
  const std::uint64_t c = cfg.base_channel;
  const std::uint64_t n = g.batch;
  const int levels = cfg.include_f5_p5 ? 4 : 3;
  auto push = [&](std::string name, Module m, std::uint64_t flops) {
    out.push_back({std::move(name), m, EntryKind::elementwise, 0, flops});
  };
  const auto level_area = [&](int level) { return area(g, std::uint64_t{1} << level); };
  for (int level = 2; level < levels + 1; ++level) {
    push("topdown.add.p" + std::to_string(level), Module::post_merge, n * c * level_area(level));
  }
  if (cfg.use_ssf) {
    push("ssf.add.f4", Module::ssf, n * c * level_area(4) * (cfg.ssf_scheme == SsfScheme::c ? 2 : 1));
    push("ssf.add.f3", Module::ssf, n * c * level_area(3));
  }
  if (cfg.use_sce) push("sce.sum", Module::sce, 2 * n * c * level_area(4));
  if (cfg.needs_integration_map()) {
    push("integration.mean", Module::integration, static_cast<std::uint64_t>(levels) * n * c * level_area(4));
    if (cfg.use_sce) push("integration.add_context", Module::integration, n * c * level_area(4));
  }
  if (cfg.use_cag) {
    push("cag.add", Module::cag, n * c);
    std::uint64_t outputs = 0;
    for (int level = 2; level <= 5; ++level) outputs += level_area(level);
    push("cag.apply", Module::cag, n * c * outputs);
  }
}

}  // namespace detail

// Parameter counts of every allocated layer. flops are left at 0.
template <typename T>
CostReport count_params(const NeckParams<T>& params, const NeckConfig& config, std::string name = "") {
  CostReport r{std::move(name), config, {2, config.bias_enabled, std::nullopt}, {}};
  params.for_each_layer([&](const LayerInfo& info, const auto& layer) {
    r.entries.push_back({info.name, info.module, detail::kind_of(layer), layer.param_count(), 0});
  });
  return r;
}

// Parameter and FLOP counts at the given input geometry.
template <typename T>
CostReport count_flops(const NeckParams<T>& params, const NeckConfig& config, const Geometry& geometry,
                       int mac_flops = 2, std::string name = "") {
  geometry.validate();
  if (mac_flops != 1 && mac_flops != 2) {
    throw ConfigError("mac convention must be 1 or 2, got " + std::to_string(mac_flops));
  }
  CostReport r{std::move(name), config, {mac_flops, config.bias_enabled, geometry}, {}};
  params.for_each_layer([&](const LayerInfo& info, const auto& layer) {
    r.entries.push_back({info.name, info.module, detail::kind_of(layer), layer.param_count(),
                         detail::layer_flops(layer, info, geometry, mac_flops)});
  });
  detail::elementwise_entries(config, geometry, r.entries);
  return r;
}

// Accounting straight from a configuration, without allocating weights.
inline CostReport count_params(const NeckConfig& config, std::string name = "") {
  return count_params(make_params<float>(config, 0, ParamInit::shape_only), config, std::move(name));
}

inline CostReport count_flops(const NeckConfig& config, const Geometry& geometry, int mac_flops = 2,
                              std::string name = "") {
  return count_flops(make_params<float>(config, 0, ParamInit::shape_only), config, geometry, mac_flops,
                     std::move(name));
}

struct ModuleDelta {
  Module module;
  std::int64_t params = 0;
  std::int64_t flops = 0;
};

struct DeltaSummary {
  std::string variant;
  std::string baseline;
  std::vector<ModuleDelta> modules;
  std::int64_t params = 0;
  std::int64_t layer_flops = 0;
  std::int64_t elementwise_flops = 0;
};

inline DeltaSummary compare_to_baseline(const CostReport& report, const CostReport& baseline) {
  if (report.config.base_channel != baseline.config.base_channel) {
    throw ContractError("compare_to_baseline: width " + std::to_string(report.config.base_channel) + " vs " +
                        std::to_string(baseline.config.base_channel));
  }
  if (!(report.convention == baseline.convention)) {
    throw ContractError("compare_to_baseline: reports use different geometry or accounting conventions");
  }
  auto diff = [](std::uint64_t a, std::uint64_t b) { return static_cast<std::int64_t>(a) - static_cast<std::int64_t>(b); };
  DeltaSummary d{report.name, baseline.name, {}, diff(report.total_params(), baseline.total_params()),
                 diff(report.layer_flops(), baseline.layer_flops()),
                 diff(report.elementwise_flops(), baseline.elementwise_flops())};
  const auto a = report.subtotals();
  const auto b = baseline.subtotals();
  for (Module m : CostReport::all_modules()) {
    ModuleTotals ta{m}, tb{m};
    bool any = false;
    for (const auto& t : a) {
      if (t.module == m) ta = t, any = true;
    }
    for (const auto& t : b) {
      if (t.module == m) tb = t, any = true;
    }
    if (any) d.modules.push_back({m, diff(ta.params, tb.params), diff(ta.flops, tb.flops)});
  }
  return d;
}

// Ablation variants at base channel c: the FPN baseline, each module on
// its own, and the full neck.
inline std::vector<std::pair<std::string, NeckConfig>> ablation_variants(std::size_t c, std::size_t reduction = 32,
                                                                         bool bias = true) {
  std::vector<std::pair<std::string, NeckConfig>> out;
  NeckConfig base = NeckConfig::fpn_baseline(c);
  base.attention_reduction = reduction;
  base.bias_enabled = bias;
  out.emplace_back("baseline", base);
  for (SsfScheme s : {SsfScheme::a, SsfScheme::b, SsfScheme::c}) {
    NeckConfig v = base;
    v.use_ssf = true;
    v.ssf_scheme = s;
    out.emplace_back("ssf_" + std::string(to_string(s)), v);
  }
  NeckConfig sce_keep = base;
  sce_keep.use_sce = true;
  out.emplace_back("sce_with_f5_p5", sce_keep);
  NeckConfig sce = sce_keep;
  sce.include_f5_p5 = false;
  out.emplace_back("sce", sce);
  NeckConfig cag = base;
  cag.use_cag = true;
  out.emplace_back("cag", cag);
  NeckConfig all = NeckConfig::cefpn(c);
  all.attention_reduction = reduction;
  all.bias_enabled = bias;
  out.emplace_back("cefpn", all);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization. Field names are part of the report format.

inline nlohmann::ordered_json to_json(const NeckConfig& c) {
  return {{"base_channel", c.base_channel},
          {"ssf", c.use_ssf},
          {"ssf_scheme", std::string(to_string(c.ssf_scheme))},
          {"sce", c.use_sce},
          {"cag", c.use_cag},
          {"include_f5_p5", c.include_f5_p5},
          {"attention_reduction", c.attention_reduction},
          {"upscale", c.upscale},
          {"interpolation", "nearest"},
          {"bias", c.bias_enabled}};
}

inline nlohmann::ordered_json to_json(const Geometry& g) {
  return {{"batch", g.batch}, {"height", g.height}, {"width", g.width}};
}

inline nlohmann::ordered_json to_json(const AccountingConvention& c) {
  nlohmann::ordered_json j{{"mac_flops", c.mac_flops},
                           {"bias_included", c.bias_included},
                           {"elementwise", "add and mul count 1 flop per element"},
                           {"zero_cost", "pooling, interpolation, pixel shuffle, slicing, activations"}};
  j["geometry"] = c.geometry ? to_json(*c.geometry) : nlohmann::ordered_json(nullptr);
  return j;
}

inline nlohmann::ordered_json to_json(const CostReport& r) {
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (const auto& e : r.entries) {
    entries.push_back({{"layer", e.layer},
                       {"module", to_string(e.module)},
                       {"kind", to_string(e.kind)},
                       {"params", e.params},
                       {"flops", e.flops}});
  }
  nlohmann::ordered_json modules = nlohmann::ordered_json::array();
  for (const auto& t : r.subtotals()) {
    modules.push_back({{"module", to_string(t.module)}, {"params", t.params}, {"flops", t.flops}});
  }
  return {{"name", r.name},
          {"convention", to_json(r.convention)},
          {"config", to_json(r.config)},
          {"entries", entries},
          {"modules", modules},
          {"totals",
           {{"params", r.total_params()}, {"layer_flops", r.layer_flops()}, {"elementwise_flops", r.elementwise_flops()}}}};
}

inline nlohmann::ordered_json to_json(const DeltaSummary& d) {
  nlohmann::ordered_json modules = nlohmann::ordered_json::array();
  for (const auto& m : d.modules) {
    modules.push_back({{"module", to_string(m.module)}, {"params", m.params}, {"flops", m.flops}});
  }
  return {{"variant", d.variant},     {"baseline", d.baseline},
          {"modules", modules},       {"params", d.params},
          {"layer_flops", d.layer_flops}, {"elementwise_flops", d.elementwise_flops}};
}

// Fixed-width plain-text rendering: one row per entry, then module subtotals
// and totals.
inline std::string to_table(const CostReport& r) {
  std::ostringstream os;
  os << "# cost report: " << (r.name.empty() ? "neck" : r.name) << "  (mac=" << r.convention.mac_flops
     << ", bias=" << (r.convention.bias_included ? "on" : "off");
  if (r.convention.geometry) {
    const auto& g = *r.convention.geometry;
    os << ", geometry=" << g.batch << "x" << g.height << "x" << g.width;
  }
  os << ")\n";
  os << std::left << std::setw(28) << "layer" << std::setw(13) << "module" << std::setw(12) << "kind" << std::right
     << std::setw(14) << "params" << std::setw(18) << "flops" << '\n';
  for (const auto& e : r.entries) {
    os << std::left << std::setw(28) << e.layer << std::setw(13) << to_string(e.module) << std::setw(12)
       << to_string(e.kind) << std::right << std::setw(14) << e.params << std::setw(18) << e.flops << '\n';
  }
  for (const auto& t : r.subtotals()) {
    os << std::left << std::setw(28) << "subtotal" << std::setw(13) << to_string(t.module) << std::setw(12) << ""
       << std::right << std::setw(14) << t.params << std::setw(18) << t.flops << '\n';
  }
  os << std::left << std::setw(53) << "total params" << std::right << std::setw(14) << r.total_params() << '\n';
  os << std::left << std::setw(67) << "total layer flops" << std::right << std::setw(18) << r.layer_flops() << '\n';
  os << std::left << std::setw(67) << "total elementwise flops" << std::right << std::setw(18)
     << r.elementwise_flops() << '\n';
  return os.str();
}

}  // namespace cefpn
