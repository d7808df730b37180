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
#include <cstdio>
#include <sstream>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cefpn/backbone.hpp"
#include "cefpn/cost_model.hpp"
#include "cefpn/gradcheck.hpp"
#include "cefpn/neck.hpp"

namespace cefpn {

enum class Suite { forward, gradcheck, cost, all };
enum class Precision { double_precision, single_precision };

inline std::string to_string(Suite s) {
  switch (s) {
    case Suite::forward: return "forward";
    case Suite::gradcheck: return "gradcheck";
    case Suite::cost: return "cost";
    case Suite::all: return "all";
  }
  return "?";
}

inline Suite parse_suite(const std::string& s) {
  if (s == "forward") return Suite::forward;
  if (s == "gradcheck") return Suite::gradcheck;
  if (s == "cost") return Suite::cost;
  if (s == "all") return Suite::all;
  throw ConfigError("unknown suite '" + s + "' (expected forward, gradcheck, cost or all)");
}

// Everything a harness run depends on. The JSON form (to_json / from_json)
// is echoed into every report and accepted back as a config file.
struct RunConfig {
  std::uint64_t seed = 0;
  NeckConfig neck = NeckConfig::cefpn(16);
  Geometry geometry{1, 64, 64};
  Suite suite = Suite::all;
  int mac_convention = 2;
  BackbonePattern pattern = BackbonePattern::noise;
  Precision precision = Precision::double_precision;
  std::size_t gradcheck_samples = 256;
  bool inject_gradient_fault = false;

  void validate() const {
    neck.validate();
    geometry.validate();
    if (mac_convention != 1 && mac_convention != 2) {
      throw ConfigError("mac convention must be 1 or 2, got " + std::to_string(mac_convention));
    }
  }
};

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"neck", to_json(c.neck)},
          {"geometry", to_json(c.geometry)},
          {"suite", to_string(c.suite)},
          {"mac_convention", c.mac_convention},
          {"pattern", to_string(c.pattern)},
          {"precision", c.precision == Precision::double_precision ? "double" : "single"},
          {"gradcheck_samples", c.gradcheck_samples},
          {"inject_gradient_fault", c.inject_gradient_fault}};
}

// Reads the to_json layout; absent keys keep their current values.
inline void from_json(const nlohmann::json& j, RunConfig& c) {
  try {
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("neck")) {
      const auto& n = j.at("neck");
      if (n.contains("base_channel")) c.neck.base_channel = n.at("base_channel").get<std::size_t>();
      if (n.contains("ssf")) c.neck.use_ssf = n.at("ssf").get<bool>();
      if (n.contains("ssf_scheme")) c.neck.ssf_scheme = parse_ssf_scheme(n.at("ssf_scheme").get<std::string>());
      if (n.contains("sce")) c.neck.use_sce = n.at("sce").get<bool>();
      if (n.contains("cag")) c.neck.use_cag = n.at("cag").get<bool>();
      if (n.contains("include_f5_p5")) c.neck.include_f5_p5 = n.at("include_f5_p5").get<bool>();
      if (n.contains("attention_reduction")) c.neck.attention_reduction = n.at("attention_reduction").get<std::size_t>();
      if (n.contains("upscale")) c.neck.upscale = n.at("upscale").get<int>();
      if (n.contains("interpolation") && n.at("interpolation").get<std::string>() != "nearest") {
        throw ConfigError("only nearest interpolation is supported");
      }
      if (n.contains("bias")) c.neck.bias_enabled = n.at("bias").get<bool>();
    }
    if (j.contains("geometry")) {
      const auto& g = j.at("geometry");
      if (g.contains("batch")) c.geometry.batch = g.at("batch").get<std::size_t>();
      if (g.contains("height")) c.geometry.height = g.at("height").get<std::size_t>();
      if (g.contains("width")) c.geometry.width = g.at("width").get<std::size_t>();
    }
    if (j.contains("suite")) c.suite = parse_suite(j.at("suite").get<std::string>());
    if (j.contains("mac_convention")) c.mac_convention = j.at("mac_convention").get<int>();
    if (j.contains("pattern")) {
      const auto p = j.at("pattern").get<std::string>();
      if (p != "noise" && p != "ramp") throw ConfigError("unknown pattern '" + p + "'");
      c.pattern = p == "noise" ? BackbonePattern::noise : BackbonePattern::ramp;
    }
    if (j.contains("precision")) {
      const auto p = j.at("precision").get<std::string>();
      if (p != "double" && p != "single") throw ConfigError("unknown precision '" + p + "'");
      c.precision = p == "double" ? Precision::double_precision : Precision::single_precision;
    }
    if (j.contains("gradcheck_samples")) c.gradcheck_samples = j.at("gradcheck_samples").get<std::size_t>();
    if (j.contains("inject_gradient_fault")) c.inject_gradient_fault = j.at("inject_gradient_fault").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config file: ") + e.what());
  }
}

// Outcome of one suite: a JSON section, a human-readable block, and a verdict.
struct SuiteReport {
  nlohmann::ordered_json json;
  std::string text;
  bool passed = true;
};

namespace detail {

template <typename T>
SuiteReport run_forward_typed(const RunConfig& config, const std::optional<NeckParams<T>>& params_override,
                              const ForwardOptions<T>& options) {
  const auto params = params_override ? *params_override : make_params<T>(config.neck, config.seed);
  const auto backbone = synthetic_backbone<T>(config.neck, config.geometry, config.pattern, config.seed + 1);
  const auto out = cefpn_forward(backbone, params, config.neck, options);

  SuiteReport r;
  r.json["levels"] = nlohmann::ordered_json::array();
  std::ostringstream text;
  text << "# forward  (seed " << config.seed << ", c=" << config.neck.base_channel << ", " << config.geometry.height
       << "x" << config.geometry.width << ")\n";
  for (int i = 2; i <= 5; ++i) {
    const auto& t = out.level(i);
    const std::size_t stride = std::size_t{1} << i;
    const auto s = stats(t);
    const bool ok = t.c() == config.neck.base_channel && t.n() == config.geometry.batch &&
                    t.h() == config.geometry.height / stride && t.w() == config.geometry.width / stride;
    r.passed = r.passed && ok;
    r.json["levels"].push_back({{"name", "R" + std::to_string(i)},
                                {"shape", {t.n(), t.c(), t.h(), t.w()}},
                                {"stride", stride},
                                {"min", s.min},
                                {"max", s.max},
                                {"mean", s.mean},
                                {"shape_ok", ok}});
    text << "R" << i << "  shape " << t.shape() << "  stride " << stride << "  min " << s.min << "  max " << s.max
         << "  mean " << s.mean << (ok ? "" : "  SHAPE MISMATCH") << '\n';
  }
  if (out.integration) {
    const auto s = stats(*out.integration);
    const auto& t = *out.integration;
    r.json["integration"] = {{"shape", {t.n(), t.c(), t.h(), t.w()}}, {"min", s.min}, {"max", s.max}, {"mean", s.mean}};
  }
  if (out.attention) {
    const auto s = stats(*out.attention);
    r.json["attention"] = {{"min", s.min}, {"max", s.max}, {"mean", s.mean}};
  }
  r.json["passed"] = r.passed;
  r.text = text.str();
  return r;
}

}  // namespace detail

// Runs the neck on a synthetic backbone and summarizes every output level.
inline SuiteReport run_forward(const RunConfig& config) {
  config.validate();
  if (config.precision == Precision::single_precision) return detail::run_forward_typed<float>(config, std::nullopt, {});
  return detail::run_forward_typed<double>(config, std::nullopt, {});
}

// Same, with explicit parameters and forward options (used for fixtures).
template <typename T>
SuiteReport run_forward(const RunConfig& config, const NeckParams<T>& params, const ForwardOptions<T>& options = {}) {
  config.validate();
  return detail::run_forward_typed<T>(config, params, options);
}

inline SuiteReport run_gradcheck(const RunConfig& config) {
  config.validate();
  if (config.precision != Precision::double_precision) {
    throw ConfigError("gradcheck requires double precision");
  }
  gradcheck::Options opt;
  opt.inject_fault = config.inject_gradient_fault;

  auto results = gradcheck::check_all_ops(config.seed, opt);
  const auto e2e = gradcheck::check_neck(config.neck, config.geometry, config.seed, config.gradcheck_samples, 32, opt);
  results.push_back(e2e.inputs);
  results.push_back(e2e.parameters);
  std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.name < b.name; });

  SuiteReport r;
  r.json["tolerance"] = opt.tolerance;
  r.json["step"] = opt.step;
  r.json["operations"] = nlohmann::ordered_json::array();
  std::ostringstream text;
  text << "# gradcheck  (central differences, step " << opt.step << ", tolerance " << opt.tolerance << ")\n";
  for (const auto& res : results) {
    r.passed = r.passed && res.passed;
    r.json["operations"].push_back({{"name", res.name},
                                    {"checked", res.checked},
                                    {"max_rel_error", res.max_rel_error},
                                    {"passed", res.passed}});
    char line[160];
    std::snprintf(line, sizeof(line), "%-22s %6zu checked  max rel err %.3e  %s\n", res.name.c_str(), res.checked,
                  res.max_rel_error, res.passed ? "PASS" : "FAIL");
    text << line;
  }
  r.json["passed"] = r.passed;
  r.text = text.str();
  return r;
}

// Cost reports for the FPN baseline, each single-module variant and the full
// neck, plus deltas against the baseline.
inline SuiteReport run_cost(const RunConfig& config) {
  config.validate();
  const auto variants =
      ablation_variants(config.neck.base_channel, config.neck.attention_reduction, config.neck.bias_enabled);
  std::vector<CostReport> reports;
  for (const auto& [name, cfg] : variants) {
    reports.push_back(count_flops(cfg, config.geometry, config.mac_convention, name));
  }

  SuiteReport r;
  r.json["reports"] = nlohmann::ordered_json::array();
  r.json["deltas"] = nlohmann::ordered_json::array();
  std::ostringstream text;
  for (const auto& rep : reports) {
    // Subtotals must re-add to the totals.
    std::uint64_t p = 0;
    std::uint64_t f = 0;
    for (const auto& t : rep.subtotals()) p += t.params, f += t.flops;
    r.passed = r.passed && p == rep.total_params() && f == rep.layer_flops() + rep.elementwise_flops();
    r.json["reports"].push_back(to_json(rep));
    text << to_table(rep) << '\n';
  }
  text << "# deltas vs baseline\n";
  char line[200];
  std::snprintf(line, sizeof(line), "%-16s %14s %18s %18s\n", "variant", "params", "layer_flops", "elementwise_flops");
  text << line;
  for (const auto& rep : reports) {
    const auto d = compare_to_baseline(rep, reports.front());
    r.json["deltas"].push_back(to_json(d));
    std::snprintf(line, sizeof(line), "%-16s %14lld %18lld %18lld\n", d.variant.c_str(),
                  static_cast<long long>(d.params), static_cast<long long>(d.layer_flops),
                  static_cast<long long>(d.elementwise_flops));
    text << line;
  }
  r.json["passed"] = r.passed;
  r.text = text.str();
  return r;
}

struct RunOutcome {
  nlohmann::ordered_json report;
  std::string text;
  bool passed = true;
};

// Runs the selected suites. The report carries the seed and a config echo
// and nothing run-dependent (no timings, no paths).
inline RunOutcome run(const RunConfig& config) {
  config.validate();
  RunOutcome out;
  out.report["tool"] = "cefpn";
  out.report["seed"] = config.seed;
  out.report["config"] = to_json(config);
  auto take = [&](const char* key, SuiteReport s) {
    out.report[key] = std::move(s.json);
    out.text += s.text;
    out.passed = out.passed && s.passed;
  };
  const bool all = config.suite == Suite::all;
  if (all || config.suite == Suite::forward) take("forward", run_forward(config));
  if (all || config.suite == Suite::gradcheck) take("gradcheck", run_gradcheck(config));
  if (all || config.suite == Suite::cost) take("cost", run_cost(config));
  out.report["passed"] = out.passed;
  return out;
}

}  // namespace cefpn
