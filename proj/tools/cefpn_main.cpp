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

// cefpn: command-line harness for the neck. Runs forward passes on synthetic
// backbones, finite-difference gradient checks and cost accounting.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cefpn/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"cefpn: channel-enhancement feature pyramid neck harness"};

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> base_channel;
  std::optional<std::string> scheme;
  std::optional<std::size_t> reduction;
  std::optional<std::size_t> height;
  std::optional<std::size_t> width;
  std::optional<std::size_t> batch;
  std::optional<std::string> suite;
  std::optional<int> mac;
  std::optional<std::string> pattern;
  std::optional<std::string> precision;
  std::optional<std::size_t> samples;
  bool include_f5_p5 = false;
  bool inject_fault = false;
  std::string out_path;

  app.add_option("--config", config_path, "JSON config file (the report's \"config\" echo); flags override it");
  app.add_option("--seed", seed, "Seed for weights and synthetic backbone");
  app.add_option("--base-channel", base_channel, "Pyramid width c (backbone channels c..8c)");
  app.add_option("--ssf-scheme", scheme, "Skip-fusion channel transform")->check(CLI::IsMember({"a", "b", "c"}));
  app.add_option("--reduction", reduction, "Attention reduction ratio");
  app.add_option("--height", height, "Input height (multiple of 32)");
  app.add_option("--width", width, "Input width (multiple of 32)");
  app.add_option("--batch", batch, "Batch size");
  app.add_option("--suite", suite, "Suite to run")->check(CLI::IsMember({"forward", "gradcheck", "cost", "all"}));
  app.add_option("--mac-convention", mac, "FLOPs per multiply-accumulate")->check(CLI::IsMember({1, 2}));
  app.add_option("--pattern", pattern, "Synthetic backbone pattern")->check(CLI::IsMember({"noise", "ramp"}));
  app.add_option("--precision", precision, "Scalar precision")->check(CLI::IsMember({"double", "single"}));
  app.add_option("--gradcheck-samples", samples, "Neck parameters sampled by the gradient check");
  app.add_flag("--include-f5-p5", include_f5_p5, "Keep the F5/P5 nodes");
  app.add_flag("--inject-gradient-fault", inject_fault, "Corrupt one analytic gradient (negative control)");
  app.add_option("--out", out_path, "Write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "cefpn: " << e.what() << '\n';
    return 2;
  }

  cefpn::RunConfig config;
  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw cefpn::ConfigError("cannot open config file " + config_path);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw cefpn::ConfigError("config file " + config_path + ": " + e.what());
      }
      // Accept either a bare config or a full report carrying one.
      cefpn::from_json(j.contains("config") ? j.at("config") : j, config);
    }
    if (seed) config.seed = *seed;
    if (base_channel) config.neck.base_channel = *base_channel;
    if (scheme) config.neck.ssf_scheme = cefpn::parse_ssf_scheme(*scheme);
    if (reduction) config.neck.attention_reduction = *reduction;
    if (height) config.geometry.height = *height;
    if (width) config.geometry.width = *width;
    if (batch) config.geometry.batch = *batch;
    if (suite) config.suite = cefpn::parse_suite(*suite);
    if (mac) config.mac_convention = *mac;
    if (pattern) config.pattern = *pattern == "ramp" ? cefpn::BackbonePattern::ramp : cefpn::BackbonePattern::noise;
    if (precision) {
      config.precision =
          *precision == "single" ? cefpn::Precision::single_precision : cefpn::Precision::double_precision;
    }
    if (samples) config.gradcheck_samples = *samples;
    if (include_f5_p5) config.neck.include_f5_p5 = true;
    if (inject_fault) config.inject_gradient_fault = true;

    const auto outcome = cefpn::run(config);
    std::cout << outcome.text;
    if (!out_path.empty()) {
      std::ofstream out(out_path);
      if (!out) throw cefpn::ConfigError("cannot write report to " + out_path);
      out << outcome.report.dump(2) << '\n';
    }
    if (!outcome.passed) {
      std::cerr << "cefpn: one or more suites failed\n";
      return 1;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "cefpn: " << e.what() << '\n';
    return 2;
  }
}
