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
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "cefpn/backbone.hpp"
#include "cefpn/neck.hpp"
#include "cefpn/random.hpp"
#include "cefpn/tape.hpp"

// Central finite-difference checks of the tape's analytic gradients.
namespace cefpn::gradcheck {

inline constexpr double kStep = 1e-6;
inline constexpr double kTolerance = 1e-4;
// Denominator floor of the relative error, so that gradients which are zero
// up to round-off do not divide by ~0.
inline constexpr double kFloor = 1e-6;

inline double relative_error(double analytic, double numeric, double floor = kFloor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct Result {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

// Fault injection for negative-control runs: the analytic gradient of the
// first checked element is scaled by (1 + 1e-2) before comparison.
struct Options {
  double step = kStep;
  double tolerance = kTolerance;
  bool inject_fault = false;
};

// Builds a computation from input leaves; returns the output handle.
using Builder = std::function<Var(GradTape<double>&, const std::vector<Var>&)>;

// Checks every element of every input against central differences of
// loss = sum(out * projection) for a fixed random projection.
inline Result check_op(const std::string& name, const std::vector<Tensor<double>>& inputs, const Builder& build,
                       std::uint64_t seed, const Options& opt = {}) {
  Rng rng(seed);
  Tensor<double> projection;
  auto loss_of = [&](const std::vector<Tensor<double>>& xs, GradTape<double>& tape, std::vector<Var>& leaves) {
    leaves.clear();
    for (const auto& x : xs) leaves.push_back(tape.leaf(x, true));
    const Var out = build(tape, leaves);
    if (projection.numel() == 0) projection = random_tensor<double>(tape.value(out).shape(), rng);
    return tape.weighted_sum(out, projection);
  };

  GradTape<double> tape;
  std::vector<Var> leaves;
  const Var loss = loss_of(inputs, tape, leaves);
  const auto grads = tape.backward(loss);

  Result r{name};
  std::vector<Tensor<double>> work = inputs;
  bool first = true;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor<double> analytic = grads.of(leaves[k]);
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      const double orig = work[k][i];
      auto eval = [&](double v) {
        work[k][i] = v;
        GradTape<double> t;
        std::vector<Var> l;
        return t.value(loss_of(work, t, l))[0];
      };
      const double numeric = (eval(orig + opt.step) - eval(orig - opt.step)) / (2.0 * opt.step);
      work[k][i] = orig;
      double a = analytic[i];
      if (opt.inject_fault && first) a = a * (1.0 + 1e-2) + 1e-2;
      first = false;
      r.max_rel_error = std::max(r.max_rel_error, relative_error(a, numeric));
      ++r.checked;
    }
  }
  r.passed = r.max_rel_error < opt.tolerance;
  return r;
}

// Values spread over [-1, 1] with pairwise gaps far above the FD step, so
// max/relu never switch branch under perturbation.
inline Tensor<double> tie_free_tensor(Shape shape, Rng& rng) {
  const std::size_t n = shape.numel();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng.range(0, i - 1))]);
  Tensor<double> t(shape);
  const double spacing = 2.0 / static_cast<double>(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    // Offset by half a step so nothing sits at exactly zero.
    t[i] = -1.0 + spacing * (static_cast<double>(order[i]) + 0.5) + spacing * 0.25 * rng.unit();
  }
  return t;
}

// One check per tensor-core operation on small random inputs.
inline std::vector<Result> check_all_ops(std::uint64_t seed, const Options& opt = {}) {
  Rng rng(seed);
  std::vector<Result> out;
  auto rnd = [&](Shape s) { return random_tensor<double>(s, rng); };
  auto distinct = [&](Shape s) { return tie_free_tensor(s, rng); };
  auto next_seed = [&] { return rng.next(); };

  out.push_back(check_op("conv2d_3x3", {rnd({1, 3, 6, 5}), rnd({4, 3, 3, 3}), rnd({1, 4, 1, 1})},
                         [](GradTape<double>& t, const std::vector<Var>& v) { return t.conv2d(v[0], v[1], v[2], 1, 1); },
                         next_seed(), opt));
  out.push_back(check_op("conv2d_1x1", {rnd({2, 4, 3, 3}), rnd({2, 4, 1, 1}), rnd({1, 2, 1, 1})},
                         [](GradTape<double>& t, const std::vector<Var>& v) { return t.conv2d(v[0], v[1], v[2], 1, 0); },
                         next_seed(), opt));
  out.push_back(check_op("conv2d_strided", {rnd({1, 2, 7, 6}), rnd({3, 2, 3, 3})},
                         [](GradTape<double>& t, const std::vector<Var>& v) {
                           return t.conv2d(v[0], v[1], std::nullopt, 2, 1);
                         },
                         next_seed(), opt));
  out.push_back(check_op("max_pool2d", {distinct({1, 4, 8, 8})},
                         [](GradTape<double>& t, const std::vector<Var>& v) { return t.max_pool2d(v[0], 3, 2, 1); },
                         next_seed(), opt));
  out.push_back(check_op("global_avg_pool", {rnd({2, 3, 4, 5})},
                         [](GradTape<double>& t, const std::vector<Var>& v) { return t.global_avg_pool(v[0]); },
                         next_seed(), opt));
  out.push_back(check_op("global_max_pool", {distinct({2, 3, 4, 5})},
                         [](GradTape<double>& t, const std::vector<Var>& v) { return t.global_max_pool(v[0]); },
                         next_seed(), opt));
  out.push_back(check_op("interpolate_nearest", {rnd({1, 3, 3, 4})},
                         [](GradTape<double>& t, const std::vector<Var>& v) { return t.interpolate_nearest(v[0], 2); },
                         next_seed(), opt));
  out.push_back(check_op("linear", {rnd({2, 6, 1, 1}), rnd({4, 6, 1, 1}), rnd({1, 4, 1, 1})},
                         [](GradTape<double>& t, const std::vector<Var>& v) { return t.linear(v[0], v[1], v[2]); },
                         next_seed(), opt));
  out.push_back(check_op("sigmoid", {rnd({1, 4, 4, 4})},
                         [](GradTape<double>& t, const std::vector<Var>& v) { return t.sigmoid(v[0]); }, next_seed(),
                         opt));
  out.push_back(check_op("relu", {distinct({1, 4, 4, 4})},
                         [](GradTape<double>& t, const std::vector<Var>& v) { return t.relu(v[0]); }, next_seed(),
                         opt));
  out.push_back(check_op("add", {rnd({1, 3, 4, 4}), rnd({1, 3, 4, 4})},
                         [](GradTape<double>& t, const std::vector<Var>& v) { return t.add(v[0], v[1]); }, next_seed(),
                         opt));
  out.push_back(check_op("scale", {rnd({1, 3, 4, 4})},
                         [](GradTape<double>& t, const std::vector<Var>& v) { return t.scale(v[0], 0.37); },
                         next_seed(), opt));
  out.push_back(check_op("mul_channelwise", {rnd({2, 4, 3, 3}), rnd({2, 4, 1, 1})},
                         [](GradTape<double>& t, const std::vector<Var>& v) { return t.mul_channelwise(v[0], v[1]); },
                         next_seed(), opt));
  out.push_back(check_op("pixel_shuffle", {rnd({1, 8, 3, 2})},
                         [](GradTape<double>& t, const std::vector<Var>& v) { return t.pixel_shuffle(v[0], 2); },
                         next_seed(), opt));
  out.push_back(check_op("pixel_unshuffle", {rnd({1, 2, 4, 6})},
                         [](GradTape<double>& t, const std::vector<Var>& v) { return t.pixel_unshuffle(v[0], 2); },
                         next_seed(), opt));
  out.push_back(check_op("slice_channels", {rnd({2, 6, 2, 3})},
                         [](GradTape<double>& t, const std::vector<Var>& v) { return t.slice_channels(v[0], 2, 3); },
                         next_seed(), opt));
  out.push_back(check_op("broadcast_spatial", {rnd({2, 3, 1, 1})},
                         [](GradTape<double>& t, const std::vector<Var>& v) { return t.broadcast_spatial(v[0], 3, 4); },
                         next_seed(), opt));
  out.push_back(check_op("crop_spatial", {rnd({1, 2, 5, 6})},
                         [](GradTape<double>& t, const std::vector<Var>& v) { return t.crop_spatial(v[0], 4, 4); },
                         next_seed(), opt));
  std::sort(out.begin(), out.end(), [](const Result& a, const Result& b) { return a.name < b.name; });
  return out;
}

struct EndToEndResult {
  Result parameters;  // sampled neck parameters
  Result inputs;      // sampled backbone elements
};

// Finite-difference check of the full neck w.r.t. `param_samples` parameter
// scalars (at least one per buffer) and `input_samples` backbone scalars.
// The loss is a fixed random projection of R2..R5. Analytic gradients in
// double, finite differences evaluated in long double.
inline EndToEndResult check_neck(const NeckConfig& config, const Geometry& geometry, std::uint64_t seed,
                                 std::size_t param_samples, std::size_t input_samples, const Options& opt = {}) {
  using Wide = long double;
  auto params = make_params<double>(config, seed);
  const auto backbone = synthetic_backbone<double>(config, geometry, BackbonePattern::noise, seed + 1);
  Rng rng(seed + 2);

  GradTape<double> tape;
  std::array<Var, 4> in;
  for (int i = 2; i <= 5; ++i) in[static_cast<std::size_t>(i - 2)] = tape.leaf(backbone.level(i), true);
  const auto vars = bind(tape, params, true);
  const auto pvars = parameter_vars(vars);
  const auto graph = cefpn_forward(tape, in, vars, config);
  std::array<Tensor<double>, 4> projections;
  std::optional<Var> loss;
  for (std::size_t k = 0; k < 4; ++k) {
    projections[k] = random_tensor<double>(tape.value(graph.outputs[k]).shape(), rng);
    const Var part = tape.weighted_sum(graph.outputs[k], projections[k]);
    loss = loss ? tape.add(*loss, part) : part;
  }
  const auto grads = tape.backward(*loss);

  auto wide_params = params_cast<Wide>(params);
  BackbonePyramid<Wide> wide_backbone;
  for (std::size_t k = 0; k < 4; ++k) wide_backbone.levels[k] = tensor_cast<Wide>(backbone.levels[k]);
  std::array<Tensor<Wide>, 4> wide_projections;
  for (std::size_t k = 0; k < 4; ++k) wide_projections[k] = tensor_cast<Wide>(projections[k]);
  auto evaluate = [&]() {
    const auto out = cefpn_forward(wide_backbone, wide_params, config);
    Wide total = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const auto v = out.levels[k].data();
      const auto w = wide_projections[k].data();
      for (std::size_t i = 0; i < v.size(); ++i) total += v[i] * w[i];
    }
    return total;
  };
  auto fd = [&](Wide& slot) {
    const Wide orig = slot;
    const Wide h = static_cast<Wide>(opt.step);
    slot = orig + h;
    const Wide up = evaluate();
    slot = orig - h;
    const Wide down = evaluate();
    slot = orig;
    return static_cast<double>((up - down) / (2 * h));
  };

  std::vector<std::span<double>> buffers;
  for_each_parameter(params, [&](const std::string&, std::span<double> s) { buffers.push_back(s); });
  std::vector<std::span<Wide>> wide_buffers;
  for_each_parameter(wide_params, [&](const std::string&, std::span<Wide> s) { wide_buffers.push_back(s); });
  std::vector<Tensor<double>> param_grads;
  for (Var v : pvars) param_grads.push_back(grads.of(v));

  // Gather (buffer, element) sample sites, at least one per buffer.
  std::set<std::pair<std::size_t, std::size_t>> sites;
  for (std::size_t b = 0; b < buffers.size(); ++b) {
    sites.emplace(b, static_cast<std::size_t>(rng.range(0, static_cast<std::int64_t>(buffers[b].size()) - 1)));
  }
  std::size_t total = 0;
  for (const auto& b : buffers) total += b.size();
  const std::size_t wanted = std::min(total, std::max(param_samples, buffers.size()));
  while (sites.size() < wanted) {
    const auto b = static_cast<std::size_t>(rng.range(0, static_cast<std::int64_t>(buffers.size()) - 1));
    sites.emplace(b, static_cast<std::size_t>(rng.range(0, static_cast<std::int64_t>(buffers[b].size()) - 1)));
  }

  EndToEndResult r{{"neck.parameters"}, {"neck.inputs"}};
  bool first = true;
  for (const auto& [b, i] : sites) {
    double a = param_grads[b][i];
    if (opt.inject_fault && first) a = a * (1.0 + 1e-2) + 1e-2;
    first = false;
    const double n = fd(wide_buffers[b][i]);
    r.parameters.max_rel_error = std::max(r.parameters.max_rel_error, relative_error(a, n));
    ++r.parameters.checked;
  }
  for (std::size_t s = 0; s < input_samples; ++s) {
    const auto level = static_cast<std::size_t>(rng.range(0, 3));
    auto& t = wide_backbone.levels[level];
    const auto i = static_cast<std::size_t>(rng.range(0, static_cast<std::int64_t>(t.numel()) - 1));
    const double a = grads.of(in[level])[i];
    const double n = fd(t[i]);
    r.inputs.max_rel_error = std::max(r.inputs.max_rel_error, relative_error(a, n));
    ++r.inputs.checked;
  }
  r.parameters.passed = r.parameters.max_rel_error < opt.tolerance;
  r.inputs.passed = r.inputs.max_rel_error < opt.tolerance;
  return r;
}

}  // namespace cefpn::gradcheck
