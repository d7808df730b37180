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

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cefpn/errors.hpp"
#include "cefpn/random.hpp"
#include "cefpn/tensor.hpp"

namespace cefpn {

// A k x k convolution layer. Weights have shape (out, in, k, k).
template <typename T>
struct ConvSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  bool bias_enabled = true;
  Tensor<T> weights;
  std::vector<T> bias;

  // Zero-initialized layer with "same" padding, (k - 1) / 2. With
  // allocate == false only the dimensions are recorded (for cost accounting).
  static ConvSpec make(std::size_t in, std::size_t out, int k, bool bias_enabled = true,
                       int stride = 1, bool allocate = true) {
    if (in == 0 || out == 0) throw ConfigError("convolution needs non-zero channel counts");
    if (k < 1 || k % 2 == 0) {
      throw ConfigError("convolution kernel must be odd and positive, got " + std::to_string(k));
    }
    if (stride < 1) throw ConfigError("convolution stride must be >= 1");
    ConvSpec s;
    s.in_channels = in;
    s.out_channels = out;
    s.kernel = k;
    s.stride = stride;
    s.padding = (k - 1) / 2;
    s.bias_enabled = bias_enabled;
    if (allocate) {
      s.weights = Tensor<T>({out, in, static_cast<std::size_t>(k), static_cast<std::size_t>(k)});
      s.bias.assign(bias_enabled ? out : 0, T{0});
    }
    return s;
  }

  template <typename U>
  ConvSpec<U> cast() const {
    ConvSpec<U> s;
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    s.bias_enabled = bias_enabled;
    s.weights = tensor_cast<U>(weights);
    s.bias.assign(bias.begin(), bias.end());
    return s;
  }

  std::size_t param_count() const {
    const auto k = static_cast<std::size_t>(kernel);
    return out_channels * in_channels * k * k + (bias_enabled ? out_channels : 0);
  }

  // Uniform in +-1/sqrt(fan_in) for weights and bias.
  void init_uniform(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels) * kernel * kernel);
    fill_uniform(weights, rng, -bound, bound);
    for (auto& b : bias) b = static_cast<T>(rng.uniform(-bound, bound));
  }

  template <typename Fn>
  void for_each_parameter(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".weight", weights.data());
    if (bias_enabled) fn(prefix + ".bias", std::span<T>(bias));
  }
};

// Fully connected layer y = W x + b. Weights have shape (out, in, 1, 1).
template <typename T>
struct LinearSpec {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  bool bias_enabled = true;
  Tensor<T> weights;
  std::vector<T> bias;

  static LinearSpec make(std::size_t in, std::size_t out, bool bias_enabled = true, bool allocate = true) {
    if (in == 0 || out == 0) throw ConfigError("linear layer needs non-zero feature counts");
    LinearSpec s;
    s.in_features = in;
    s.out_features = out;
    s.bias_enabled = bias_enabled;
    if (allocate) {
      s.weights = Tensor<T>({out, in, 1, 1});
      s.bias.assign(bias_enabled ? out : 0, T{0});
    }
    return s;
  }

  template <typename U>
  LinearSpec<U> cast() const {
    LinearSpec<U> s;
    s.in_features = in_features;
    s.out_features = out_features;
    s.bias_enabled = bias_enabled;
    s.weights = tensor_cast<U>(weights);
    s.bias.assign(bias.begin(), bias.end());
    return s;
  }

  std::size_t param_count() const {
    return out_features * in_features + (bias_enabled ? out_features : 0);
  }

  T& weight(std::size_t o, std::size_t i) { return weights[o * in_features + i]; }
  const T& weight(std::size_t o, std::size_t i) const { return weights[o * in_features + i]; }

  void init_uniform(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
    fill_uniform(weights, rng, -bound, bound);
    for (auto& b : bias) b = static_cast<T>(rng.uniform(-bound, bound));
  }

  template <typename Fn>
  void for_each_parameter(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".weight", weights.data());
    if (bias_enabled) fn(prefix + ".bias", std::span<T>(bias));
  }
};

}  // namespace cefpn
