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

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cefpn/errors.hpp"
#include "cefpn/layers.hpp"
#include "cefpn/ops.hpp"
#include "cefpn/tensor.hpp"

namespace cefpn {

// Handle to a value recorded on a GradTape.
struct Var {
  std::size_t id = 0;
  friend bool operator==(const Var&, const Var&) = default;
};

template <typename T>
class Gradients;

// Records a forward computation so that gradients of a scalar loss can be
// computed in reverse. A tape is single-owner: one tape per forward pass.
//
// Nodes are appended in evaluation order, so reverse index order is a valid
// topological order for the backward sweep.
template <typename T>
class GradTape {
 public:
  // Returns one gradient per parent (an empty tensor means "no contribution").
  using BackwardFn = std::function<std::vector<Tensor<T>>(const GradTape&, const Tensor<T>& grad)>;

  Var leaf(Tensor<T> value, bool requires_grad = true) {
    return push(std::move(value), {}, requires_grad, nullptr, "leaf");
  }
  Var constant(Tensor<T> value) { return leaf(std::move(value), false); }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  const std::string& op_name(Var v) const { return nodes_.at(v.id).op; }
  std::size_t size() const { return nodes_.size(); }

  Var conv2d(Var x, Var weight, std::optional<Var> bias, int stride, int padding) {
    const Tensor<T>* b = bias ? &value(*bias) : nullptr;
    auto out = ops::conv2d(value(x), value(weight),
                           b ? std::span<const T>(b->data()) : std::span<const T>{}, stride, padding);
    std::vector<std::size_t> parents{x.id, weight.id};
    if (bias) parents.push_back(bias->id);
    return push(std::move(out), std::move(parents), any_grad({x, weight}) || (bias && requires_grad(*bias)),
                [x, weight, bias, stride, padding](const GradTape& t, const Tensor<T>& g) {
                  auto grads = ops::conv2d_backward(t.value(x), t.value(weight), g, stride, padding);
                  std::vector<Tensor<T>> r{std::move(grads.input), std::move(grads.weight)};
                  if (bias) r.emplace_back(t.value(*bias).shape(), std::move(grads.bias));
                  return r;
                },
                "conv2d");
  }

  Var linear(Var x, Var weight, std::optional<Var> bias) {
    const Tensor<T>* b = bias ? &value(*bias) : nullptr;
    auto out = ops::linear(value(x), value(weight), b ? std::span<const T>(b->data()) : std::span<const T>{});
    std::vector<std::size_t> parents{x.id, weight.id};
    if (bias) parents.push_back(bias->id);
    return push(std::move(out), std::move(parents), any_grad({x, weight}) || (bias && requires_grad(*bias)),
                [x, weight, bias](const GradTape& t, const Tensor<T>& g) {
                  auto grads = ops::linear_backward(t.value(x), t.value(weight), g);
                  std::vector<Tensor<T>> r{std::move(grads.input), std::move(grads.weight)};
                  if (bias) r.emplace_back(t.value(*bias).shape(), std::move(grads.bias));
                  return r;
                },
                "linear");
  }

  Var max_pool2d(Var x, int kernel, int stride, int padding) {
    return unary(x, ops::max_pool2d(value(x), kernel, stride, padding),
                 [x, kernel, stride, padding](const GradTape& t, const Tensor<T>& g) {
                   return ops::max_pool2d_backward(t.value(x), kernel, stride, padding, g);
                 },
                 "max_pool2d");
  }

  Var global_avg_pool(Var x) {
    return unary(x, ops::global_avg_pool(value(x)),
                 [x](const GradTape& t, const Tensor<T>& g) {
                   return ops::global_avg_pool_backward(t.value(x).shape(), g);
                 },
                 "global_avg_pool");
  }

  Var global_max_pool(Var x) {
    return unary(x, ops::global_max_pool(value(x)),
                 [x](const GradTape& t, const Tensor<T>& g) { return ops::global_max_pool_backward(t.value(x), g); },
                 "global_max_pool");
  }

  Var interpolate_nearest(Var x, int scale) {
    return unary(x, ops::interpolate_nearest(value(x), scale),
                 [x, scale](const GradTape& t, const Tensor<T>& g) {
                   return ops::interpolate_nearest_backward(t.value(x).shape(), scale, g);
                 },
                 "interpolate_nearest");
  }

  Var pixel_shuffle(Var x, int r) {
    return unary(x, ops::pixel_shuffle(value(x), r),
                 [r](const GradTape&, const Tensor<T>& g) { return ops::pixel_unshuffle(g, r); },
                 "pixel_shuffle");
  }

  Var pixel_unshuffle(Var x, int r) {
    return unary(x, ops::pixel_unshuffle(value(x), r),
                 [r](const GradTape&, const Tensor<T>& g) { return ops::pixel_shuffle(g, r); },
                 "pixel_unshuffle");
  }

  Var slice_channels(Var x, std::size_t begin, std::size_t count) {
    return unary(x, ops::slice_channels(value(x), begin, count),
                 [x, begin](const GradTape& t, const Tensor<T>& g) {
                   return ops::slice_channels_backward(t.value(x).shape(), begin, g);
                 },
                 "slice_channels");
  }

  Var broadcast_spatial(Var x, std::size_t h, std::size_t w) {
    return unary(x, ops::broadcast_spatial(value(x), h, w),
                 [](const GradTape&, const Tensor<T>& g) { return ops::broadcast_spatial_backward(g); },
                 "broadcast_spatial");
  }

  Var crop_spatial(Var x, std::size_t h, std::size_t w) {
    return unary(x, ops::crop_spatial(value(x), h, w),
                 [x](const GradTape& t, const Tensor<T>& g) {
                   return ops::crop_spatial_backward(t.value(x).shape(), g);
                 },
                 "crop_spatial");
  }

  Var sigmoid(Var x) {
    auto y = ops::sigmoid(value(x));
    const std::size_t self = nodes_.size();
    return unary(x, std::move(y),
                 [self](const GradTape& t, const Tensor<T>& g) {
                   return ops::sigmoid_backward(t.nodes_[self].value, g);
                 },
                 "sigmoid");
  }

  Var relu(Var x) {
    return unary(x, ops::relu(value(x)),
                 [x](const GradTape& t, const Tensor<T>& g) { return ops::relu_backward(t.value(x), g); },
                 "relu");
  }

  Var scale(Var x, T factor) {
    return unary(x, ops::scale(value(x), factor),
                 [factor](const GradTape&, const Tensor<T>& g) { return ops::scale(g, factor); }, "scale");
  }

  Var add(Var a, Var b) {
    return push(ops::add(value(a), value(b)), {a.id, b.id}, any_grad({a, b}),
                [](const GradTape&, const Tensor<T>& g) { return std::vector<Tensor<T>>{g, g}; }, "add");
  }

  // x: (n, c, h, w), w: (n, c, 1, 1).
  Var mul_channelwise(Var x, Var w) {
    return push(ops::mul_channelwise(value(x), value(w)), {x.id, w.id}, any_grad({x, w}),
                [x, w](const GradTape& t, const Tensor<T>& g) {
                  auto grads = ops::mul_channelwise_backward(t.value(x), t.value(w), g);
                  return std::vector<Tensor<T>>{std::move(grads.input), std::move(grads.weight)};
                },
                "mul_channelwise");
  }

  // Scalar (1, 1, 1, 1) sum of every element.
  Var sum(Var x) {
    Tensor<T> out({1, 1, 1, 1}, ops::sum(value(x)));
    return unary(x, std::move(out),
                 [x](const GradTape& t, const Tensor<T>& g) { return Tensor<T>(t.value(x).shape(), g[0]); },
                 "sum");
  }

  // Scalar sum of x * weights, elementwise.
  Var weighted_sum(Var x, Tensor<T> weights) {
    const auto& xv = value(x);
    if (!(xv.shape() == weights.shape())) {
      throw ShapeError("weighted_sum: shape mismatch " + xv.shape().str() + " vs " + weights.shape().str());
    }
    T acc{0};
    for (std::size_t i = 0; i < xv.numel(); ++i) acc += xv[i] * weights[i];
    return unary(x, Tensor<T>({1, 1, 1, 1}, acc),
                 [w = std::move(weights)](const GradTape&, const Tensor<T>& g) { return ops::scale(w, g[0]); },
                 "weighted_sum");
  }

  // Reverse sweep from a scalar loss.
  Gradients<T> backward(Var loss) const;

 private:
  struct Node {
    Tensor<T> value;
    std::vector<std::size_t> parents;
    bool requires_grad = false;
    BackwardFn backward;
    std::string op;
  };

  bool any_grad(std::initializer_list<Var> vars) const {
    for (Var v : vars) {
      if (requires_grad(v)) return true;
    }
    return false;
  }

  Var push(Tensor<T> value, std::vector<std::size_t> parents, bool requires_grad, BackwardFn fn,
           std::string op) {
    nodes_.push_back(Node{std::move(value), std::move(parents), requires_grad, std::move(fn), std::move(op)});
    return Var{nodes_.size() - 1};
  }

  template <typename Fn>
  Var unary(Var x, Tensor<T> out, Fn fn, std::string op) {
    return push(std::move(out), {x.id}, requires_grad(x),
                [fn = std::move(fn)](const GradTape& t, const Tensor<T>& g) {
                  return std::vector<Tensor<T>>{fn(t, g)};
                },
                std::move(op));
  }

  std::vector<Node> nodes_;

  friend class Gradients<T>;
};

// Result of GradTape::backward: d(loss)/d(v) for every recorded value.
template <typename T>
class Gradients {
 public:
  // Zero tensor when v does not influence the loss.
  Tensor<T> of(Var v) const {
    const auto& g = grads_.at(v.id);
    return g ? *g : Tensor<T>(shapes_.at(v.id));
  }
  bool reached(Var v) const { return grads_.at(v.id).has_value(); }

 private:
  friend class GradTape<T>;
  std::vector<std::optional<Tensor<T>>> grads_;
  std::vector<Shape> shapes_;
};

template <typename T>
Gradients<T> GradTape<T>::backward(Var loss) const {
  const auto& lv = value(loss);
  if (lv.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + lv.shape().str());
  }
  Gradients<T> out;
  out.grads_.resize(nodes_.size());
  out.shapes_.reserve(nodes_.size());
  for (const auto& n : nodes_) out.shapes_.push_back(n.value.shape());
  if (!nodes_[loss.id].requires_grad) return out;

  out.grads_[loss.id] = Tensor<T>(lv.shape(), T{1});
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!out.grads_[id] || !node.backward) continue;
    auto parent_grads = node.backward(*this, *out.grads_[id]);
    for (std::size_t k = 0; k < node.parents.size(); ++k) {
      const std::size_t p = node.parents[k];
      if (!nodes_[p].requires_grad || parent_grads[k].numel() == 0) continue;
      auto& slot = out.grads_[p];
      if (!slot) {
        slot = std::move(parent_grads[k]);
      } else {
        for (std::size_t i = 0; i < slot->numel(); ++i) (*slot)[i] += parent_grads[k][i];
      }
    }
  }
  return out;
}

// Tape handles for a bound convolution layer.
struct ConvVars {
  Var weight;
  std::optional<Var> bias;
  int stride = 1;
  int padding = 0;
};

struct LinearVars {
  Var weight;
  std::optional<Var> bias;
};

template <typename T>
ConvVars bind(GradTape<T>& tape, const ConvSpec<T>& spec, bool requires_grad) {
  ConvVars v{tape.leaf(spec.weights, requires_grad), std::nullopt, spec.stride, spec.padding};
  if (spec.bias_enabled) v.bias = tape.leaf(Tensor<T>({1, spec.out_channels, 1, 1}, spec.bias), requires_grad);
  return v;
}

template <typename T>
LinearVars bind(GradTape<T>& tape, const LinearSpec<T>& spec, bool requires_grad) {
  LinearVars v{tape.leaf(spec.weights, requires_grad), std::nullopt};
  if (spec.bias_enabled) v.bias = tape.leaf(Tensor<T>({1, spec.out_features, 1, 1}, spec.bias), requires_grad);
  return v;
}

template <typename T>
Var apply(GradTape<T>& tape, Var x, const ConvVars& layer) {
  return tape.conv2d(x, layer.weight, layer.bias, layer.stride, layer.padding);
}

template <typename T>
Var apply(GradTape<T>& tape, Var x, const LinearVars& layer) {
  return tape.linear(x, layer.weight, layer.bias);
}

}  // namespace cefpn
