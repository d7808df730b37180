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
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cefpn/errors.hpp"

namespace cefpn {

// Extents of a (batch, channel, height, width) tensor.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t numel() const { return n * c * h * w; }
  constexpr std::size_t spatial() const { return h * w; }

  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    std::ostringstream os;
    os << '(' << n << ", " << c << ", " << h << ", " << w << ')';
    return os.str();
  }
  friend std::ostream& operator<<(std::ostream& os, const Shape& s) { return os << s.str(); }
};

// Dense row-major NCHW tensor. Element (i, j, y, x) is stored at flat index
// ((i * c + j) * h + y) * w + x.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0}) : shape_(shape), data_(shape.numel(), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(shape); }
  static Tensor full(Shape shape, T value) { return Tensor(shape, value); }

  const Shape& shape() const { return shape_; }
  std::size_t n() const { return shape_.n; }
  std::size_t c() const { return shape_.c; }
  std::size_t h() const { return shape_.h; }
  std::size_t w() const { return shape_.w; }
  std::size_t numel() const { return data_.size(); }

  std::size_t index(std::size_t i, std::size_t j, std::size_t y, std::size_t x) const {
    return ((i * shape_.c + j) * shape_.h + y) * shape_.w + x;
  }
  T& operator()(std::size_t i, std::size_t j, std::size_t y, std::size_t x) {
    return data_[index(i, j, y, x)];
  }
  const T& operator()(std::size_t i, std::size_t j, std::size_t y, std::size_t x) const {
    return data_[index(i, j, y, x)];
  }
  T& operator[](std::size_t flat) { return data_[flat]; }
  const T& operator[](std::size_t flat) const { return data_[flat]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& values() const { return data_; }

  // Pointer to the contiguous h*w plane of (i, j).
  T* plane(std::size_t i, std::size_t j) { return data_.data() + index(i, j, 0, 0); }
  const T* plane(std::size_t i, std::size_t j) const { return data_.data() + index(i, j, 0, 0); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_{};
  std::vector<T> data_;
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  std::vector<To> out(t.numel());
  std::transform(t.data().begin(), t.data().end(), out.begin(),
                 [](From v) { return static_cast<To>(v); });
  return Tensor<To>(t.shape(), std::move(out));
}

// Per-tensor summary used by reports.
struct TensorStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

template <typename T>
TensorStats stats(const Tensor<T>& t) {
  if (t.numel() == 0) return {};
  const auto d = t.data();
  auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  double sum = 0.0;
  for (T v : d) sum += static_cast<double>(v);
  return {static_cast<double>(*lo), static_cast<double>(*hi), sum / static_cast<double>(d.size())};
}

}  // namespace cefpn
