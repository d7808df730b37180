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
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cefpn/errors.hpp"
#include "cefpn/layers.hpp"
#include "cefpn/tensor.hpp"

// Forward kernels and their vector-Jacobian products. Every function here is
// pure: it reads its arguments and returns a fresh tensor.
namespace cefpn::ops {

namespace detail {

inline std::string dims(std::size_t a, std::size_t b) {
  return std::to_string(a) + " vs " + std::to_string(b);
}

// Output extent of a sliding window, or ShapeError if the window does not fit.
inline std::size_t window_extent(std::size_t in, int kernel, int stride, int padding,
                                 const char* op) {
  const auto padded = static_cast<long long>(in) + 2LL * padding;
  if (padded < kernel) {
    throw ShapeError(std::string(op) + ": window " + std::to_string(kernel) +
                     " larger than padded extent " + std::to_string(padded));
  }
  return static_cast<std::size_t>((padded - kernel) / stride + 1);
}

inline void require_same(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b)) throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

// Range of output positions o for which o * stride - pad + k lands in [0, in).
inline void valid_range(std::size_t out, std::size_t in, int stride, int pad, int k,
                        std::size_t& lo, std::size_t& hi) {
  const long long off = static_cast<long long>(k) - pad;
  long long first = off >= 0 ? 0 : (-off + stride - 1) / stride;
  long long last = (static_cast<long long>(in) - 1 - off);
  last = last < 0 ? -1 : last / stride;
  lo = static_cast<std::size_t>(std::max<long long>(first, 0));
  hi = static_cast<std::size_t>(std::min<long long>(last + 1, static_cast<long long>(out)));
  if (hi < lo) hi = lo;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution

template <typename T>
Shape conv2d_shape(const Shape& x, const Shape& weight, int stride, int padding) {
  if (x.c != weight.c) {
    throw ConfigError("conv2d: input has " + std::to_string(x.c) +
                      " channels but layer expects " + std::to_string(weight.c));
  }
  if (weight.h != weight.w) throw ConfigError("conv2d: kernel must be square");
  if (stride < 1 || padding < 0) throw ConfigError("conv2d: stride must be >= 1, padding >= 0");
  if (x.h == 0 || x.w == 0) throw ShapeError("conv2d: empty spatial extent " + x.str());
  const int k = static_cast<int>(weight.h);
  return {x.n, weight.n, detail::window_extent(x.h, k, stride, padding, "conv2d"),
          detail::window_extent(x.w, k, stride, padding, "conv2d")};
}

// Zero-padded cross-correlation. `bias` is either empty or one value per
// output channel.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> bias, int stride,
                 int padding) {
  const Shape os = conv2d_shape<T>(x.shape(), weight.shape(), stride, padding);
  if (!bias.empty() && bias.size() != os.c) {
    throw ConfigError("conv2d: bias length " + detail::dims(bias.size(), os.c));
  }
  const int k = static_cast<int>(weight.h());
  Tensor<T> out(os);
  for (std::size_t b = 0; b < os.n; ++b) {
    for (std::size_t o = 0; o < os.c; ++o) {
      T* dst = out.plane(b, o);
      std::fill(dst, dst + os.spatial(), bias.empty() ? T{0} : bias[o]);
      for (std::size_t i = 0; i < x.c(); ++i) {
        const T* src = x.plane(b, i);
        for (int ky = 0; ky < k; ++ky) {
          std::size_t oy0, oy1;
          detail::valid_range(os.h, x.h(), stride, padding, ky, oy0, oy1);
          for (int kx = 0; kx < k; ++kx) {
            std::size_t ox0, ox1;
            detail::valid_range(os.w, x.w(), stride, padding, kx, ox0, ox1);
            const T wv = weight(o, i, static_cast<std::size_t>(ky), static_cast<std::size_t>(kx));
            for (std::size_t oy = oy0; oy < oy1; ++oy) {
              const std::size_t iy = oy * stride + ky - padding;
              const T* row = src + iy * x.w();
              T* drow = dst + oy * os.w;
              for (std::size_t ox = ox0; ox < ox1; ++ox) {
                drow[ox] += wv * row[ox * stride + kx - padding];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvSpec<T>& spec) {
  if (x.c() != spec.in_channels) {
    throw ConfigError("conv2d: input has " + std::to_string(x.c()) +
                      " channels but layer expects " + std::to_string(spec.in_channels));
  }
  return conv2d(x, spec.weights, std::span<const T>(spec.bias), spec.stride, spec.padding);
}

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;
  Tensor<T> weight;
  std::vector<T> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out,
                               int stride, int padding) {
  const Shape os = conv2d_shape<T>(x.shape(), weight.shape(), stride, padding);
  detail::require_same(os, grad_out.shape(), "conv2d_backward");
  const int k = static_cast<int>(weight.h());
  Conv2dGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weight.shape()), std::vector<T>(os.c, T{0})};
  for (std::size_t b = 0; b < os.n; ++b) {
    for (std::size_t o = 0; o < os.c; ++o) {
      const T* go = grad_out.plane(b, o);
      T acc{0};
      for (std::size_t p = 0; p < os.spatial(); ++p) acc += go[p];
      g.bias[o] += acc;
      for (std::size_t i = 0; i < x.c(); ++i) {
        const T* src = x.plane(b, i);
        T* dsrc = g.input.plane(b, i);
        for (int ky = 0; ky < k; ++ky) {
          std::size_t oy0, oy1;
          detail::valid_range(os.h, x.h(), stride, padding, ky, oy0, oy1);
          for (int kx = 0; kx < k; ++kx) {
            std::size_t ox0, ox1;
            detail::valid_range(os.w, x.w(), stride, padding, kx, ox0, ox1);
            const auto uky = static_cast<std::size_t>(ky);
            const auto ukx = static_cast<std::size_t>(kx);
            const T wv = weight(o, i, uky, ukx);
            T wacc{0};
            for (std::size_t oy = oy0; oy < oy1; ++oy) {
              const std::size_t iy = oy * stride + ky - padding;
              const T* row = src + iy * x.w();
              T* drow = dsrc + iy * x.w();
              const T* grow = go + oy * os.w;
              for (std::size_t ox = ox0; ox < ox1; ++ox) {
                const std::size_t ix = ox * stride + kx - padding;
                wacc += grow[ox] * row[ix];
                drow[ix] += grow[ox] * wv;
              }
            }
            g.weight(o, i, uky, ukx) += wacc;
          }
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Pooling

template <typename T>
Shape max_pool2d_shape(const Shape& x, int kernel, int stride, int padding) {
  if (kernel < 1 || stride < 1) throw ConfigError("max_pool2d: kernel and stride must be >= 1");
  if (padding < 0 || 2 * padding > kernel) {
    throw ConfigError("max_pool2d: padding " + std::to_string(padding) +
                      " must lie in [0, kernel/2] for kernel " + std::to_string(kernel));
  }
  if (x.h == 0 || x.w == 0) throw ShapeError("max_pool2d: empty spatial extent " + x.str());
  return {x.n, x.c, detail::window_extent(x.h, kernel, stride, padding, "max_pool2d"),
          detail::window_extent(x.w, kernel, stride, padding, "max_pool2d")};
}

namespace detail {

// Flat in-plane index of the first maximum (scan order) of the window at (oy, ox).
template <typename T>
std::size_t window_argmax(const T* src, std::size_t h, std::size_t w, std::size_t oy, std::size_t ox,
                          int kernel, int stride, int padding) {
  T best = -std::numeric_limits<T>::infinity();
  std::size_t arg = std::numeric_limits<std::size_t>::max();
  for (int ky = 0; ky < kernel; ++ky) {
    const long long iy = static_cast<long long>(oy) * stride + ky - padding;
    if (iy < 0 || iy >= static_cast<long long>(h)) continue;
    for (int kx = 0; kx < kernel; ++kx) {
      const long long ix = static_cast<long long>(ox) * stride + kx - padding;
      if (ix < 0 || ix >= static_cast<long long>(w)) continue;
      const std::size_t idx = static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix);
      if (arg == std::numeric_limits<std::size_t>::max() || src[idx] > best) {
        best = src[idx];
        arg = idx;
      }
    }
  }
  return arg;
}

}  // namespace detail

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, int kernel, int stride, int padding) {
  const Shape os = max_pool2d_shape<T>(x.shape(), kernel, stride, padding);
  Tensor<T> out(os);
  for (std::size_t b = 0; b < os.n; ++b) {
    for (std::size_t ch = 0; ch < os.c; ++ch) {
      const T* src = x.plane(b, ch);
      T* dst = out.plane(b, ch);
      for (std::size_t oy = 0; oy < os.h; ++oy) {
        for (std::size_t ox = 0; ox < os.w; ++ox) {
          dst[oy * os.w + ox] = src[detail::window_argmax(src, x.h(), x.w(), oy, ox, kernel, stride, padding)];
        }
      }
    }
  }
  return out;
}

// Gradient goes to the first maximal element of each window in scan order.
template <typename T>
Tensor<T> max_pool2d_backward(const Tensor<T>& x, int kernel, int stride, int padding,
                              const Tensor<T>& grad_out) {
  const Shape os = max_pool2d_shape<T>(x.shape(), kernel, stride, padding);
  detail::require_same(os, grad_out.shape(), "max_pool2d_backward");
  Tensor<T> dx(x.shape());
  for (std::size_t b = 0; b < os.n; ++b) {
    for (std::size_t ch = 0; ch < os.c; ++ch) {
      const T* src = x.plane(b, ch);
      const T* go = grad_out.plane(b, ch);
      T* dst = dx.plane(b, ch);
      for (std::size_t oy = 0; oy < os.h; ++oy) {
        for (std::size_t ox = 0; ox < os.w; ++ox) {
          dst[detail::window_argmax(src, x.h(), x.w(), oy, ox, kernel, stride, padding)] +=
              go[oy * os.w + ox];
        }
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.h() * x.w() == 0) throw ShapeError("global_avg_pool: empty spatial extent " + x.shape().str());
  Tensor<T> out({x.n(), x.c(), 1, 1});
  const T count = static_cast<T>(x.h() * x.w());
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t ch = 0; ch < x.c(); ++ch) {
      const T* src = x.plane(b, ch);
      T acc{0};
      for (std::size_t p = 0; p < x.h() * x.w(); ++p) acc += src[p];
      out(b, ch, 0, 0) = acc / count;
    }
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Shape& input, const Tensor<T>& grad_out) {
  detail::require_same({input.n, input.c, 1, 1}, grad_out.shape(), "global_avg_pool_backward");
  Tensor<T> dx(input);
  const T count = static_cast<T>(input.h * input.w);
  for (std::size_t b = 0; b < input.n; ++b) {
    for (std::size_t ch = 0; ch < input.c; ++ch) {
      T* dst = dx.plane(b, ch);
      std::fill(dst, dst + input.spatial(), grad_out(b, ch, 0, 0) / count);
    }
  }
  return dx;
}

template <typename T>
Tensor<T> global_max_pool(const Tensor<T>& x) {
  if (x.h() * x.w() == 0) throw ShapeError("global_max_pool: empty spatial extent " + x.shape().str());
  Tensor<T> out({x.n(), x.c(), 1, 1});
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t ch = 0; ch < x.c(); ++ch) {
      const T* src = x.plane(b, ch);
      out(b, ch, 0, 0) = *std::max_element(src, src + x.h() * x.w());
    }
  }
  return out;
}

template <typename T>
Tensor<T> global_max_pool_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  detail::require_same({x.n(), x.c(), 1, 1}, grad_out.shape(), "global_max_pool_backward");
  Tensor<T> dx(x.shape());
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t ch = 0; ch < x.c(); ++ch) {
      const T* src = x.plane(b, ch);
      // std::max_element returns the first maximum.
      const auto arg = static_cast<std::size_t>(std::max_element(src, src + x.h() * x.w()) - src);
      dx.plane(b, ch)[arg] += grad_out(b, ch, 0, 0);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Resampling

template <typename T>
Tensor<T> interpolate_nearest(const Tensor<T>& x, int scale) {
  if (scale < 1) throw ConfigError("interpolate_nearest: scale must be >= 1, got " + std::to_string(scale));
  const auto s = static_cast<std::size_t>(scale);
  Tensor<T> out({x.n(), x.c(), x.h() * s, x.w() * s});
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t ch = 0; ch < x.c(); ++ch) {
      const T* src = x.plane(b, ch);
      T* dst = out.plane(b, ch);
      for (std::size_t y = 0; y < out.h(); ++y) {
        const T* row = src + (y / s) * x.w();
        for (std::size_t xx = 0; xx < out.w(); ++xx) dst[y * out.w() + xx] = row[xx / s];
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> interpolate_nearest_backward(const Shape& input, int scale, const Tensor<T>& grad_out) {
  const auto s = static_cast<std::size_t>(scale);
  detail::require_same({input.n, input.c, input.h * s, input.w * s}, grad_out.shape(),
                       "interpolate_nearest_backward");
  Tensor<T> dx(input);
  for (std::size_t b = 0; b < input.n; ++b) {
    for (std::size_t ch = 0; ch < input.c; ++ch) {
      const T* go = grad_out.plane(b, ch);
      T* dst = dx.plane(b, ch);
      for (std::size_t y = 0; y < grad_out.h(); ++y) {
        for (std::size_t xx = 0; xx < grad_out.w(); ++xx) {
          dst[(y / s) * input.w + xx / s] += go[y * grad_out.w() + xx];
        }
      }
    }
  }
  return dx;
}

// Rearranges (n, C*r*r, h, w) into (n, C, r*h, r*w). Output pixel (row, col)
// of channel ch reads input pixel (row / r, col / r) of input channel
// C * r * (row % r) + C * (col % r) + ch.
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r) {
  if (r < 1) throw ConfigError("pixel_shuffle: upscale factor must be >= 1, got " + std::to_string(r));
  const auto ur = static_cast<std::size_t>(r);
  if (x.c() % (ur * ur) != 0) {
    throw ConfigError("pixel_shuffle: channel count " + std::to_string(x.c()) +
                      " is not divisible by r^2 for r = " + std::to_string(r));
  }
  const std::size_t out_c = x.c() / (ur * ur);
  Tensor<T> out({x.n(), out_c, x.h() * ur, x.w() * ur});
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t ic = 0; ic < x.c(); ++ic) {
      const std::size_t block = ic / out_c;
      const std::size_t dy = block / ur;
      const std::size_t dx = block % ur;
      const T* src = x.plane(b, ic);
      T* dst = out.plane(b, ic % out_c);
      for (std::size_t y = 0; y < x.h(); ++y) {
        T* drow = dst + (y * ur + dy) * out.w() + dx;
        for (std::size_t xx = 0; xx < x.w(); ++xx) drow[xx * ur] = src[y * x.w() + xx];
      }
    }
  }
  return out;
}

// Exact inverse of pixel_shuffle.
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r) {
  if (r < 1) throw ConfigError("pixel_unshuffle: factor must be >= 1, got " + std::to_string(r));
  const auto ur = static_cast<std::size_t>(r);
  if (x.h() % ur != 0 || x.w() % ur != 0) {
    throw ShapeError("pixel_unshuffle: spatial extent " + x.shape().str() +
                     " not divisible by " + std::to_string(r));
  }
  const std::size_t c = x.c();
  Tensor<T> out({x.n(), c * ur * ur, x.h() / ur, x.w() / ur});
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t oc = 0; oc < out.c(); ++oc) {
      const std::size_t block = oc / c;
      const std::size_t dy = block / ur;
      const std::size_t dx = block % ur;
      const T* src = x.plane(b, oc % c);
      T* dst = out.plane(b, oc);
      for (std::size_t y = 0; y < out.h(); ++y) {
        const T* srow = src + (y * ur + dy) * x.w() + dx;
        for (std::size_t xx = 0; xx < out.w(); ++xx) dst[y * out.w() + xx] = srow[xx * ur];
      }
    }
  }
  return out;
}

// Channels [begin, begin + count).
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  if (begin + count > x.c() || count == 0) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + std::to_string(x.c()) + " channels");
  }
  Tensor<T> out({x.n(), count, x.h(), x.w()});
  for (std::size_t b = 0; b < x.n(); ++b) {
    std::copy_n(x.plane(b, begin), count * x.h() * x.w(), out.plane(b, 0));
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels_backward(const Shape& input, std::size_t begin, const Tensor<T>& grad_out) {
  Tensor<T> dx(input);
  for (std::size_t b = 0; b < input.n; ++b) {
    std::copy_n(grad_out.plane(b, 0), grad_out.c() * input.h * input.w, dx.plane(b, begin));
  }
  return dx;
}

// (n, c, 1, 1) -> (n, c, h, w) by replication.
template <typename T>
Tensor<T> broadcast_spatial(const Tensor<T>& x, std::size_t h, std::size_t w) {
  if (x.h() != 1 || x.w() != 1) {
    throw ShapeError("broadcast_spatial: expects a 1x1 map, got " + x.shape().str());
  }
  Tensor<T> out({x.n(), x.c(), h, w});
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t ch = 0; ch < x.c(); ++ch) {
      T* dst = out.plane(b, ch);
      std::fill(dst, dst + h * w, x(b, ch, 0, 0));
    }
  }
  return out;
}

template <typename T>
Tensor<T> broadcast_spatial_backward(const Tensor<T>& grad_out) {
  Tensor<T> dx({grad_out.n(), grad_out.c(), 1, 1});
  for (std::size_t b = 0; b < grad_out.n(); ++b) {
    for (std::size_t ch = 0; ch < grad_out.c(); ++ch) {
      const T* go = grad_out.plane(b, ch);
      T acc{0};
      for (std::size_t p = 0; p < grad_out.h() * grad_out.w(); ++p) acc += go[p];
      dx(b, ch, 0, 0) = acc;
    }
  }
  return dx;
}

// Top-left (h, w) window of a map at least that large.
template <typename T>
Tensor<T> crop_spatial(const Tensor<T>& x, std::size_t h, std::size_t w) {
  if (h > x.h() || w > x.w()) {
    throw ShapeError("crop_spatial: cannot crop " + x.shape().str() + " to " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  Tensor<T> out({x.n(), x.c(), h, w});
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t ch = 0; ch < x.c(); ++ch) {
      for (std::size_t y = 0; y < h; ++y) std::copy_n(x.plane(b, ch) + y * x.w(), w, out.plane(b, ch) + y * w);
    }
  }
  return out;
}

template <typename T>
Tensor<T> crop_spatial_backward(const Shape& input, const Tensor<T>& grad_out) {
  Tensor<T> dx(input);
  for (std::size_t b = 0; b < input.n; ++b) {
    for (std::size_t ch = 0; ch < input.c; ++ch) {
      for (std::size_t y = 0; y < grad_out.h(); ++y) {
        std::copy_n(grad_out.plane(b, ch) + y * grad_out.w(), grad_out.w(), dx.plane(b, ch) + y * input.w);
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Dense layers

// x: (n, in, 1, 1) -> (n, out, 1, 1); weight: (out, in, 1, 1).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> bias) {
  if (x.h() != 1 || x.w() != 1) throw ShapeError("linear: expects (n, features, 1, 1), got " + x.shape().str());
  const std::size_t in = weight.c();
  const std::size_t out_f = weight.n();
  if (x.c() != in) {
    throw ConfigError("linear: input has " + std::to_string(x.c()) + " features but layer expects " +
                      std::to_string(in));
  }
  if (!bias.empty() && bias.size() != out_f) throw ConfigError("linear: bias length " + detail::dims(bias.size(), out_f));
  Tensor<T> y({x.n(), out_f, 1, 1});
  for (std::size_t b = 0; b < x.n(); ++b) {
    const T* xv = x.plane(b, 0);
    for (std::size_t o = 0; o < out_f; ++o) {
      const T* row = weight.plane(o, 0);
      T acc = bias.empty() ? T{0} : bias[o];
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * xv[i];
      y(b, o, 0, 0) = acc;
    }
  }
  return y;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const LinearSpec<T>& spec) {
  return linear(x, spec.weights, std::span<const T>(spec.bias));
}

template <typename T>
std::vector<T> linear(std::span<const T> x, const LinearSpec<T>& spec) {
  if (x.size() != spec.in_features) {
    throw ConfigError("linear: input length " + std::to_string(x.size()) + " but layer expects " +
                      std::to_string(spec.in_features));
  }
  Tensor<T> xt({1, x.size(), 1, 1}, std::vector<T>(x.begin(), x.end()));
  const auto y = linear(xt, spec);
  return y.values();
}

template <typename T>
struct LinearGrads {
  Tensor<T> input;
  Tensor<T> weight;
  std::vector<T> bias;
};

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out) {
  const std::size_t in = weight.c();
  const std::size_t out_f = weight.n();
  detail::require_same({x.n(), out_f, 1, 1}, grad_out.shape(), "linear_backward");
  LinearGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weight.shape()), std::vector<T>(out_f, T{0})};
  for (std::size_t b = 0; b < x.n(); ++b) {
    const T* xv = x.plane(b, 0);
    T* dx = g.input.plane(b, 0);
    for (std::size_t o = 0; o < out_f; ++o) {
      const T go = grad_out(b, o, 0, 0);
      const T* row = weight.plane(o, 0);
      T* drow = g.weight.plane(o, 0);
      g.bias[o] += go;
      for (std::size_t i = 0; i < in; ++i) {
        drow[i] += go * xv[i];
        dx[i] += go * row[i];
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
T sigmoid(T v) {
  return v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

// Uses the forward output y = sigmoid(x).
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  detail::require_same(y.shape(), grad_out.shape(), "sigmoid_backward");
  Tensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) dx[i] = grad_out[i] * y[i] * (T{1} - y[i]);
  return dx;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  detail::require_same(x.shape(), grad_out.shape(), "relu_backward");
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) dx[i] = x[i] > T{0} ? grad_out[i] : T{0};
  return dx;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same(a.shape(), b.shape(), "add");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) y[i] = a[i] + b[i];
  return y;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] * factor;
  return y;
}

// x: (n, c, h, w), w: (n, c, 1, 1). Channel j of sample b is scaled by w(b, j).
template <typename T>
Tensor<T> mul_channelwise(const Tensor<T>& x, const Tensor<T>& w) {
  detail::require_same({x.n(), x.c(), 1, 1}, w.shape(), "mul_channelwise");
  Tensor<T> y(x.shape());
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t ch = 0; ch < x.c(); ++ch) {
      const T f = w(b, ch, 0, 0);
      const T* src = x.plane(b, ch);
      T* dst = y.plane(b, ch);
      for (std::size_t p = 0; p < x.h() * x.w(); ++p) dst[p] = src[p] * f;
    }
  }
  return y;
}

// One weight per channel, shared by every sample.
template <typename T>
Tensor<T> mul_channelwise(const Tensor<T>& x, std::span<const T> w) {
  if (w.size() != x.c()) {
    throw ShapeError("mul_channelwise: weight length " + std::to_string(w.size()) + " vs " +
                     std::to_string(x.c()) + " channels");
  }
  Tensor<T> wt({x.n(), x.c(), 1, 1});
  for (std::size_t b = 0; b < x.n(); ++b) std::copy(w.begin(), w.end(), wt.plane(b, 0));
  return mul_channelwise(x, wt);
}

template <typename T>
struct MulChannelwiseGrads {
  Tensor<T> input;
  Tensor<T> weight;
};

template <typename T>
MulChannelwiseGrads<T> mul_channelwise_backward(const Tensor<T>& x, const Tensor<T>& w,
                                                const Tensor<T>& grad_out) {
  detail::require_same(x.shape(), grad_out.shape(), "mul_channelwise_backward");
  MulChannelwiseGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(w.shape())};
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t ch = 0; ch < x.c(); ++ch) {
      const T f = w(b, ch, 0, 0);
      const T* src = x.plane(b, ch);
      const T* go = grad_out.plane(b, ch);
      T* dx = g.input.plane(b, ch);
      T acc{0};
      for (std::size_t p = 0; p < x.h() * x.w(); ++p) {
        dx[p] = go[p] * f;
        acc += go[p] * src[p];
      }
      g.weight(b, ch, 0, 0) = acc;
    }
  }
  return g;
}

template <typename T>
T sum(const Tensor<T>& x) {
  T acc{0};
  for (T v : x.data()) acc += v;
  return acc;
}

}  // namespace cefpn::ops
