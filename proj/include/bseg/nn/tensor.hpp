#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bseg/errors.hpp"

namespace bseg::nn {

/// Dense float32 tensor in (N, C, H, W, D) layout, D contiguous.
struct Tensor {
  int64_t n = 0, c = 0, h = 0, w = 0, d = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int64_t n_, int64_t c_, int64_t h_, int64_t w_, int64_t d_)
      : n(n_), c(c_), h(h_), w(w_), d(d_), data(size_t(n_ * c_ * h_ * w_ * d_), 0.0f) {}

  int64_t numel() const { return n * c * h * w * d; }
  int64_t spatial() const { return h * w * d; }

  float& at(int64_t ni, int64_t ci, int64_t i, int64_t j, int64_t k) {
    return data[size_t(((((ni * c + ci) * h + i) * w + j) * d + k))];
  }
  const float& at(int64_t ni, int64_t ci, int64_t i, int64_t j, int64_t k) const {
    return data[size_t(((((ni * c + ci) * h + i) * w + j) * d + k))];
  }

  float* chan(int64_t ni, int64_t ci) { return data.data() + (ni * c + ci) * spatial(); }
  const float* chan(int64_t ni, int64_t ci) const {
    return data.data() + (ni * c + ci) * spatial();
  }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w && d == o.d;
  }
  std::string shape_str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w) + "x" + std::to_string(d);
  }
  void zero_() { std::fill(data.begin(), data.end(), 0.0f); }
  void fill_(float v) { std::fill(data.begin(), data.end(), v); }
};

/// Concatenate along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Split a gradient of concat_channels(a, b) back into the two parts.
void split_channels(const Tensor& g, int64_t c_first, Tensor& ga, Tensor& gb);

}  // namespace bseg::nn
