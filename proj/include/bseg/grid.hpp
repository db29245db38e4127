#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bseg {

/// Dense 3D grid, shape H x W x D, D contiguous (innermost).
/// Axis convention is (H, W, D) everywhere in this project.
template <typename T>
struct Grid3 {
  int64_t h = 0, w = 0, d = 0;
  std::vector<T> data;

  Grid3() = default;
  Grid3(int64_t h_, int64_t w_, int64_t d_, T fill = T{})
      : h(h_), w(w_), d(d_), data(static_cast<size_t>(h_ * w_ * d_), fill) {}

  int64_t size() const { return h * w * d; }

  int64_t index(int64_t i, int64_t j, int64_t k) const { return (i * w + j) * d + k; }

  T& at(int64_t i, int64_t j, int64_t k) { return data[index(i, j, k)]; }
  const T& at(int64_t i, int64_t j, int64_t k) const { return data[index(i, j, k)]; }

  bool same_shape(const Grid3& o) const { return h == o.h && w == o.w && d == o.d; }

  bool in_bounds(int64_t i, int64_t j, int64_t k) const {
    return i >= 0 && i < h && j >= 0 && j < w && k >= 0 && k < d;
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  std::string shape_str() const {
    return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(d);
  }
};

using GridF = Grid3<float>;
using GridU8 = Grid3<uint8_t>;

/// Mirror a grid along one axis (0=H, 1=W, 2=D).
template <typename T>
Grid3<T> flip_axis(const Grid3<T>& g, int axis) {
  Grid3<T> out(g.h, g.w, g.d);
  for (int64_t i = 0; i < g.h; ++i)
    for (int64_t j = 0; j < g.w; ++j)
      for (int64_t k = 0; k < g.d; ++k) {
        int64_t si = axis == 0 ? g.h - 1 - i : i;
        int64_t sj = axis == 1 ? g.w - 1 - j : j;
        int64_t sk = axis == 2 ? g.d - 1 - k : k;
        out.at(i, j, k) = g.at(si, sj, sk);
      }
  return out;
}

/// Rotate by quarter turns in the H-W plane (k counterclockwise 90-degree
/// steps). Output shape swaps H and W for odd k.
template <typename T>
Grid3<T> rot90_hw(const Grid3<T>& g, int quarter_turns) {
  int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return g;
  if (k == 2) return flip_axis(flip_axis(g, 0), 1);
  Grid3<T> out(g.w, g.h, g.d);
  for (int64_t i = 0; i < out.h; ++i)
    for (int64_t j = 0; j < out.w; ++j)
      for (int64_t kk = 0; kk < out.d; ++kk) {
        // k == 1: out(i,j) = in(j, H_out-1-i); k == 3 is the inverse.
        if (k == 1)
          out.at(i, j, kk) = g.at(j, out.h - 1 - i, kk);
        else
          out.at(i, j, kk) = g.at(out.w - 1 - j, i, kk);
      }
  return out;
}

}  // namespace bseg
