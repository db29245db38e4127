#include "bseg/morphology.hpp"

#include <algorithm>
#include <limits>
#include <map>

namespace bseg::morph {

namespace {

void check_kernel(int r) {
  if (r < 1 || r % 2 == 0)
    throw InvalidKernelError("kernel size r: must be odd and >= 1, got " + std::to_string(r));
}

// 1D min filter of radius q along the last (contiguous) axis of a line.
// Values outside [0, n) count as `border`.
template <typename T>
void minfilter_line(const T* in, T* out, int64_t n, int q, T border) {
  for (int64_t i = 0; i < n; ++i) {
    T m = (i - q < 0 || i + q >= n) ? border : std::numeric_limits<T>::max();
    int64_t lo = std::max<int64_t>(0, i - q);
    int64_t hi = std::min<int64_t>(n - 1, i + q);
    for (int64_t j = lo; j <= hi; ++j) m = std::min(m, in[j]);
    out[i] = m;
  }
}

// Separable cube min filter over a 3D grid, out-of-volume = border.
template <typename T>
Grid3<T> min_filter_cube(const Grid3<T>& g, int r, T border) {
  const int q = (r - 1) / 2;
  if (q == 0) return g;
  const int64_t H = g.h, W = g.w, D = g.d;
  Grid3<T> a(H, W, D), b(H, W, D);

  // Pass 1: along D (contiguous).
#pragma omp parallel for schedule(static)
  for (int64_t ij = 0; ij < H * W; ++ij) {
    const T* in = g.data.data() + ij * D;
    T* out = a.data.data() + ij * D;
    minfilter_line(in, out, D, q, border);
  }

  // Pass 2: along W. Gather each (i,k) line into a scratch row.
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < H; ++i) {
    std::vector<T> line(W), res(W);
    for (int64_t k = 0; k < D; ++k) {
      for (int64_t j = 0; j < W; ++j) line[j] = a.at(i, j, k);
      minfilter_line(line.data(), res.data(), W, q, border);
      for (int64_t j = 0; j < W; ++j) b.at(i, j, k) = res[j];
    }
  }

  // Pass 3: along H.
#pragma omp parallel for schedule(static)
  for (int64_t j = 0; j < W; ++j) {
    std::vector<T> line(H), res(H);
    for (int64_t k = 0; k < D; ++k) {
      for (int64_t i = 0; i < H; ++i) line[i] = b.at(i, j, k);
      minfilter_line(line.data(), res.data(), H, q, border);
      for (int64_t i = 0; i < H; ++i) a.at(i, j, k) = res[i];
    }
  }
  return a;
}

}  // namespace

StructuringElement::StructuringElement(int r_) : r(r_) { check_kernel(r_); }

BinaryMask erode(const BinaryMask& mask, int r) {
  check_kernel(r);
  mask.validate();
  return BinaryMask(min_filter_cube<uint8_t>(mask.voxels, r, uint8_t{0}));
}

BinaryMask boundary_label(const BinaryMask& mask, int r) {
  BinaryMask eroded = erode(mask, r);
  GridU8 out(mask.voxels.h, mask.voxels.w, mask.voxels.d);
  for (int64_t i = 0; i < out.size(); ++i)
    out.data[i] = mask.voxels.data[i] ^ eroded.voxels.data[i];
  return BinaryMask(std::move(out));
}

std::vector<std::pair<int32_t, BinaryMask>> boundary_labels_multiclass(
    const Grid3<int32_t>& labelmap, int r) {
  check_kernel(r);
  std::map<int32_t, int64_t> counts;
  for (int32_t v : labelmap.data) {
    if (v < 0)
      throw ValidationError("labelmap: class ids must be non-negative, got " + std::to_string(v));
    if (v > 0) counts[v]++;
  }
  std::vector<std::pair<int32_t, BinaryMask>> out;
  out.reserve(counts.size());
  for (const auto& [cls, n] : counts) {
    (void)n;
    GridU8 ind(labelmap.h, labelmap.w, labelmap.d);
    for (int64_t i = 0; i < labelmap.size(); ++i) ind.data[i] = labelmap.data[i] == cls ? 1 : 0;
    out.emplace_back(cls, boundary_label(BinaryMask(std::move(ind)), r));
  }
  return out;
}

ProbabilityMap soft_erode(const ProbabilityMap& p, int r) {
  check_kernel(r);
  return ProbabilityMap(min_filter_cube<float>(p.voxels, r, 0.0f));
}

void soft_erode_argmin(const GridF& p, int r, GridF& out, std::vector<int64_t>& argmin) {
  check_kernel(r);
  const int q = (r - 1) / 2;
  const int64_t H = p.h, W = p.w, D = p.d;
  out = GridF(H, W, D);
  argmin.assign(static_cast<size_t>(H * W * D), -1);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < H; ++i) {
    for (int64_t j = 0; j < W; ++j) {
      for (int64_t k = 0; k < D; ++k) {
        bool clipped = (i - q < 0 || i + q >= H || j - q < 0 || j + q >= W || k - q < 0 ||
                        k + q >= D);
        float m = std::numeric_limits<float>::max();
        int64_t arg = -1;
        for (int64_t ii = std::max<int64_t>(0, i - q); ii <= std::min(H - 1, i + q); ++ii)
          for (int64_t jj = std::max<int64_t>(0, j - q); jj <= std::min(W - 1, j + q); ++jj)
            for (int64_t kk = std::max<int64_t>(0, k - q); kk <= std::min(D - 1, k + q); ++kk) {
              float v = p.at(ii, jj, kk);
              if (v < m) {
                m = v;
                arg = p.index(ii, jj, kk);
              }
            }
        if (clipped && 0.0f < m) {
          m = 0.0f;
          arg = -1;  // border minimum, no gradient
        }
        int64_t oi = out.index(i, j, k);
        out.data[oi] = m;
        argmin[oi] = arg;
      }
    }
  }
}

}  // namespace bseg::morph
