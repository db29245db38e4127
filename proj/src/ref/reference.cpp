#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bseg::ref {

BinaryMask erode_naive(const BinaryMask& mask, int r) {
  if (r < 1 || r % 2 == 0)
    throw InvalidKernelError("kernel size r: must be odd and >= 1, got " + std::to_string(r));
  const int q = (r - 1) / 2;
  const auto& g = mask.voxels;
  GridU8 out(g.h, g.w, g.d);
  for (int64_t i = 0; i < g.h; ++i)
    for (int64_t j = 0; j < g.w; ++j)
      for (int64_t k = 0; k < g.d; ++k) {
        uint8_t all = 1;
        for (int64_t ii = i - q; ii <= i + q && all; ++ii)
          for (int64_t jj = j - q; jj <= j + q && all; ++jj)
            for (int64_t kk = k - q; kk <= k + q && all; ++kk) {
              uint8_t v = g.in_bounds(ii, jj, kk) ? g.at(ii, jj, kk) : 0;
              if (!v) all = 0;
            }
        out.at(i, j, k) = all;
      }
  return BinaryMask(std::move(out));
}

BinaryMask boundary_label_naive(const BinaryMask& mask, int r) {
  BinaryMask er = erode_naive(mask, r);
  GridU8 out(mask.voxels.h, mask.voxels.w, mask.voxels.d);
  for (int64_t i = 0; i < out.size(); ++i)
    out.data[i] = mask.voxels.data[i] ^ er.voxels.data[i];
  return BinaryMask(std::move(out));
}

GridF min_filter_naive(const GridF& g, int r) {
  if (r < 1 || r % 2 == 0)
    throw InvalidKernelError("kernel size r: must be odd and >= 1, got " + std::to_string(r));
  const int q = (r - 1) / 2;
  GridF out(g.h, g.w, g.d);
  for (int64_t i = 0; i < g.h; ++i)
    for (int64_t j = 0; j < g.w; ++j)
      for (int64_t k = 0; k < g.d; ++k) {
        float m = std::numeric_limits<float>::max();
        for (int64_t ii = i - q; ii <= i + q; ++ii)
          for (int64_t jj = j - q; jj <= j + q; ++jj)
            for (int64_t kk = k - q; kk <= k + q; ++kk) {
              float v = g.in_bounds(ii, jj, kk) ? g.at(ii, jj, kk) : 0.0f;
              m = std::min(m, v);
            }
        out.at(i, j, k) = m;
      }
  return out;
}

std::vector<std::array<int64_t, 3>> surface_voxels_naive(const BinaryMask& mask) {
  const auto& g = mask.voxels;
  std::vector<std::array<int64_t, 3>> out;
  const int64_t off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (int64_t i = 0; i < g.h; ++i)
    for (int64_t j = 0; j < g.w; ++j)
      for (int64_t k = 0; k < g.d; ++k) {
        if (!g.at(i, j, k)) continue;
        for (const auto& o : off) {
          int64_t ii = i + o[0], jj = j + o[1], kk = k + o[2];
          uint8_t v = g.in_bounds(ii, jj, kk) ? g.at(ii, jj, kk) : 0;
          if (!v) {
            out.push_back({i, j, k});
            break;
          }
        }
      }
  return out;
}

std::vector<double> directed_surface_distances_naive(const BinaryMask& a, const BinaryMask& b,
                                                     const Spacing& spacing) {
  auto sa = surface_voxels_naive(a);
  auto sb = surface_voxels_naive(b);
  std::vector<double> out;
  out.reserve(sa.size());
  for (const auto& p : sa) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : sb) {
      double dh = (double(p[0]) - double(q[0])) * spacing[0];
      double dw = (double(p[1]) - double(q[1])) * spacing[1];
      double dd = (double(p[2]) - double(q[2])) * spacing[2];
      best = std::min(best, dh * dh + dw * dw + dd * dd);
    }
    out.push_back(std::sqrt(best));
  }
  return out;
}

namespace {
double nearest_rank_percentile(std::vector<double> v, double percentile) {
  std::sort(v.begin(), v.end());
  int64_t n = static_cast<int64_t>(v.size());
  int64_t rank = static_cast<int64_t>(std::ceil(percentile / 100.0 * double(n)));
  rank = std::clamp<int64_t>(rank, 1, n);
  return v[rank - 1];
}
}  // namespace

double hausdorff_naive(const BinaryMask& pred, const BinaryMask& gt, const Spacing& spacing,
                       double percentile) {
  auto d1 = directed_surface_distances_naive(pred, gt, spacing);
  auto d2 = directed_surface_distances_naive(gt, pred, spacing);
  d1.insert(d1.end(), d2.begin(), d2.end());
  if (d1.empty()) throw EmptyMaskError("hausdorff: both masks must be non-empty");
  return nearest_rank_percentile(std::move(d1), percentile);
}

double average_surface_distance_naive(const BinaryMask& pred, const BinaryMask& gt,
                                      const Spacing& spacing) {
  auto d1 = directed_surface_distances_naive(pred, gt, spacing);
  auto d2 = directed_surface_distances_naive(gt, pred, spacing);
  if (d1.empty() || d2.empty()) throw EmptyMaskError("asd: both masks must be non-empty");
  double s = 0.0;
  for (double v : d1) s += v;
  for (double v : d2) s += v;
  return s / double(d1.size() + d2.size());
}

double dice_naive(const BinaryMask& pred, const BinaryMask& gt) {
  int64_t inter = 0, np = 0, ng = 0;
  for (int64_t i = 0; i < pred.voxels.size(); ++i) {
    np += pred.voxels.data[i];
    ng += gt.voxels.data[i];
    inter += pred.voxels.data[i] & gt.voxels.data[i];
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * double(inter) / double(np + ng);
}

double jaccard_naive(const BinaryMask& pred, const BinaryMask& gt) {
  int64_t inter = 0, uni = 0;
  for (int64_t i = 0; i < pred.voxels.size(); ++i) {
    inter += pred.voxels.data[i] & gt.voxels.data[i];
    uni += pred.voxels.data[i] | gt.voxels.data[i];
  }
  if (uni == 0) return 1.0;
  return double(inter) / double(uni);
}

void conv3d_naive(const float* x, const float* wgt, const float* bias, float* y, int64_t n,
                  int64_t ci, int64_t h, int64_t w, int64_t d, int64_t co, int k, int stride,
                  int pad) {
  const int64_t oh = (h + 2 * pad - k) / stride + 1;
  const int64_t ow = (w + 2 * pad - k) / stride + 1;
  const int64_t od = (d + 2 * pad - k) / stride + 1;
  auto xat = [&](int64_t b, int64_t c, int64_t i, int64_t j, int64_t kk) {
    return x[(((b * ci + c) * h + i) * w + j) * d + kk];
  };
  for (int64_t b = 0; b < n; ++b)
    for (int64_t oc = 0; oc < co; ++oc)
      for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j)
          for (int64_t kk = 0; kk < od; ++kk) {
            double acc = bias ? double(bias[oc]) : 0.0;
            for (int64_t c = 0; c < ci; ++c)
              for (int a = 0; a < k; ++a)
                for (int bb = 0; bb < k; ++bb)
                  for (int cc = 0; cc < k; ++cc) {
                    int64_t ii = i * stride + a - pad;
                    int64_t jj = j * stride + bb - pad;
                    int64_t zz = kk * stride + cc - pad;
                    if (ii < 0 || ii >= h || jj < 0 || jj >= w || zz < 0 || zz >= d) continue;
                    double wv = wgt[(((oc * ci + c) * k + a) * k + bb) * k + cc];
                    acc += wv * double(xat(b, c, ii, jj, zz));
                  }
            y[(((b * co + oc) * oh + i) * ow + j) * od + kk] = float(acc);
          }
}

}  // namespace bseg::ref
