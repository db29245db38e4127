#include "bseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bseg::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_shapes(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (!a.voxels.same_shape(b.voxels))
    throw ShapeMismatchError(std::string(what) + ": pred shape " + a.voxels.shape_str() +
                             " does not match gt " + b.voxels.shape_str());
}

// 1D lower-envelope squared distance transform (Felzenszwalb-Huttenlocher)
// with per-axis sample spacing. Sites with f = +inf are skipped.
void dt1d(const double* f, double* out, int64_t n, double step, std::vector<int64_t>& v,
          std::vector<double>& z) {
  v.resize(static_cast<size_t>(n));
  z.resize(static_cast<size_t>(n) + 1);
  const double s2 = step * step;
  int64_t k = -1;
  for (int64_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s;
    while (true) {
      int64_t p = v[k];
      s = ((f[q] + s2 * double(q) * double(q)) - (f[p] + s2 * double(p) * double(p))) /
          (2.0 * s2 * double(q - p));
      if (s <= z[k]) {
        --k;
        if (k < 0) {
          k = 0;
          v[0] = q;
          z[0] = -kInf;
          z[1] = kInf;
          break;
        }
      } else {
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
        break;
      }
    }
  }
  if (k < 0) {
    for (int64_t i = 0; i < n; ++i) out[i] = kInf;
    return;
  }
  int64_t j = 0;
  for (int64_t i = 0; i < n; ++i) {
    while (z[j + 1] < double(i)) ++j;
    double dq = double(i - v[j]) * step;
    out[i] = dq * dq + f[v[j]];
  }
}

}  // namespace

double dice_coefficient(const BinaryMask& pred, const BinaryMask& gt) {
  check_shapes(pred, gt, "dice");
  int64_t inter = 0, np = 0, ng = 0;
  const auto& p = pred.voxels.data;
  const auto& g = gt.voxels.data;
  for (size_t i = 0; i < p.size(); ++i) {
    np += p[i];
    ng += g[i];
    inter += p[i] & g[i];
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * double(inter) / double(np + ng);
}

double jaccard_index(const BinaryMask& pred, const BinaryMask& gt) {
  check_shapes(pred, gt, "jaccard");
  int64_t inter = 0, uni = 0;
  const auto& p = pred.voxels.data;
  const auto& g = gt.voxels.data;
  for (size_t i = 0; i < p.size(); ++i) {
    inter += p[i] & g[i];
    uni += p[i] | g[i];
  }
  if (uni == 0) return 1.0;
  return double(inter) / double(uni);
}

std::vector<std::array<int64_t, 3>> surface_voxels(const BinaryMask& mask) {
  const auto& g = mask.voxels;
  std::vector<std::array<int64_t, 3>> out;
  for (int64_t i = 0; i < g.h; ++i)
    for (int64_t j = 0; j < g.w; ++j)
      for (int64_t k = 0; k < g.d; ++k) {
        if (!g.at(i, j, k)) continue;
        bool surf = i == 0 || i == g.h - 1 || j == 0 || j == g.w - 1 || k == 0 || k == g.d - 1;
        if (!surf)
          surf = !g.at(i - 1, j, k) || !g.at(i + 1, j, k) || !g.at(i, j - 1, k) ||
                 !g.at(i, j + 1, k) || !g.at(i, j, k - 1) || !g.at(i, j, k + 1);
        if (surf) out.push_back({i, j, k});
      }
  return out;
}

std::vector<double> squared_distance_transform(const std::vector<uint8_t>& seeds, int64_t h,
                                               int64_t w, int64_t d, const Spacing& spacing) {
  std::vector<double> dist(seeds.size());
  for (size_t i = 0; i < seeds.size(); ++i) dist[i] = seeds[i] ? 0.0 : kInf;

  // Pass along D (contiguous lines).
#pragma omp parallel
  {
    std::vector<int64_t> v;
    std::vector<double> z, line, res;
#pragma omp for schedule(static)
    for (int64_t ij = 0; ij < h * w; ++ij) {
      double* row = dist.data() + ij * d;
      res.resize(static_cast<size_t>(d));
      dt1d(row, res.data(), d, spacing[2], v, z);
      std::copy(res.begin(), res.end(), row);
    }

    // Pass along W.
#pragma omp for schedule(static) collapse(2)
    for (int64_t i = 0; i < h; ++i)
      for (int64_t k = 0; k < d; ++k) {
        line.resize(static_cast<size_t>(w));
        res.resize(static_cast<size_t>(w));
        for (int64_t j = 0; j < w; ++j) line[j] = dist[(i * w + j) * d + k];
        dt1d(line.data(), res.data(), w, spacing[1], v, z);
        for (int64_t j = 0; j < w; ++j) dist[(i * w + j) * d + k] = res[j];
      }

    // Pass along H.
#pragma omp for schedule(static) collapse(2)
    for (int64_t j = 0; j < w; ++j)
      for (int64_t k = 0; k < d; ++k) {
        line.resize(static_cast<size_t>(h));
        res.resize(static_cast<size_t>(h));
        for (int64_t i = 0; i < h; ++i) line[i] = dist[(i * w + j) * d + k];
        dt1d(line.data(), res.data(), h, spacing[0], v, z);
        for (int64_t i = 0; i < h; ++i) dist[(i * w + j) * d + k] = res[i];
      }
  }
  return dist;
}

namespace {

// Pooled symmetric surface distances between two non-empty masks.
std::vector<double> pooled_surface_distances(const BinaryMask& pred, const BinaryMask& gt,
                                             const Spacing& spacing, const char* what) {
  check_shapes(pred, gt, what);
  auto sp = surface_voxels(pred);
  auto sg = surface_voxels(gt);
  if (sp.empty() || sg.empty())
    throw EmptyMaskError(std::string(what) + ": undefined for an empty mask (pred surface " +
                         std::to_string(sp.size()) + " voxels, gt surface " +
                         std::to_string(sg.size()) + ")");
  const int64_t h = pred.voxels.h, w = pred.voxels.w, d = pred.voxels.d;

  auto seeds_of = [&](const std::vector<std::array<int64_t, 3>>& s) {
    std::vector<uint8_t> seeds(static_cast<size_t>(h * w * d), 0);
    for (const auto& p : s) seeds[(p[0] * w + p[1]) * d + p[2]] = 1;
    return seeds;
  };
  auto dt_g = squared_distance_transform(seeds_of(sg), h, w, d, spacing);
  auto dt_p = squared_distance_transform(seeds_of(sp), h, w, d, spacing);

  std::vector<double> pooled;
  pooled.reserve(sp.size() + sg.size());
  for (const auto& p : sp) pooled.push_back(std::sqrt(dt_g[(p[0] * w + p[1]) * d + p[2]]));
  for (const auto& p : sg) pooled.push_back(std::sqrt(dt_p[(p[0] * w + p[1]) * d + p[2]]));
  return pooled;
}

}  // namespace

double hausdorff_distance(const BinaryMask& pred, const BinaryMask& gt, const Spacing& spacing,
                          double percentile) {
  if (!(percentile > 0.0 && percentile <= 100.0))
    throw ValidationError("percentile: must be in (0, 100], got " + std::to_string(percentile));
  auto pooled = pooled_surface_distances(pred, gt, spacing, "hausdorff");
  std::sort(pooled.begin(), pooled.end());
  int64_t n = static_cast<int64_t>(pooled.size());
  int64_t rank = static_cast<int64_t>(std::ceil(percentile / 100.0 * double(n)));
  rank = std::clamp<int64_t>(rank, 1, n);
  return pooled[rank - 1];
}

double average_surface_distance(const BinaryMask& pred, const BinaryMask& gt,
                                const Spacing& spacing) {
  auto pooled = pooled_surface_distances(pred, gt, spacing, "asd");
  double s = 0.0;
  for (double v : pooled) s += v;
  return s / double(pooled.size());
}

SegMetrics evaluate_pair(const BinaryMask& pred, const BinaryMask& gt, const Spacing& spacing,
                         double hd_percentile) {
  SegMetrics m;
  m.dice = dice_coefficient(pred, gt);
  m.jaccard = jaccard_index(pred, gt);
  m.hausdorff_percentile = hd_percentile;
  m.hausdorff_mm = hausdorff_distance(pred, gt, spacing, hd_percentile);
  m.asd_mm = average_surface_distance(pred, gt, spacing);
  return m;
}

double volume_diagonal_mm(int64_t h, int64_t w, int64_t d, const Spacing& spacing) {
  double a = double(h) * spacing[0];
  double b = double(w) * spacing[1];
  double c = double(d) * spacing[2];
  return std::sqrt(a * a + b * b + c * c);
}

}  // namespace bseg::metrics
