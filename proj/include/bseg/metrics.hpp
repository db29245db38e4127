#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "bseg/volume.hpp"

namespace bseg::metrics {

/// Evaluation record for one prediction-vs-truth pair.
struct SegMetrics {
  double dice = 0.0;
  double jaccard = 0.0;
  double hausdorff_mm = 0.0;
  double asd_mm = 0.0;
  double hausdorff_percentile = 95.0;
};

/// 2|P∩G| / (|P|+|G|); 1 when both masks are empty.
double dice_coefficient(const BinaryMask& pred, const BinaryMask& gt);

/// |P∩G| / |P∪G|; 1 when both masks are empty.
double jaccard_index(const BinaryMask& pred, const BinaryMask& gt);

/// Foreground voxels with at least one 6-connected neighbor that is
/// background or out of volume. Returned in scan order (H, then W, then D).
std::vector<std::array<int64_t, 3>> surface_voxels(const BinaryMask& mask);

/// Nearest-rank percentile of the pooled symmetric surface-to-surface
/// distances (physical mm). percentile = 100 gives the exact Hausdorff
/// distance. Throws EmptyMaskError if either mask is empty.
double hausdorff_distance(const BinaryMask& pred, const BinaryMask& gt, const Spacing& spacing,
                          double percentile);

/// Mean of the pooled symmetric surface distances in mm.
/// Throws EmptyMaskError if either mask is empty.
double average_surface_distance(const BinaryMask& pred, const BinaryMask& gt,
                                const Spacing& spacing);

/// All four metrics for one pair. Throws EmptyMaskError when a surface
/// metric is undefined; callers with a sentinel policy catch it.
SegMetrics evaluate_pair(const BinaryMask& pred, const BinaryMask& gt, const Spacing& spacing,
                         double hd_percentile);

/// Physical length of the volume diagonal, the default sentinel for surface
/// metrics of empty predictions.
double volume_diagonal_mm(int64_t h, int64_t w, int64_t d, const Spacing& spacing);

/// Exact squared Euclidean distance transform of `seeds` (flat H*W*D bool
/// grid): per voxel, the squared physical distance to the nearest seed.
/// Infinity when there are no seeds.
std::vector<double> squared_distance_transform(const std::vector<uint8_t>& seeds, int64_t h,
                                               int64_t w, int64_t d, const Spacing& spacing);

}  // namespace bseg::metrics
