#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "bseg/volume.hpp"

namespace bseg::morph {

/// Cubic r x r x r structuring element. r must be odd and >= 1.
struct StructuringElement {
  int r = 1;

  explicit StructuringElement(int r_);
  int radius() const { return (r - 1) / 2; }
};

/// Binary erosion with a cubic r^3 element. Out-of-volume voxels count as
/// background, so foreground touching the border erodes there. Output is
/// always a subset of the input.
BinaryMask erode(const BinaryMask& mask, int r);

/// Inner boundary band: mask XOR erode(mask, r). Thickness is (r-1)/2 voxels
/// measured from the mask surface inward.
BinaryMask boundary_label(const BinaryMask& mask, int r);

/// Per-class boundary labels for an integer label map (0 = background).
/// Returns (class id, boundary mask) pairs for every class id > 0 present,
/// in ascending id order.
std::vector<std::pair<int32_t, BinaryMask>> boundary_labels_multiclass(
    const Grid3<int32_t>& labelmap, int r);

/// Grayscale erosion: minimum over the centered r^3 cube, out-of-volume
/// treated as 0. Coincides with erode() on {0,1} inputs.
ProbabilityMap soft_erode(const ProbabilityMap& p, int r);

/// soft_erode that also records, per output voxel, the flat index of the
/// input voxel achieving the minimum (out-of-volume minimum recorded as -1).
/// Used to route gradients through the min filter.
void soft_erode_argmin(const GridF& p, int r, GridF& out, std::vector<int64_t>& argmin);

}  // namespace bseg::morph
