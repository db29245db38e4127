#pragma once

// Serial reference implementations. These are deliberately naive
// (triple-loop, all-pairs) and share no code with the optimized kernels in
// bseg_core; tests compare the two and the benchmark times them.

#include <array>
#include <cstdint>
#include <vector>

#include "bseg/volume.hpp"

namespace bseg::ref {

/// Triple-loop binary erosion: output voxel = 1 iff every voxel of the
/// centered r^3 cube (out-of-volume = 0) is 1.
BinaryMask erode_naive(const BinaryMask& mask, int r);

/// Boundary band via the naive erosion (XOR with the input).
BinaryMask boundary_label_naive(const BinaryMask& mask, int r);

/// Triple-loop min filter over the centered r^3 cube, out-of-volume = 0.
GridF min_filter_naive(const GridF& g, int r);

/// All foreground voxels with a 6-connected background (or out-of-volume)
/// neighbor.
std::vector<std::array<int64_t, 3>> surface_voxels_naive(const BinaryMask& mask);

/// Directed surface distances d(a -> S_b) for every a in S_a, by brute-force
/// scan over all pairs. Distances are physical (spacing-scaled Euclidean).
std::vector<double> directed_surface_distances_naive(const BinaryMask& a, const BinaryMask& b,
                                                     const Spacing& spacing);

/// Nearest-rank percentile of the pooled symmetric surface distances.
double hausdorff_naive(const BinaryMask& pred, const BinaryMask& gt, const Spacing& spacing,
                       double percentile);

/// Mean of the pooled symmetric surface distances.
double average_surface_distance_naive(const BinaryMask& pred, const BinaryMask& gt,
                                      const Spacing& spacing);

double dice_naive(const BinaryMask& pred, const BinaryMask& gt);
double jaccard_naive(const BinaryMask& pred, const BinaryMask& gt);

/// Naive direct 3D convolution (stride/pad as given), double accumulation.
/// x: (n, ci, h, w, d); wgt: (co, ci, k, k, k); y: (n, co, oh, ow, od).
void conv3d_naive(const float* x, const float* wgt, const float* bias, float* y, int64_t n,
                  int64_t ci, int64_t h, int64_t w, int64_t d, int64_t co, int k, int stride,
                  int pad);

}  // namespace bseg::ref
