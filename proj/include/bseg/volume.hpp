#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "bseg/errors.hpp"
#include "bseg/grid.hpp"

namespace bseg {

/// Voxel spacing in mm, ordered (H, W, D) like everything else.
using Spacing = std::array<double, 3>;

/// Scalar intensity volume plus physical voxel spacing.
/// Invariants: finite voxels, strictly positive spacing, all dims >= 1.
struct ImageVolume {
  GridF voxels;
  Spacing spacing{1.0, 1.0, 1.0};

  ImageVolume() = default;
  ImageVolume(GridF v, Spacing s);

  void validate() const;
};

/// {0,1} label volume. Construction rejects any other value.
struct BinaryMask {
  GridU8 voxels;

  BinaryMask() = default;
  explicit BinaryMask(GridU8 v);

  void validate() const;
  int64_t foreground_count() const;
  bool empty_mask() const { return foreground_count() == 0; }
};

/// Per-voxel probabilities in [0,1].
struct ProbabilityMap {
  GridF voxels;

  ProbabilityMap() = default;
  explicit ProbabilityMap(GridF v);

  void validate() const;
};

/// C x H x W x D feature grid emitted by the backbone, D contiguous.
struct FeatureVolume {
  int64_t c = 0, h = 0, w = 0, d = 0;
  std::vector<float> data;

  FeatureVolume() = default;
  FeatureVolume(int64_t c_, int64_t h_, int64_t w_, int64_t d_)
      : c(c_), h(h_), w(w_), d(d_), data(static_cast<size_t>(c_ * h_ * w_ * d_), 0.0f) {}

  float& at(int64_t ci, int64_t i, int64_t j, int64_t k) {
    return data[((ci * h + i) * w + j) * d + k];
  }
  float at(int64_t ci, int64_t i, int64_t j, int64_t k) const {
    return data[((ci * h + i) * w + j) * d + k];
  }
};

/// Binarize a probability map: voxel = 1 iff p >= threshold.
/// Requires 0 < threshold < 1.
BinaryMask mask_from_probability(const ProbabilityMap& p, double threshold);

/// Check that an image/label pair is consistent: shapes match and the label
/// is strictly binary. Throws ShapeMismatchError or NonBinaryLabelError
/// naming the offending field.
void validate_pair(const ImageVolume& image, const BinaryMask& label);

}  // namespace bseg
