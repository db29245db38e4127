#include "bseg/volume.hpp"

#include <cmath>

namespace bseg {

ImageVolume::ImageVolume(GridF v, Spacing s) : voxels(std::move(v)), spacing(s) { validate(); }

void ImageVolume::validate() const {
  if (voxels.h < 1 || voxels.w < 1 || voxels.d < 1)
    throw ValidationError("image: all dimensions must be >= 1, got " + voxels.shape_str());
  for (int axis = 0; axis < 3; ++axis)
    if (!(spacing[axis] > 0.0) || !std::isfinite(spacing[axis]))
      throw ValidationError("image: spacing[" + std::to_string(axis) +
                            "] must be strictly positive, got " + std::to_string(spacing[axis]));
  for (float v : voxels.data)
    if (!std::isfinite(v)) throw ValidationError("image: voxels contain a non-finite value");
}

BinaryMask::BinaryMask(GridU8 v) : voxels(std::move(v)) { validate(); }

void BinaryMask::validate() const {
  if (voxels.h < 1 || voxels.w < 1 || voxels.d < 1)
    throw ValidationError("label: all dimensions must be >= 1, got " + voxels.shape_str());
  for (uint8_t v : voxels.data)
    if (v > 1)
      throw NonBinaryLabelError("label: voxel value " + std::to_string(int(v)) +
                                " is not in {0,1}");
}

int64_t BinaryMask::foreground_count() const {
  int64_t n = 0;
  for (uint8_t v : voxels.data) n += v;
  return n;
}

ProbabilityMap::ProbabilityMap(GridF v) : voxels(std::move(v)) { validate(); }

void ProbabilityMap::validate() const {
  for (float v : voxels.data)
    if (!(v >= 0.0f && v <= 1.0f))
      throw ValidationError("probability map: voxel value " + std::to_string(v) +
                            " outside [0,1]");
}

BinaryMask mask_from_probability(const ProbabilityMap& p, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ValidationError("threshold: must satisfy 0 < t < 1, got " + std::to_string(threshold));
  GridU8 out(p.voxels.h, p.voxels.w, p.voxels.d);
  const float t = static_cast<float>(threshold);
  for (int64_t i = 0; i < p.voxels.size(); ++i)
    out.data[i] = p.voxels.data[i] >= t ? 1 : 0;
  return BinaryMask(std::move(out));
}

void validate_pair(const ImageVolume& image, const BinaryMask& label) {
  image.validate();
  label.validate();
  if (image.voxels.h != label.voxels.h || image.voxels.w != label.voxels.w ||
      image.voxels.d != label.voxels.d)
    throw ShapeMismatchError("label: shape " + label.voxels.shape_str() +
                             " does not match image " + image.voxels.shape_str());
}

}  // namespace bseg
