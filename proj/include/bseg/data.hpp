#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bseg/rng.hpp"
#include "bseg/volume.hpp"

namespace bseg::data {

/// One training or evaluation case: an intensity volume, an optional binary
/// label, and a lazily built boundary band for the labeled case.
struct Sample {
  std::string id;
  ImageVolume image;
  std::optional<BinaryMask> label;
  std::optional<BinaryMask> boundary_cache;
  int boundary_radius = 0;

  void validate() const;

  /// Boundary band of the label at kernel radius r, cached per sample.
  /// Calling with a different r rebuilds the cache. Throws MissingLabelError
  /// when the sample is unlabeled.
  const BinaryMask& boundary(int r);
};

/// Train/test file lists plus the labeled subset of the training set.
/// Ids are file paths relative to `root` (the manifest's directory).
struct DatasetManifest {
  std::string root;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::vector<std::string> labeled_ids;
  std::vector<std::string> unlabeled_ids;

  void validate() const;
  std::string resolve(const std::string& id) const;
};

/// Parse a manifest JSON file: {"train": [...], "test": [...], "labeled":
/// [...]}. "labeled" may be omitted, in which case every training id is
/// labeled. Ids must be unique; train and test must not overlap.
DatasetManifest load_manifest(const std::string& path);

/// Re-partition the training ids into `la` labeled and the rest unlabeled,
/// deterministically from (la, seed).
void select_labeled(DatasetManifest& m, int64_t la, uint64_t seed);

enum class SampleFormat { hdf5, rawjson };

SampleFormat sample_format_from_string(const std::string& s);
std::string to_string(SampleFormat f);

/// Detect the on-disk format: directories are rawjson, files are hdf5.
SampleFormat detect_sample_format(const std::string& path);

Sample load_sample(const std::string& path, SampleFormat format);
Sample load_sample(const std::string& path);
void save_sample(const std::string& path, const Sample& s, SampleFormat format);

/// Parameters of the phantom corpus: randomly placed ellipsoids with a
/// smooth radial surface perturbation, constant foreground contrast, and
/// additive Gaussian noise. The label is the exact indicator.
struct SyntheticSpec {
  int64_t volume_size = 64;
  double semi_axis_min = 10.0;
  double semi_axis_max = 20.0;
  double perturb_amplitude = 0.15;
  double contrast = 1.0;
  double noise_sigma = 0.1;
  int64_t sample_count = 10;
  uint64_t seed = 0;
  Spacing spacing{1.0, 1.0, 1.0};

  void validate() const;
  double center_jitter() const { return 0.1 * double(volume_size); }
};

std::vector<Sample> generate_synthetic(const SyntheticSpec& spec);

/// Random aligned crop. With probability fg_bias the crop is forced to
/// contain at least one foreground voxel (when the label has any). Axes
/// shorter than the patch are zero-padded first.
Sample random_patch(const Sample& s, std::array<int64_t, 3> patch_size, Rng& rng,
                    double fg_bias = 0.5);

struct AugmentSpec {
  double flip_prob = 0.5;
  double rot90_prob = 0.5;

  void validate() const;
};

/// Random axis flips plus a quarter-turn rotation in the H-W plane, applied
/// identically to image, label, and boundary cache.
Sample augment(const Sample& s, const AugmentSpec& spec, Rng& rng);

/// Per-window prediction: probability patches for both heads, same shape as
/// the input patch.
struct WindowPrediction {
  GridF seg;
  GridF bnd;
};

using PatchPredictor = std::function<WindowPrediction(const GridF& patch)>;

/// Tile the volume with windows at the given strides (last window clamped to
/// the far edge), run the predictor on each, and average overlapping
/// predictions per voxel. Volumes smaller than a patch are zero-padded and
/// the result cropped back.
std::pair<ProbabilityMap, ProbabilityMap> sliding_window_infer(
    const PatchPredictor& predict, const ImageVolume& image,
    std::array<int64_t, 3> patch_size, std::array<int64_t, 3> strides);

}  // namespace bseg::data
