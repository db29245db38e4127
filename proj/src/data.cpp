#include "bseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bseg/errors.hpp"
#include "bseg/morphology.hpp"

namespace fs = std::filesystem;

namespace bseg::data {

namespace {

bool dims_match(const GridU8& a, const GridF& b) {
  return a.h == b.h && a.w == b.w && a.d == b.d;
}

}  // namespace

void Sample::validate() const {
  image.validate();
  if (label) {
    if (!dims_match(label->voxels, image.voxels))
      throw ShapeMismatchError("sample " + id + ": label shape " + label->voxels.shape_str() +
                               " does not match image " + image.voxels.shape_str());
    label->validate();
  }
  if (boundary_cache) {
    if (!label) throw ValidationError("sample " + id + ": boundary cache without a label");
    if (!dims_match(boundary_cache->voxels, image.voxels))
      throw ShapeMismatchError("sample " + id + ": boundary cache shape " +
                               boundary_cache->voxels.shape_str() + " does not match image " +
                               image.voxels.shape_str());
  }
}

const BinaryMask& Sample::boundary(int r) {
  if (!label) throw MissingLabelError("sample " + id + " has no label");
  if (!boundary_cache || boundary_radius != r) {
    boundary_cache = morph::boundary_label(*label, r);
    boundary_radius = r;
  }
  return *boundary_cache;
}

namespace {

void check_unique(const std::vector<std::string>& ids, const std::string& list_name) {
  std::set<std::string> seen;
  for (const auto& id : ids)
    if (!seen.insert(id).second)
      throw ValidationError("manifest: duplicate id '" + id + "' in " + list_name);
}

}  // namespace

void DatasetManifest::validate() const {
  check_unique(train_ids, "train");
  check_unique(test_ids, "test");
  std::set<std::string> train(train_ids.begin(), train_ids.end());
  for (const auto& id : test_ids)
    if (train.count(id))
      throw ValidationError("manifest: id '" + id + "' overlaps train and test");
  check_unique(labeled_ids, "labeled");
  for (const auto& id : labeled_ids)
    if (!train.count(id))
      throw ValidationError("manifest: labeled id '" + id + "' is not a training id");
  std::set<std::string> labeled(labeled_ids.begin(), labeled_ids.end());
  for (const auto& id : unlabeled_ids)
    if (labeled.count(id))
      throw ValidationError("manifest: id '" + id + "' is both labeled and unlabeled");
}

std::string DatasetManifest::resolve(const std::string& id) const {
  return (fs::path(root) / id).string();
}

namespace {

std::vector<std::string> string_list(const nlohmann::json& j, const std::string& key) {
  if (!j.contains(key)) return {};
  const auto& arr = j.at(key);
  if (!arr.is_array()) throw ParseError("manifest: '" + key + "' must be an array");
  std::vector<std::string> out;
  for (const auto& v : arr) {
    if (!v.is_string()) throw ParseError("manifest: '" + key + "' entries must be strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

void rebuild_unlabeled(DatasetManifest& m) {
  std::set<std::string> labeled(m.labeled_ids.begin(), m.labeled_ids.end());
  m.unlabeled_ids.clear();
  for (const auto& id : m.train_ids)
    if (!labeled.count(id)) m.unlabeled_ids.push_back(id);
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest " + path + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("train") || !j.contains("test"))
    throw ParseError("manifest " + path + ": expected object with 'train' and 'test'");

  DatasetManifest m;
  m.root = fs::path(path).parent_path().string();
  m.train_ids = string_list(j, "train");
  m.test_ids = string_list(j, "test");
  m.labeled_ids = j.contains("labeled") ? string_list(j, "labeled") : m.train_ids;
  rebuild_unlabeled(m);
  m.validate();
  return m;
}

void select_labeled(DatasetManifest& m, int64_t la, uint64_t seed) {
  if (la < 0 || la > int64_t(m.train_ids.size()))
    throw ConfigError("labeled count " + std::to_string(la) + " outside [0, " +
                      std::to_string(m.train_ids.size()) + "]");
  std::vector<std::string> pool = m.train_ids;
  Rng rng(seed);
  for (int64_t i = int64_t(pool.size()) - 1; i > 0; --i)
    std::swap(pool[size_t(i)], pool[size_t(rng.uniform_int(0, i))]);
  std::set<std::string> chosen(pool.begin(), pool.begin() + la);
  m.labeled_ids.clear();
  for (const auto& id : m.train_ids)
    if (chosen.count(id)) m.labeled_ids.push_back(id);
  rebuild_unlabeled(m);
  m.validate();
}

void SyntheticSpec::validate() const {
  if (volume_size < 8) throw ValidationError("synthetic: volume_size must be at least 8");
  if (semi_axis_min <= 0.0 || semi_axis_max < semi_axis_min)
    throw ValidationError("synthetic: require 0 < semi_axis_min <= semi_axis_max");
  if (perturb_amplitude < 0.0 || perturb_amplitude >= 1.0)
    throw ValidationError("synthetic: perturb_amplitude must be in [0, 1)");
  double reach = semi_axis_max * (1.0 + perturb_amplitude) + center_jitter();
  if (reach > 0.5 * double(volume_size) - 1.0)
    throw ValidationError("synthetic: ellipsoid does not fit inside the volume");
  if (noise_sigma < 0.0) throw ValidationError("synthetic: noise_sigma must be non-negative");
  if (sample_count < 1) throw ValidationError("synthetic: sample_count must be positive");
  for (double s : spacing)
    if (!(s > 0.0)) throw ValidationError("synthetic: spacing must be positive");
}

namespace {

// Smooth scalar field in [-1, 1]: trilinear interpolation of a coarse random
// control grid spanning the volume.
struct SmoothField {
  static constexpr int kGrid = 4;
  double c[kGrid][kGrid][kGrid];

  explicit SmoothField(Rng& rng) {
    for (auto& plane : c)
      for (auto& row : plane)
        for (double& v : row) v = rng.uniform(-1.0, 1.0);
  }

  double at(double x, double y, double z, int64_t size) const {
    double scale = double(kGrid - 1) / double(size - 1);
    double gx = x * scale, gy = y * scale, gz = z * scale;
    int ix = std::min(int(gx), kGrid - 2), iy = std::min(int(gy), kGrid - 2),
        iz = std::min(int(gz), kGrid - 2);
    double fx = gx - ix, fy = gy - iy, fz = gz - iz;
    double v = 0.0;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int d = 0; d < 2; ++d) {
          double w = (a ? fx : 1.0 - fx) * (b ? fy : 1.0 - fy) * (d ? fz : 1.0 - fz);
          v += w * c[ix + a][iy + b][iz + d];
        }
    return v;
  }
};

}  // namespace

std::vector<Sample> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const int64_t n = spec.volume_size;
  const double mid = 0.5 * double(n - 1);
  const double jit = spec.center_jitter();

  std::vector<Sample> out;
  Rng base(spec.seed);
  for (int64_t s = 0; s < spec.sample_count; ++s) {
    Rng rng = base.child(uint64_t(s));
    double cx = rng.uniform(mid - jit, mid + jit);
    double cy = rng.uniform(mid - jit, mid + jit);
    double cz = rng.uniform(mid - jit, mid + jit);
    double ax = rng.uniform(spec.semi_axis_min, spec.semi_axis_max);
    double ay = rng.uniform(spec.semi_axis_min, spec.semi_axis_max);
    double az = rng.uniform(spec.semi_axis_min, spec.semi_axis_max);
    SmoothField field(rng);

    GridU8 label(n, n, n);
    GridF image(n, n, n);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j)
        for (int64_t k = 0; k < n; ++k) {
          double qx = (double(i) - cx) / ax;
          double qy = (double(j) - cy) / ay;
          double qz = (double(k) - cz) / az;
          double q = std::sqrt(qx * qx + qy * qy + qz * qz);
          double radius = 1.0 + spec.perturb_amplitude * field.at(double(i), double(j), double(k), n);
          uint8_t fg = q <= radius ? 1 : 0;
          label.at(i, j, k) = fg;
          double v = spec.contrast * double(fg);
          if (spec.noise_sigma > 0.0) v += spec.noise_sigma * rng.normal();
          image.at(i, j, k) = float(v);
        }

    Sample sample;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synthetic_%04lld", (long long)s);
    sample.id = buf;
    sample.image = ImageVolume(std::move(image), spec.spacing);
    sample.label = BinaryMask(std::move(label));
    sample.validate();
    out.push_back(std::move(sample));
  }
  return out;
}

namespace {

template <typename T>
Grid3<T> pad_to(const Grid3<T>& g, int64_t ph, int64_t pw, int64_t pd) {
  if (g.h == ph && g.w == pw && g.d == pd) return g;
  Grid3<T> out(ph, pw, pd);
  for (int64_t i = 0; i < g.h; ++i)
    for (int64_t j = 0; j < g.w; ++j)
      for (int64_t k = 0; k < g.d; ++k) out.at(i, j, k) = g.at(i, j, k);
  return out;
}

template <typename T>
Grid3<T> crop(const Grid3<T>& g, std::array<int64_t, 3> corner, std::array<int64_t, 3> extent) {
  Grid3<T> out(extent[0], extent[1], extent[2]);
  for (int64_t i = 0; i < extent[0]; ++i)
    for (int64_t j = 0; j < extent[1]; ++j)
      for (int64_t k = 0; k < extent[2]; ++k)
        out.at(i, j, k) = g.at(corner[0] + i, corner[1] + j, corner[2] + k);
  return out;
}

}  // namespace

Sample random_patch(const Sample& s, std::array<int64_t, 3> patch_size, Rng& rng,
                    double fg_bias) {
  for (int64_t p : patch_size)
    if (p < 1) throw ValidationError("patch size must be positive");
  if (fg_bias < 0.0 || fg_bias > 1.0) throw ValidationError("fg_bias must be in [0, 1]");
  s.validate();

  const auto& img = s.image.voxels;
  int64_t ph = std::max(img.h, patch_size[0]);
  int64_t pw = std::max(img.w, patch_size[1]);
  int64_t pd = std::max(img.d, patch_size[2]);
  GridF image = pad_to(img, ph, pw, pd);
  std::optional<GridU8> label, bcache;
  if (s.label) label = pad_to(s.label->voxels, ph, pw, pd);
  if (s.boundary_cache) bcache = pad_to(s.boundary_cache->voxels, ph, pw, pd);

  std::array<int64_t, 3> dims{ph, pw, pd};
  std::array<int64_t, 3> corner{0, 0, 0};
  bool biased = label && rng.uniform() < fg_bias;
  if (biased) {
    std::vector<int64_t> fg;
    for (int64_t idx = 0; idx < label->size(); ++idx)
      if (label->data[size_t(idx)]) fg.push_back(idx);
    if (fg.empty()) {
      biased = false;
    } else {
      int64_t flat = fg[size_t(rng.uniform_int(0, int64_t(fg.size()) - 1))];
      std::array<int64_t, 3> v{flat / (pw * pd), (flat / pd) % pw, flat % pd};
      for (int a = 0; a < 3; ++a) {
        int64_t lo = std::max<int64_t>(0, v[a] - patch_size[a] + 1);
        int64_t hi = std::min(dims[a] - patch_size[a], v[a]);
        corner[a] = rng.uniform_int(lo, hi);
      }
    }
  }
  if (!biased)
    for (int a = 0; a < 3; ++a) corner[a] = rng.uniform_int(0, dims[a] - patch_size[a]);

  Sample out;
  out.id = s.id;
  out.image = ImageVolume(crop(image, corner, patch_size), s.image.spacing);
  if (label) out.label = BinaryMask(crop(*label, corner, patch_size));
  if (bcache) {
    out.boundary_cache = BinaryMask(crop(*bcache, corner, patch_size));
    out.boundary_radius = s.boundary_radius;
  }
  return out;
}

void AugmentSpec::validate() const {
  if (flip_prob < 0.0 || flip_prob > 1.0 || rot90_prob < 0.0 || rot90_prob > 1.0)
    throw ValidationError("augmentation probabilities must be in [0, 1]");
}

Sample augment(const Sample& s, const AugmentSpec& spec, Rng& rng) {
  spec.validate();
  bool flips[3];
  for (bool& f : flips) f = rng.uniform() < spec.flip_prob;
  int quarter_turns = 0;
  if (rng.uniform() < spec.rot90_prob) quarter_turns = int(rng.uniform_int(1, 3));

  auto apply = [&](const auto& grid) {
    auto g = grid;
    for (int a = 0; a < 3; ++a)
      if (flips[a]) g = flip_axis(g, a);
    if (quarter_turns) g = rot90_hw(g, quarter_turns);
    return g;
  };

  Sample out;
  out.id = s.id;
  Spacing spacing = s.image.spacing;
  if (quarter_turns % 2) std::swap(spacing[0], spacing[1]);
  out.image = ImageVolume(apply(s.image.voxels), spacing);
  if (s.label) out.label = BinaryMask(apply(s.label->voxels));
  if (s.boundary_cache) {
    out.boundary_cache = BinaryMask(apply(s.boundary_cache->voxels));
    out.boundary_radius = s.boundary_radius;
  }
  return out;
}

std::pair<ProbabilityMap, ProbabilityMap> sliding_window_infer(
    const PatchPredictor& predict, const ImageVolume& image,
    std::array<int64_t, 3> patch_size, std::array<int64_t, 3> strides) {
  image.validate();
  for (int a = 0; a < 3; ++a) {
    if (patch_size[a] < 1) throw ValidationError("patch size must be positive");
    if (strides[a] < 1 || strides[a] > patch_size[a])
      throw ValidationError("stride must be in [1, patch_size] per axis");
  }

  const auto& img = image.voxels;
  int64_t ph = std::max(img.h, patch_size[0]);
  int64_t pw = std::max(img.w, patch_size[1]);
  int64_t pd = std::max(img.d, patch_size[2]);
  GridF padded = pad_to(img, ph, pw, pd);
  std::array<int64_t, 3> dims{ph, pw, pd};

  auto corners = [](int64_t dim, int64_t ps, int64_t stride) {
    std::vector<int64_t> cs;
    for (int64_t c = 0;; c += stride) {
      if (c + ps >= dim) {
        cs.push_back(dim - ps);
        break;
      }
      cs.push_back(c);
    }
    return cs;
  };
  auto ch = corners(dims[0], patch_size[0], strides[0]);
  auto cw = corners(dims[1], patch_size[1], strides[1]);
  auto cd = corners(dims[2], patch_size[2], strides[2]);

  std::vector<double> sum_seg(size_t(ph * pw * pd), 0.0), sum_bnd(size_t(ph * pw * pd), 0.0);
  std::vector<int32_t> count(size_t(ph * pw * pd), 0);

  for (int64_t ci : ch)
    for (int64_t cj : cw)
      for (int64_t ck : cd) {
        GridF patch = crop(padded, {ci, cj, ck}, patch_size);
        WindowPrediction pred = predict(patch);
        if (!pred.seg.same_shape(patch) || !pred.bnd.same_shape(patch))
          throw ValidationError("window prediction shape " + pred.seg.shape_str() +
                                " does not match patch " + patch.shape_str());
        for (int64_t i = 0; i < patch_size[0]; ++i)
          for (int64_t j = 0; j < patch_size[1]; ++j)
            for (int64_t k = 0; k < patch_size[2]; ++k) {
              size_t at = size_t(((ci + i) * pw + (cj + j)) * pd + (ck + k));
              sum_seg[at] += double(pred.seg.at(i, j, k));
              sum_bnd[at] += double(pred.bnd.at(i, j, k));
              count[at]++;
            }
      }

  GridF seg(img.h, img.w, img.d), bnd(img.h, img.w, img.d);
  for (int64_t i = 0; i < img.h; ++i)
    for (int64_t j = 0; j < img.w; ++j)
      for (int64_t k = 0; k < img.d; ++k) {
        size_t at = size_t((i * pw + j) * pd + k);
        seg.at(i, j, k) = float(sum_seg[at] / count[at]);
        bnd.at(i, j, k) = float(sum_bnd[at] / count[at]);
      }
  return {ProbabilityMap(std::move(seg)), ProbabilityMap(std::move(bnd))};
}

}  // namespace bseg::data
