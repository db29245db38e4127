#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include <hdf5.h>
#include <json.hpp>

#include "bseg/data.hpp"
#include "bseg/errors.hpp"

namespace fs = std::filesystem;

namespace bseg::data {

SampleFormat sample_format_from_string(const std::string& s) {
  if (s == "hdf5") return SampleFormat::hdf5;
  if (s == "rawjson") return SampleFormat::rawjson;
  throw ConfigError("unknown sample format '" + s + "' (expected hdf5 or rawjson)");
}

std::string to_string(SampleFormat f) {
  return f == SampleFormat::hdf5 ? "hdf5" : "rawjson";
}

SampleFormat detect_sample_format(const std::string& path) {
  return fs::is_directory(path) ? SampleFormat::rawjson : SampleFormat::hdf5;
}

namespace {

std::string id_from_path(const std::string& path) {
  fs::path p(path);
  std::string stem = p.stem().string();
  return stem.empty() ? p.filename().string() : stem;
}

// ---------------------------------------------------------------- hdf5 ----

void silence_hdf5() {
  static bool done = false;
  if (!done) {
    H5Eset_auto2(H5E_DEFAULT, nullptr, nullptr);
    done = true;
  }
}

struct Hid {
  hid_t id = H5I_INVALID_HID;
  herr_t (*closer)(hid_t) = nullptr;

  Hid(hid_t i, herr_t (*c)(hid_t)) : id(i), closer(c) {}
  ~Hid() {
    if (id >= 0 && closer) closer(id);
  }
  Hid(const Hid&) = delete;
  Hid& operator=(const Hid&) = delete;
  bool ok() const { return id >= 0; }
};

std::array<int64_t, 3> dataset_dims(hid_t dset, const std::string& name,
                                    const std::string& path) {
  Hid space(H5Dget_space(dset), H5Sclose);
  if (!space.ok() || H5Sget_simple_extent_ndims(space.id) != 3)
    throw ValidationError(path + ": dataset '" + name + "' must be 3-dimensional");
  hsize_t dims[3];
  H5Sget_simple_extent_dims(space.id, dims, nullptr);
  return {int64_t(dims[0]), int64_t(dims[1]), int64_t(dims[2])};
}

Sample load_sample_hdf5(const std::string& path) {
  silence_hdf5();
  Hid file(H5Fopen(path.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT), H5Fclose);
  if (!file.ok()) throw IoError("cannot open hdf5 file " + path);

  if (H5Lexists(file.id, "image", H5P_DEFAULT) <= 0)
    throw ParseError(path + ": missing dataset 'image'");
  Hid img(H5Dopen2(file.id, "image", H5P_DEFAULT), H5Dclose);
  if (!img.ok()) throw IoError(path + ": cannot open dataset 'image'");
  {
    Hid type(H5Dget_type(img.id), H5Tclose);
    if (H5Tget_class(type.id) != H5T_FLOAT || H5Tget_size(type.id) != 4)
      throw ValidationError(path + ": dataset 'image' must be float32");
  }
  auto dims = dataset_dims(img.id, "image", path);

  Sample s;
  s.id = id_from_path(path);
  GridF voxels(dims[0], dims[1], dims[2]);
  if (H5Dread(img.id, H5T_NATIVE_FLOAT, H5S_ALL, H5S_ALL, H5P_DEFAULT, voxels.data.data()) < 0)
    throw IoError(path + ": failed to read dataset 'image'");

  Spacing spacing{1.0, 1.0, 1.0};
  if (H5Aexists(file.id, "spacing") > 0) {
    Hid attr(H5Aopen(file.id, "spacing", H5P_DEFAULT), H5Aclose);
    Hid aspace(H5Aget_space(attr.id), H5Sclose);
    hsize_t n = 0;
    H5Sget_simple_extent_dims(aspace.id, &n, nullptr);
    if (H5Sget_simple_extent_ndims(aspace.id) != 1 || n != 3)
      throw ValidationError(path + ": attribute 'spacing' must hold 3 values");
    if (H5Aread(attr.id, H5T_NATIVE_DOUBLE, spacing.data()) < 0)
      throw IoError(path + ": failed to read attribute 'spacing'");
  }
  s.image = ImageVolume(std::move(voxels), spacing);

  if (H5Lexists(file.id, "label", H5P_DEFAULT) > 0) {
    Hid lbl(H5Dopen2(file.id, "label", H5P_DEFAULT), H5Dclose);
    if (!lbl.ok()) throw IoError(path + ": cannot open dataset 'label'");
    {
      Hid type(H5Dget_type(lbl.id), H5Tclose);
      if (H5Tget_class(type.id) != H5T_INTEGER || H5Tget_size(type.id) != 1)
        throw ValidationError(path + ": dataset 'label' must be uint8");
    }
    auto ldims = dataset_dims(lbl.id, "label", path);
    GridU8 lv(ldims[0], ldims[1], ldims[2]);
    if (H5Dread(lbl.id, H5T_NATIVE_UINT8, H5S_ALL, H5S_ALL, H5P_DEFAULT, lv.data.data()) < 0)
      throw IoError(path + ": failed to read dataset 'label'");
    s.label = BinaryMask(std::move(lv));
  }
  s.validate();
  return s;
}

void save_sample_hdf5(const std::string& path, const Sample& s) {
  silence_hdf5();
  s.validate();
  Hid file(H5Fcreate(path.c_str(), H5F_ACC_TRUNC, H5P_DEFAULT, H5P_DEFAULT), H5Fclose);
  if (!file.ok()) throw IoError("cannot create hdf5 file " + path);

  const auto& img = s.image.voxels;
  hsize_t dims[3] = {hsize_t(img.h), hsize_t(img.w), hsize_t(img.d)};
  Hid space(H5Screate_simple(3, dims, nullptr), H5Sclose);
  Hid dimg(H5Dcreate2(file.id, "image", H5T_IEEE_F32LE, space.id, H5P_DEFAULT, H5P_DEFAULT,
                      H5P_DEFAULT),
           H5Dclose);
  if (!dimg.ok() ||
      H5Dwrite(dimg.id, H5T_NATIVE_FLOAT, H5S_ALL, H5S_ALL, H5P_DEFAULT, img.data.data()) < 0)
    throw IoError(path + ": failed to write dataset 'image'");

  hsize_t three = 3;
  Hid aspace(H5Screate_simple(1, &three, nullptr), H5Sclose);
  Hid attr(H5Acreate2(file.id, "spacing", H5T_IEEE_F64LE, aspace.id, H5P_DEFAULT, H5P_DEFAULT),
           H5Aclose);
  if (!attr.ok() || H5Awrite(attr.id, H5T_NATIVE_DOUBLE, s.image.spacing.data()) < 0)
    throw IoError(path + ": failed to write attribute 'spacing'");

  if (s.label) {
    Hid dlbl(H5Dcreate2(file.id, "label", H5T_STD_U8LE, space.id, H5P_DEFAULT, H5P_DEFAULT,
                        H5P_DEFAULT),
             H5Dclose);
    if (!dlbl.ok() || H5Dwrite(dlbl.id, H5T_NATIVE_UINT8, H5S_ALL, H5S_ALL, H5P_DEFAULT,
                               s.label->voxels.data.data()) < 0)
      throw IoError(path + ": failed to write dataset 'label'");
  }
}

// ------------------------------------------------------------- rawjson ----

void write_binary(const fs::path& path, const void* data, size_t bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot create " + path.string());
  f.write(static_cast<const char*>(data), std::streamsize(bytes));
  if (!f) throw IoError("failed to write " + path.string());
}

void read_binary(const fs::path& path, void* data, size_t bytes) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open " + path.string());
  if (size_t(f.tellg()) != bytes)
    throw IoError(path.string() + ": expected " + std::to_string(bytes) + " bytes, found " +
                  std::to_string(size_t(f.tellg())));
  f.seekg(0);
  f.read(static_cast<char*>(data), std::streamsize(bytes));
  if (!f) throw IoError("failed to read " + path.string());
}

Sample load_sample_rawjson(const std::string& dir) {
  fs::path base(dir);
  std::ifstream mf(base / "meta.json");
  if (!mf) throw IoError("cannot open " + (base / "meta.json").string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError((base / "meta.json").string() + ": " + e.what());
  }

  if (meta.value("dtype", "") != "float32")
    throw ValidationError(dir + ": dtype must be float32");
  if (meta.value("byte_order", "") != "little")
    throw ValidationError(dir + ": byte_order must be little");
  if (!meta.contains("shape") || !meta.at("shape").is_array() || meta.at("shape").size() != 3)
    throw ParseError(dir + ": shape must be an array of 3 extents");
  std::array<int64_t, 3> dims;
  for (size_t a = 0; a < 3; ++a) {
    dims[a] = meta.at("shape").at(a).get<int64_t>();
    if (dims[a] < 1) throw ValidationError(dir + ": shape extents must be positive");
  }
  Spacing spacing{1.0, 1.0, 1.0};
  if (meta.contains("spacing")) {
    if (!meta.at("spacing").is_array() || meta.at("spacing").size() != 3)
      throw ParseError(dir + ": spacing must be an array of 3 values");
    for (size_t a = 0; a < 3; ++a) spacing[a] = meta.at("spacing").at(a).get<double>();
  }

  Sample s;
  s.id = id_from_path(dir);
  GridF voxels(dims[0], dims[1], dims[2]);
  read_binary(base / "image.raw", voxels.data.data(), voxels.data.size() * sizeof(float));
  s.image = ImageVolume(std::move(voxels), spacing);

  if (fs::exists(base / "label.raw")) {
    GridU8 lv(dims[0], dims[1], dims[2]);
    read_binary(base / "label.raw", lv.data.data(), lv.data.size());
    s.label = BinaryMask(std::move(lv));
  }
  s.validate();
  return s;
}

void save_sample_rawjson(const std::string& dir, const Sample& s) {
  s.validate();
  fs::path base(dir);
  std::error_code ec;
  fs::create_directories(base, ec);
  if (ec) throw IoError("cannot create directory " + dir);

  const auto& img = s.image.voxels;
  nlohmann::ordered_json meta{{"shape", {img.h, img.w, img.d}},
                              {"spacing", s.image.spacing},
                              {"dtype", "float32"},
                              {"byte_order", "little"}};
  std::ofstream mf(base / "meta.json");
  if (!mf) throw IoError("cannot create " + (base / "meta.json").string());
  mf << meta.dump(2) << "\n";
  if (!mf) throw IoError("failed to write " + (base / "meta.json").string());

  write_binary(base / "image.raw", img.data.data(), img.data.size() * sizeof(float));
  if (s.label)
    write_binary(base / "label.raw", s.label->voxels.data.data(), s.label->voxels.data.size());
}

}  // namespace

Sample load_sample(const std::string& path, SampleFormat format) {
  return format == SampleFormat::hdf5 ? load_sample_hdf5(path) : load_sample_rawjson(path);
}

Sample load_sample(const std::string& path) {
  return load_sample(path, detect_sample_format(path));
}

void save_sample(const std::string& path, const Sample& s, SampleFormat format) {
  if (format == SampleFormat::hdf5)
    save_sample_hdf5(path, s);
  else
    save_sample_rawjson(path, s);
}

}  // namespace bseg::data
