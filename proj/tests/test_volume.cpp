#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "bseg/errors.hpp"
#include "bseg/grid.hpp"
#include "bseg/rng.hpp"
#include "bseg/volume.hpp"
#include "test_util.hpp"

using namespace bseg;

TEST_CASE("grid indexing is depth-contiguous row major") {
  Grid3<float> g(2, 3, 4);
  CHECK(g.data.size() == 24);
  CHECK(g.index(0, 0, 0) == 0);
  CHECK(g.index(0, 0, 1) == 1);
  CHECK(g.index(0, 1, 0) == 4);
  CHECK(g.index(1, 0, 0) == 12);
  CHECK(g.index(1, 2, 3) == 23);
  g.at(1, 2, 3) = 7.0f;
  CHECK(g.data[23] == 7.0f);
}

TEST_CASE("grid shape helpers") {
  Grid3<float> a(2, 3, 4), b(2, 3, 4), c(4, 3, 2);
  CHECK(a.same_shape(b));
  CHECK(!a.same_shape(c));
  CHECK(a.in_bounds(0, 0, 0));
  CHECK(a.in_bounds(1, 2, 3));
  CHECK(!a.in_bounds(-1, 0, 0));
  CHECK(!a.in_bounds(0, 3, 0));
  CHECK(!a.in_bounds(0, 0, 4));
  CHECK(a.shape_str() == "2x3x4");
}

TEST_CASE("image volume validation") {
  ImageVolume img;
  img.voxels = GridF(2, 2, 2);
  img.spacing = {1.0, 1.0, 1.0};
  CHECK_NOTHROW(img.validate());

  img.voxels.at(0, 0, 0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(img.validate(), ValidationError);
  img.voxels.at(0, 0, 0) = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(img.validate(), ValidationError);
  img.voxels.at(0, 0, 0) = 0.0f;

  img.spacing = {1.0, 0.0, 1.0};
  CHECK_THROWS_AS(img.validate(), ValidationError);
  img.spacing = {1.0, 1.0, -2.0};
  CHECK_THROWS_AS(img.validate(), ValidationError);
}

TEST_CASE("binary mask validation rejects non-binary voxels") {
  BinaryMask m;
  m.voxels = GridU8(2, 2, 2);
  m.voxels.at(0, 0, 0) = 1;
  CHECK_NOTHROW(m.validate());
  CHECK(m.foreground_count() == 1);
  CHECK(!m.empty_mask());

  m.voxels.at(1, 1, 1) = 2;
  CHECK_THROWS_AS(m.validate(), NonBinaryLabelError);
}

TEST_CASE("probability map validation") {
  ProbabilityMap p;
  p.voxels = GridF(2, 2, 2);
  p.voxels.fill(0.5f);
  CHECK_NOTHROW(p.validate());
  p.voxels.at(0, 0, 0) = 1.0f;
  p.voxels.at(0, 0, 1) = 0.0f;
  CHECK_NOTHROW(p.validate());
  p.voxels.at(1, 0, 0) = 1.0001f;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p.voxels.at(1, 0, 0) = -0.0001f;
  CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("thresholding is a strict >= comparison") {
  ProbabilityMap p;
  p.voxels = GridF(1, 1, 3);
  p.voxels.data = {0.49f, 0.5f, 0.51f};
  BinaryMask m = mask_from_probability(p, 0.5);
  CHECK(m.voxels.data[0] == 0);
  CHECK(m.voxels.data[1] == 1);
  CHECK(m.voxels.data[2] == 1);

  CHECK_THROWS_AS(mask_from_probability(p, 0.0), ValidationError);
  CHECK_THROWS_AS(mask_from_probability(p, 1.0), ValidationError);
  CHECK_THROWS_AS(mask_from_probability(p, -0.5), ValidationError);
}

TEST_CASE("image and label shapes must match") {
  ImageVolume img;
  img.voxels = GridF(4, 4, 4);
  img.spacing = {1, 1, 1};
  BinaryMask m;
  m.voxels = GridU8(4, 4, 4);
  CHECK_NOTHROW(validate_pair(img, m));

  m.voxels = GridU8(4, 4, 3);
  CHECK_THROWS_AS(validate_pair(img, m), ShapeMismatchError);
  try {
    validate_pair(img, m);
  } catch (const ShapeMismatchError& e) {
    std::string msg = e.what();
    CHECK(msg.find("4x4x3") != std::string::npos);
    CHECK(msg.find("4x4x4") != std::string::npos);
  }
}

TEST_CASE("axis flips are involutions") {
  Rng rng(11);
  GridF g(3, 4, 5);
  for (auto& v : g.data) v = float(rng.uniform());
  for (int axis = 0; axis < 3; ++axis) {
    GridF f = flip_axis(g, axis);
    CHECK(!(f.data == g.data));
    GridF ff = flip_axis(f, axis);
    CHECK(ff.data == g.data);
  }
  CHECK(flip_axis(g, 0).at(0, 1, 2) == g.at(2, 1, 2));
  CHECK(flip_axis(g, 1).at(1, 0, 2) == g.at(1, 3, 2));
  CHECK(flip_axis(g, 2).at(1, 2, 0) == g.at(1, 2, 4));
}

TEST_CASE("in-plane rotations compose to identity") {
  Rng rng(12);
  GridF g(3, 5, 2);
  for (auto& v : g.data) v = float(rng.uniform());

  GridF r0 = rot90_hw(g, 0);
  CHECK(r0.data == g.data);

  GridF r1 = rot90_hw(g, 1);
  CHECK(r1.h == 5);
  CHECK(r1.w == 3);
  GridF r1111 = rot90_hw(rot90_hw(rot90_hw(r1, 1), 1), 1);
  CHECK(r1111.data == g.data);

  GridF r2 = rot90_hw(g, 2);
  CHECK(rot90_hw(r2, 2).data == g.data);
  CHECK(rot90_hw(rot90_hw(g, 1), 3).data == g.data);
  CHECK(rot90_hw(rot90_hw(g, 3), 1).data == g.data);
}

TEST_CASE("feature volume channel indexing") {
  FeatureVolume f(2, 2, 3, 4);
  CHECK(f.data.size() == 48);
  f.at(1, 1, 2, 3) = 9.0f;
  CHECK(f.data[47] == 9.0f);
  f.at(0, 0, 0, 0) = 3.0f;
  CHECK(f.data[0] == 3.0f);
}

TEST_CASE("rng streams are reproducible and distinct") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  bool differ = false;
  Rng a2(42);
  for (int i = 0; i < 100; ++i) differ = differ || (a2.next_u64() != c.next_u64());
  CHECK(differ);

  Rng base(7);
  Rng c1 = base.child(0), c2 = base.child(1);
  bool child_differ = false;
  for (int i = 0; i < 100; ++i) child_differ = child_differ || (c1.next_u64() != c2.next_u64());
  CHECK(child_differ);
}

TEST_CASE("rng conversions stay in range") {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    int64_t k = rng.uniform_int(-3, 5);
    CHECK(k >= -3);
    CHECK(k <= 5);
    double n = rng.normal();
    CHECK(std::isfinite(n));
  }
  double mean = 0.0;
  int n_draws = 20000;
  Rng rng2(5);
  for (int i = 0; i < n_draws; ++i) mean += rng2.normal();
  mean /= n_draws;
  CHECK(std::abs(mean) < 0.05);
}
