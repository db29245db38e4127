#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "bseg/errors.hpp"
#include "bseg/morphology.hpp"
#include "bseg/rng.hpp"
#include "ref/reference.hpp"
#include "test_util.hpp"

using namespace bseg;
using namespace bseg::testutil;

TEST_CASE("structuring element validation") {
  CHECK_THROWS_AS(morph::StructuringElement(0), InvalidKernelError);
  CHECK_THROWS_AS(morph::StructuringElement(-3), InvalidKernelError);
  CHECK_THROWS_AS(morph::StructuringElement(2), InvalidKernelError);
  CHECK_THROWS_AS(morph::StructuringElement(4), InvalidKernelError);
  CHECK(morph::StructuringElement(1).radius() == 0);
  CHECK(morph::StructuringElement(3).radius() == 1);
  CHECK(morph::StructuringElement(9).radius() == 4);
}

TEST_CASE("cube erosion of a centered cube, frozen counts") {
  BinaryMask cube = centered_cube(9, 5);
  CHECK(cube.foreground_count() == 125);

  BinaryMask e3 = morph::erode(cube, 3);
  CHECK(e3.foreground_count() == 27);
  BinaryMask b3 = morph::boundary_label(cube, 3);
  CHECK(b3.foreground_count() == 98);

  BinaryMask e5 = morph::erode(cube, 5);
  CHECK(e5.foreground_count() == 1);
  CHECK(e5.voxels.at(4, 4, 4) == 1);
  BinaryMask b5 = morph::boundary_label(cube, 5);
  CHECK(b5.foreground_count() == 124);

  // the 3x3x3 core of the r=3 erosion sits centered
  for (int64_t i = 3; i <= 5; ++i)
    for (int64_t j = 3; j <= 5; ++j)
      for (int64_t k = 3; k <= 5; ++k) CHECK(e3.voxels.at(i, j, k) == 1);
}

TEST_CASE("kernel size one is the identity, boundary empty") {
  Rng rng(101);
  for (int t = 0; t < 20; ++t) {
    BinaryMask m = random_mask(rng, 7, 6, 5, 0.4);
    BinaryMask e = morph::erode(m, 1);
    CHECK(e.voxels.data == m.voxels.data);
    BinaryMask b = morph::boundary_label(m, 1);
    CHECK(b.foreground_count() == 0);
  }
}

TEST_CASE("erosion matches the brute-force reference bit for bit") {
  Rng rng(202);
  for (int t = 0; t < 60; ++t) {
    int64_t h = rng.uniform_int(1, 16), w = rng.uniform_int(1, 16), d = rng.uniform_int(1, 16);
    BinaryMask m = t % 2 == 0 ? random_mask(rng, h, w, d, rng.uniform(0.2, 0.8))
                              : random_blob_mask(rng, h, w, d);
    for (int r : {1, 3, 5, 7, 9}) {
      BinaryMask fast = morph::erode(m, r);
      BinaryMask slow = ref::erode_naive(m, r);
      REQUIRE(fast.voxels.data == slow.voxels.data);
      BinaryMask bf = morph::boundary_label(m, r);
      BinaryMask bs = ref::boundary_label_naive(m, r);
      REQUIRE(bf.voxels.data == bs.voxels.data);
    }
  }
}

TEST_CASE("boundary and erosion partition the mask") {
  Rng rng(303);
  for (int t = 0; t < 30; ++t) {
    BinaryMask m = random_blob_mask(rng, 12, 11, 10);
    for (int r : {1, 3, 5, 7}) {
      BinaryMask e = morph::erode(m, r);
      BinaryMask b = morph::boundary_label(m, r);
      for (size_t i = 0; i < m.voxels.data.size(); ++i) {
        CHECK((e.voxels.data[i] | b.voxels.data[i]) == m.voxels.data[i]);
        CHECK((e.voxels.data[i] & b.voxels.data[i]) == 0);
      }
    }
  }
}

TEST_CASE("erosion is anti-extensive and monotone in kernel size") {
  Rng rng(404);
  for (int t = 0; t < 15; ++t) {
    BinaryMask m = random_blob_mask(rng, 13, 9, 11);
    BinaryMask prev = m;
    for (int r : {3, 5, 7, 9}) {
      BinaryMask e = morph::erode(m, r);
      for (size_t i = 0; i < m.voxels.data.size(); ++i) {
        CHECK(e.voxels.data[i] <= m.voxels.data[i]);
        CHECK(e.voxels.data[i] <= prev.voxels.data[i]);
      }
      prev = e;
    }
  }
}

TEST_CASE("all-background and all-foreground masks") {
  BinaryMask zero;
  zero.voxels = GridU8(6, 6, 6);
  CHECK(morph::erode(zero, 5).foreground_count() == 0);
  CHECK(morph::boundary_label(zero, 5).foreground_count() == 0);

  BinaryMask full;
  full.voxels = GridU8(6, 6, 6);
  full.voxels.fill(1);
  // out-of-bounds voxels count as background, so the border is stripped
  BinaryMask e = morph::erode(full, 3);
  CHECK(e.foreground_count() == 4 * 4 * 4);
  BinaryMask b = morph::boundary_label(full, 3);
  CHECK(b.foreground_count() == 216 - 64);
}

TEST_CASE("erosion rejects invalid input") {
  BinaryMask m;
  m.voxels = GridU8(4, 4, 4);
  m.voxels.at(0, 0, 0) = 3;
  CHECK_THROWS_AS(morph::erode(m, 3), NonBinaryLabelError);
  m.voxels.at(0, 0, 0) = 1;
  CHECK_THROWS_AS(morph::erode(m, 2), InvalidKernelError);
  CHECK_THROWS_AS(morph::boundary_label(m, -1), InvalidKernelError);
}

TEST_CASE("multi-class boundary labels decompose per class") {
  Grid3<int32_t> lbl(10, 10, 10);
  for (int64_t i = 1; i <= 4; ++i)
    for (int64_t j = 1; j <= 4; ++j)
      for (int64_t k = 1; k <= 4; ++k) lbl.at(i, j, k) = 2;
  for (int64_t i = 6; i <= 8; ++i)
    for (int64_t j = 6; j <= 8; ++j)
      for (int64_t k = 6; k <= 8; ++k) lbl.at(i, j, k) = 5;

  auto per_class = morph::boundary_labels_multiclass(lbl, 3);
  REQUIRE(per_class.size() == 2);
  CHECK(per_class[0].first == 2);
  CHECK(per_class[1].first == 5);

  BinaryMask m2;
  m2.voxels = GridU8(10, 10, 10);
  for (int64_t i = 1; i <= 4; ++i)
    for (int64_t j = 1; j <= 4; ++j)
      for (int64_t k = 1; k <= 4; ++k) m2.voxels.at(i, j, k) = 1;
  CHECK(per_class[0].second.voxels.data == morph::boundary_label(m2, 3).voxels.data);

  Grid3<int32_t> empty(4, 4, 4);
  CHECK(morph::boundary_labels_multiclass(empty, 3).empty());

  lbl.at(0, 0, 0) = -1;
  CHECK_THROWS_AS(morph::boundary_labels_multiclass(lbl, 3), ValidationError);
}

TEST_CASE("soft erosion reduces to hard erosion on binary input") {
  Rng rng(505);
  for (int t = 0; t < 20; ++t) {
    BinaryMask m = random_blob_mask(rng, 9, 8, 7);
    ProbabilityMap p;
    p.voxels = GridF(9, 8, 7);
    for (size_t i = 0; i < p.voxels.data.size(); ++i) p.voxels.data[i] = float(m.voxels.data[i]);
    for (int r : {1, 3, 5}) {
      ProbabilityMap se = morph::soft_erode(p, r);
      BinaryMask he = morph::erode(m, r);
      for (size_t i = 0; i < se.voxels.data.size(); ++i)
        CHECK(se.voxels.data[i] == float(he.voxels.data[i]));
    }
  }
}

TEST_CASE("soft erosion matches the reference min filter") {
  Rng rng(606);
  for (int t = 0; t < 20; ++t) {
    int64_t h = rng.uniform_int(1, 10), w = rng.uniform_int(1, 10), d = rng.uniform_int(1, 10);
    ProbabilityMap p = random_prob(rng, h, w, d);
    for (int r : {1, 3, 5, 7}) {
      ProbabilityMap se = morph::soft_erode(p, r);
      GridF naive = ref::min_filter_naive(p.voxels, r);
      REQUIRE(se.voxels.data == naive.data);
    }
  }
}

TEST_CASE("argmin variant reconstructs the minimum") {
  Rng rng(707);
  for (int t = 0; t < 15; ++t) {
    int64_t h = rng.uniform_int(2, 9), w = rng.uniform_int(2, 9), d = rng.uniform_int(2, 9);
    ProbabilityMap p = random_prob(rng, h, w, d);
    for (int r : {3, 5}) {
      GridF out(h, w, d);
      std::vector<int64_t> argmin;
      morph::soft_erode_argmin(p.voxels, r, out, argmin);
      GridF naive = ref::min_filter_naive(p.voxels, r);
      REQUIRE(out.data == naive.data);
      for (size_t i = 0; i < out.data.size(); ++i) {
        if (argmin[i] < 0) {
          CHECK(out.data[i] == 0.0f);
        } else {
          CHECK(p.voxels.data[size_t(argmin[i])] == out.data[i]);
        }
      }
    }
  }
}
