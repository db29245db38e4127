#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "bseg/errors.hpp"
#include "bseg/metrics.hpp"
#include "bseg/rng.hpp"
#include "ref/reference.hpp"
#include "test_util.hpp"

using namespace bseg;
using namespace bseg::testutil;

namespace {
const Spacing unit{1.0, 1.0, 1.0};
const Spacing aniso{0.7, 1.3, 2.5};
}  // namespace

TEST_CASE("overlap scores on degenerate masks") {
  BinaryMask a, b;
  a.voxels = GridU8(4, 4, 4);
  b.voxels = GridU8(4, 4, 4);
  CHECK(metrics::dice_coefficient(a, b) == 1.0);
  CHECK(metrics::jaccard_index(a, b) == 1.0);

  a.voxels.at(0, 0, 0) = 1;
  CHECK(metrics::dice_coefficient(a, b) == 0.0);
  CHECK(metrics::jaccard_index(a, b) == 0.0);

  b.voxels.at(0, 0, 0) = 1;
  CHECK(metrics::dice_coefficient(a, b) == 1.0);

  b.voxels = GridU8(4, 4, 3);
  CHECK_THROWS_AS(metrics::dice_coefficient(a, b), ShapeMismatchError);
}

TEST_CASE("dice and jaccard satisfy the exact identity") {
  Rng rng(900);
  for (int t = 0; t < 100; ++t) {
    BinaryMask a = random_mask(rng, 12, 12, 12, 0.5);
    BinaryMask b = random_mask(rng, 12, 12, 12, 0.5);
    double dice = metrics::dice_coefficient(a, b);
    double jac = metrics::jaccard_index(a, b);
    CHECK(bseg::testutil::near(dice, 2.0 * jac / (1.0 + jac), 1e-12));
    CHECK(bseg::testutil::near(dice, ref::dice_naive(a, b), 1e-12));
    CHECK(bseg::testutil::near(jac, ref::jaccard_naive(a, b), 1e-12));
  }
}

TEST_CASE("surface extraction matches the reference") {
  Rng rng(901);
  for (int t = 0; t < 25; ++t) {
    int64_t h = rng.uniform_int(1, 10), w = rng.uniform_int(1, 10), d = rng.uniform_int(1, 10);
    BinaryMask m = t % 2 == 0 ? random_mask(rng, h, w, d, 0.5) : random_blob_mask(rng, h, w, d);
    auto fast = metrics::surface_voxels(m);
    auto slow = ref::surface_voxels_naive(m);
    std::sort(fast.begin(), fast.end());
    std::sort(slow.begin(), slow.end());
    REQUIRE(fast == slow);
  }
}

TEST_CASE("single foreground voxel is its own surface") {
  BinaryMask m;
  m.voxels = GridU8(5, 5, 5);
  m.voxels.at(2, 2, 2) = 1;
  auto s = metrics::surface_voxels(m);
  REQUIRE(s.size() == 1);
  CHECK(s[0] == std::array<int64_t, 3>{2, 2, 2});

  // a voxel on the volume border is a surface voxel even if fully
  // surrounded inside the volume
  BinaryMask full;
  full.voxels = GridU8(3, 3, 3);
  full.voxels.fill(1);
  CHECK(metrics::surface_voxels(full).size() == 26);
}

TEST_CASE("distance transform matches brute force") {
  Rng rng(902);
  for (int t = 0; t < 20; ++t) {
    int64_t h = rng.uniform_int(1, 9), w = rng.uniform_int(1, 9), d = rng.uniform_int(1, 9);
    const Spacing& sp = t % 2 == 0 ? unit : aniso;
    std::vector<uint8_t> seeds(size_t(h * w * d), 0);
    int n_seed = int(rng.uniform_int(1, std::max<int64_t>(1, h * w * d / 4)));
    for (int s = 0; s < n_seed; ++s) seeds[size_t(rng.uniform_int(0, h * w * d - 1))] = 1;

    std::vector<double> dt = metrics::squared_distance_transform(seeds, h, w, d, sp);
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j)
        for (int64_t k = 0; k < d; ++k) {
          double best = std::numeric_limits<double>::infinity();
          for (int64_t si = 0; si < h; ++si)
            for (int64_t sj = 0; sj < w; ++sj)
              for (int64_t sk = 0; sk < d; ++sk) {
                if (!seeds[size_t((si * w + sj) * d + sk)]) continue;
                double dh = (i - si) * sp[0], dw = (j - sj) * sp[1], dd = (k - sk) * sp[2];
                best = std::min(best, dh * dh + dw * dw + dd * dd);
              }
          double got = dt[size_t((i * w + j) * d + k)];
          REQUIRE(got == doctest::Approx(best).epsilon(1e-9));
        }
  }
}

TEST_CASE("surface distances match brute force within 1e-6") {
  Rng rng(903);
  for (int t = 0; t < 40; ++t) {
    int64_t h = rng.uniform_int(2, 12), w = rng.uniform_int(2, 12), d = rng.uniform_int(2, 12);
    const Spacing& sp = t % 3 == 0 ? unit : aniso;
    BinaryMask a = random_nonempty_mask(rng, h, w, d, 0.35);
    BinaryMask b = random_nonempty_mask(rng, h, w, d, 0.35);
    for (double pct : {95.0, 100.0, 50.0}) {
      double fast = metrics::hausdorff_distance(a, b, sp, pct);
      double slow = ref::hausdorff_naive(a, b, sp, pct);
      REQUIRE(bseg::testutil::near(fast, slow, 1e-6));
    }
    double asd_fast = metrics::average_surface_distance(a, b, sp);
    double asd_slow = ref::average_surface_distance_naive(a, b, sp);
    REQUIRE(bseg::testutil::near(asd_fast, asd_slow, 1e-6));
  }
}

TEST_CASE("surface metrics are symmetric and zero on identical masks") {
  Rng rng(904);
  BinaryMask a = random_nonempty_mask(rng, 9, 9, 9, 0.4);
  BinaryMask b = random_nonempty_mask(rng, 9, 9, 9, 0.4);
  CHECK(bseg::testutil::near(metrics::hausdorff_distance(a, b, aniso, 95.0), metrics::hausdorff_distance(b, a, aniso, 95.0), 1e-12));
  CHECK(bseg::testutil::near(metrics::average_surface_distance(a, b, aniso), metrics::average_surface_distance(b, a, aniso), 1e-12));
  CHECK(metrics::hausdorff_distance(a, a, aniso, 95.0) == 0.0);
  CHECK(metrics::average_surface_distance(a, a, aniso) == 0.0);
}

TEST_CASE("distances scale linearly with spacing") {
  Rng rng(905);
  BinaryMask a = random_nonempty_mask(rng, 8, 8, 8, 0.3);
  BinaryMask b = random_nonempty_mask(rng, 8, 8, 8, 0.3);
  Spacing s1{0.5, 1.0, 2.0};
  Spacing s2{1.5, 3.0, 6.0};
  double h1 = metrics::hausdorff_distance(a, b, s1, 100.0);
  double h2 = metrics::hausdorff_distance(a, b, s2, 100.0);
  CHECK(h2 == doctest::Approx(3.0 * h1).epsilon(1e-12));
  double a1 = metrics::average_surface_distance(a, b, s1);
  double a2 = metrics::average_surface_distance(a, b, s2);
  CHECK(a2 == doctest::Approx(3.0 * a1).epsilon(1e-12));
}

TEST_CASE("two single voxels give the euclidean gap") {
  BinaryMask a, b;
  a.voxels = GridU8(6, 6, 6);
  b.voxels = GridU8(6, 6, 6);
  a.voxels.at(0, 0, 0) = 1;
  b.voxels.at(3, 4, 0) = 1;
  Spacing sp{2.0, 1.0, 1.0};
  double expect = std::sqrt(36.0 + 16.0);
  CHECK(metrics::hausdorff_distance(a, b, sp, 100.0) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(metrics::average_surface_distance(a, b, sp) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("empty masks and bad percentiles are rejected") {
  BinaryMask a, b;
  a.voxels = GridU8(4, 4, 4);
  b.voxels = GridU8(4, 4, 4);
  b.voxels.at(1, 1, 1) = 1;
  CHECK_THROWS_AS(metrics::hausdorff_distance(a, b, unit, 95.0), EmptyMaskError);
  CHECK_THROWS_AS(metrics::average_surface_distance(b, a, unit), EmptyMaskError);

  a.voxels.at(0, 0, 0) = 1;
  CHECK_THROWS_AS(metrics::hausdorff_distance(a, b, unit, 0.0), ValidationError);
  CHECK_THROWS_AS(metrics::hausdorff_distance(a, b, unit, 101.0), ValidationError);
  CHECK_THROWS_AS(metrics::hausdorff_distance(a, b, unit, -5.0), ValidationError);
  CHECK_NOTHROW(metrics::hausdorff_distance(a, b, unit, 100.0));
}

TEST_CASE("nearest-rank percentile uses the pooled distances") {
  // pred surface {0}, gt surface {0,0+3}: directed distances pool to
  // {0, 0, 3}; p50 -> rank 2 -> 0, p67 -> rank 3 -> 3
  BinaryMask a, b;
  a.voxels = GridU8(1, 1, 4);
  b.voxels = GridU8(1, 1, 4);
  a.voxels.at(0, 0, 0) = 1;
  b.voxels.at(0, 0, 0) = 1;
  b.voxels.at(0, 0, 3) = 1;
  CHECK(metrics::hausdorff_distance(a, b, unit, 50.0) == 0.0);
  CHECK(metrics::hausdorff_distance(a, b, unit, 67.0) == 3.0);
  CHECK(metrics::hausdorff_distance(a, b, unit, 100.0) == 3.0);
  CHECK(metrics::average_surface_distance(a, b, unit) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("evaluate_pair bundles all four scores") {
  Rng rng(906);
  BinaryMask gt = random_nonempty_mask(rng, 10, 9, 8, 0.4);
  BinaryMask pred = gt;
  pred.voxels.at(0, 0, 0) ^= 1;
  metrics::SegMetrics m = metrics::evaluate_pair(pred, gt, aniso, 95.0);
  CHECK(m.dice == doctest::Approx(metrics::dice_coefficient(pred, gt)));
  CHECK(m.jaccard == doctest::Approx(metrics::jaccard_index(pred, gt)));
  CHECK(m.hausdorff_mm == doctest::Approx(metrics::hausdorff_distance(pred, gt, aniso, 95.0)));
  CHECK(m.asd_mm == doctest::Approx(metrics::average_surface_distance(pred, gt, aniso)));
  CHECK(m.hausdorff_percentile == 95.0);
}

TEST_CASE("volume diagonal sentinel") {
  CHECK(metrics::volume_diagonal_mm(3, 4, 1, Spacing{1.0, 1.0, 1.0}) ==
        doctest::Approx(std::sqrt(26.0)).epsilon(1e-12));
  CHECK(metrics::volume_diagonal_mm(10, 10, 10, Spacing{1.0, 2.0, 2.0}) ==
        doctest::Approx(30.0).epsilon(1e-12));
}
