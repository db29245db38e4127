#pragma once

#include <cmath>
#include <cstdint>

#include "bseg/rng.hpp"
#include "bseg/volume.hpp"

namespace bseg::testutil {

inline bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

/// Random binary mask with roughly `fg` foreground fraction.
inline BinaryMask random_mask(Rng& rng, int64_t h, int64_t w, int64_t d, double fg = 0.5) {
  BinaryMask m;
  m.voxels = GridU8(h, w, d);
  for (auto& v : m.voxels.data) v = rng.bernoulli(fg) ? 1 : 0;
  return m;
}

/// Random mask guaranteed non-empty (one voxel forced on if needed).
inline BinaryMask random_nonempty_mask(Rng& rng, int64_t h, int64_t w, int64_t d,
                                       double fg = 0.5) {
  BinaryMask m = random_mask(rng, h, w, d, fg);
  if (m.foreground_count() == 0)
    m.voxels.data[size_t(rng.uniform_int(0, int64_t(m.voxels.data.size()) - 1))] = 1;
  return m;
}

/// Blocky random mask: a few solid boxes, more realistic surfaces than
/// independent voxel noise.
inline BinaryMask random_blob_mask(Rng& rng, int64_t h, int64_t w, int64_t d, int boxes = 3) {
  BinaryMask m;
  m.voxels = GridU8(h, w, d);
  for (int b = 0; b < boxes; ++b) {
    int64_t i0 = rng.uniform_int(0, h - 1), i1 = rng.uniform_int(i0, h - 1);
    int64_t j0 = rng.uniform_int(0, w - 1), j1 = rng.uniform_int(j0, w - 1);
    int64_t k0 = rng.uniform_int(0, d - 1), k1 = rng.uniform_int(k0, d - 1);
    for (int64_t i = i0; i <= i1; ++i)
      for (int64_t j = j0; j <= j1; ++j)
        for (int64_t k = k0; k <= k1; ++k) m.voxels.at(i, j, k) = 1;
  }
  return m;
}

inline ProbabilityMap random_prob(Rng& rng, int64_t h, int64_t w, int64_t d) {
  ProbabilityMap p;
  p.voxels = GridF(h, w, d);
  for (auto& v : p.voxels.data) v = float(rng.uniform());
  return p;
}

/// Solid cube of side `side` centered in an n^3 grid.
inline BinaryMask centered_cube(int64_t n, int64_t side) {
  BinaryMask m;
  m.voxels = GridU8(n, n, n);
  int64_t lo = (n - side) / 2;
  for (int64_t i = lo; i < lo + side; ++i)
    for (int64_t j = lo; j < lo + side; ++j)
      for (int64_t k = lo; k < lo + side; ++k) m.voxels.at(i, j, k) = 1;
  return m;
}

}  // namespace bseg::testutil
