#include "bseg/nn/tensor.hpp"

#include <cstring>

namespace bseg::nn {

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w || a.d != b.d)
    throw ShapeMismatchError("channel concat: " + a.shape_str() + " vs " + b.shape_str());
  Tensor out(a.n, a.c + b.c, a.h, a.w, a.d);
  const int64_t sp = a.spatial();
#pragma omp parallel for schedule(static)
  for (int64_t n = 0; n < a.n; ++n) {
    std::memcpy(out.chan(n, 0), a.chan(n, 0), size_t(a.c * sp) * sizeof(float));
    std::memcpy(out.chan(n, a.c), b.chan(n, 0), size_t(b.c * sp) * sizeof(float));
  }
  return out;
}

void split_channels(const Tensor& g, int64_t c_first, Tensor& ga, Tensor& gb) {
  ga = Tensor(g.n, c_first, g.h, g.w, g.d);
  gb = Tensor(g.n, g.c - c_first, g.h, g.w, g.d);
  const int64_t sp = g.spatial();
#pragma omp parallel for schedule(static)
  for (int64_t n = 0; n < g.n; ++n) {
    std::memcpy(ga.chan(n, 0), g.chan(n, 0), size_t(c_first * sp) * sizeof(float));
    std::memcpy(gb.chan(n, 0), g.chan(n, c_first), size_t((g.c - c_first) * sp) * sizeof(float));
  }
}

}  // namespace bseg::nn
