// Times the OpenMP kernels against the serial naive references on fixed
// inputs and prints one table row per kernel. Every pair is also checked
// for agreement so a broken kernel cannot post a fast number.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "bseg/metrics.hpp"
#include "bseg/morphology.hpp"
#include "bseg/nn/kernels.hpp"
#include "bseg/rng.hpp"
#include "bseg/volume.hpp"
#include "ref/reference.hpp"

using namespace bseg;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void row(const std::string& name, const std::string& size, double serial_ms,
         double parallel_ms, bool agree) {
  std::printf("%-18s %-14s %12.2f %12.2f %9.1fx  %s\n", name.c_str(), size.c_str(),
              serial_ms, parallel_ms, serial_ms / parallel_ms, agree ? "match" : "MISMATCH");
}

BinaryMask ball_mask(int64_t n, double radius, double cx, double cy, double cz) {
  GridU8 g(n, n, n);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j)
      for (int64_t k = 0; k < n; ++k) {
        double di = double(i) - cx, dj = double(j) - cy, dk = double(k) - cz;
        g.at(i, j, k) = (di * di + dj * dj + dk * dk <= radius * radius) ? 1 : 0;
      }
  return BinaryMask(std::move(g));
}

bool bench_erode(int64_t n, int r) {
  BinaryMask m = ball_mask(n, double(n) * 0.35, n / 2.0, n / 2.0, n / 2.0);
  BinaryMask fast, naive;
  double tp = time_ms([&] { fast = morph::erode(m, r); }, 5);
  double ts = time_ms([&] { naive = ref::erode_naive(m, r); }, 2);
  bool agree = fast.voxels.data == naive.voxels.data;
  row("erode r=" + std::to_string(r), std::to_string(n) + "^3", ts, tp, agree);
  return agree;
}

bool bench_boundary(int64_t n, int r) {
  BinaryMask m = ball_mask(n, double(n) * 0.35, n / 2.0, n / 2.0, n / 2.0);
  BinaryMask fast, naive;
  double tp = time_ms([&] { fast = morph::boundary_label(m, r); }, 5);
  double ts = time_ms([&] { naive = ref::boundary_label_naive(m, r); }, 2);
  bool agree = fast.voxels.data == naive.voxels.data;
  row("boundary r=" + std::to_string(r), std::to_string(n) + "^3", ts, tp, agree);
  return agree;
}

bool bench_hausdorff(int64_t n) {
  BinaryMask a = ball_mask(n, double(n) * 0.30, n * 0.45, n * 0.5, n * 0.5);
  BinaryMask b = ball_mask(n, double(n) * 0.33, n * 0.55, n * 0.5, n * 0.5);
  Spacing sp{1.0, 1.25, 1.25};
  double fast = 0, naive = 0;
  double tp = time_ms([&] { fast = metrics::hausdorff_distance(a, b, sp, 95.0); }, 5);
  double ts = time_ms([&] { naive = ref::hausdorff_naive(a, b, sp, 95.0); }, 2);
  bool agree = std::abs(fast - naive) < 1e-6;
  row("hd95", std::to_string(n) + "^3", ts, tp, agree);
  return agree;
}

bool bench_asd(int64_t n) {
  BinaryMask a = ball_mask(n, double(n) * 0.30, n * 0.45, n * 0.5, n * 0.5);
  BinaryMask b = ball_mask(n, double(n) * 0.33, n * 0.55, n * 0.5, n * 0.5);
  Spacing sp{1.0, 1.0, 1.0};
  double fast = 0, naive = 0;
  double tp = time_ms([&] { fast = metrics::average_surface_distance(a, b, sp); }, 5);
  double ts = time_ms([&] { naive = ref::average_surface_distance_naive(a, b, sp); }, 2);
  bool agree = std::abs(fast - naive) < 1e-6;
  row("asd", std::to_string(n) + "^3", ts, tp, agree);
  return agree;
}

bool bench_conv(int64_t n, int64_t ch) {
  Rng rng(42);
  nn::ConvSpec spec;
  spec.in_ch = ch;
  spec.out_ch = ch;
  nn::Tensor x({1, ch, n, n, n});
  for (auto& v : x.data) v = float(rng.uniform(-1.0, 1.0));
  std::vector<float> wgt(size_t(ch * ch * 27), 0.0f);
  std::vector<float> bias(size_t(ch), 0.0f);
  for (auto& v : wgt) v = float(rng.uniform(-0.3, 0.3));
  for (auto& v : bias) v = float(rng.uniform(-0.1, 0.1));

  nn::Tensor y({1, ch, n, n, n});
  nn::Tensor yn({1, ch, n, n, n});
  double tp = time_ms([&] { nn::conv3d_forward(x, wgt, bias, y, spec); }, 5);
  double ts = time_ms(
      [&] {
        ref::conv3d_naive(x.data.data(), wgt.data(), bias.data(), yn.data.data(), 1, ch, n,
                          n, n, ch, 3, 1, 1);
      },
      2);
  double max_diff = 0;
  for (size_t i = 0; i < y.data.size(); ++i)
    max_diff = std::max(max_diff, double(std::abs(y.data[i] - yn.data[i])));
  bool agree = max_diff < 1e-4;
  row("conv3d k=3", std::to_string(ch) + "ch " + std::to_string(n) + "^3", ts, tp, agree);
  return agree;
}

}  // namespace

int main() {
  std::printf("%-18s %-14s %12s %12s %10s\n", "kernel", "size", "serial ms",
              "parallel ms", "speedup");
  bool ok = true;
  ok &= bench_erode(64, 5);
  ok &= bench_erode(64, 9);
  ok &= bench_boundary(64, 5);
  ok &= bench_hausdorff(48);
  ok &= bench_asd(48);
  ok &= bench_conv(32, 8);
  if (!ok) {
    std::printf("kernel disagreement detected\n");
    return 1;
  }
  return 0;
}
