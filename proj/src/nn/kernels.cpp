#include "bseg/nn/kernels.hpp"

#include <cmath>

namespace bseg::nn {

namespace {

int64_t cdiv(int64_t a, int64_t b) { return a > 0 ? (a + b - 1) / b : a / b; }
int64_t fdiv(int64_t a, int64_t b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

void check_conv_args(const Tensor& x, const std::vector<float>& wgt,
                     const std::vector<float>& bias, const ConvSpec& s) {
  if (x.c != s.in_ch)
    throw ShapeMismatchError("conv input: expected " + std::to_string(s.in_ch) +
                             " channels, got " + x.shape_str());
  if (int64_t(wgt.size()) != s.out_ch * s.in_ch * s.k * s.k * s.k)
    throw ShapeMismatchError("conv weight: size " + std::to_string(wgt.size()) +
                             " does not match spec");
  if (int64_t(bias.size()) != s.out_ch)
    throw ShapeMismatchError("conv bias: size " + std::to_string(bias.size()) +
                             " does not match out channels");
}

}  // namespace

int64_t conv_out_dim(int64_t in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

void conv3d_forward(const Tensor& x, const std::vector<float>& wgt,
                    const std::vector<float>& bias, Tensor& y, const ConvSpec& s) {
  check_conv_args(x, wgt, bias, s);
  const int64_t oh = conv_out_dim(x.h, s.k, s.stride, s.pad);
  const int64_t ow = conv_out_dim(x.w, s.k, s.stride, s.pad);
  const int64_t od = conv_out_dim(x.d, s.k, s.stride, s.pad);
  if (oh < 1 || ow < 1 || od < 1)
    throw IncompatibleShapeError("conv input " + x.shape_str() + " too small for kernel " +
                                 std::to_string(s.k));
  y = Tensor(x.n, s.out_ch, oh, ow, od);

  const int64_t ih = x.h, iw = x.w, id = x.d;
  const int k = s.k, st = s.stride, pad = s.pad;

#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < x.n; ++n) {
    for (int64_t co = 0; co < s.out_ch; ++co) {
      float* yp = y.chan(n, co);
      const float b = bias[size_t(co)];
      for (int64_t i = 0; i < oh * ow * od; ++i) yp[i] = b;
      for (int64_t ci = 0; ci < s.in_ch; ++ci) {
        const float* xp = x.chan(n, ci);
        for (int di = 0; di < k; ++di) {
          const int64_t oi_lo = std::max<int64_t>(0, cdiv(pad - di, st));
          const int64_t oi_hi = std::min(oh, fdiv(ih - 1 - di + pad, st) + 1);
          for (int dj = 0; dj < k; ++dj) {
            const int64_t oj_lo = std::max<int64_t>(0, cdiv(pad - dj, st));
            const int64_t oj_hi = std::min(ow, fdiv(iw - 1 - dj + pad, st) + 1);
            for (int dk = 0; dk < k; ++dk) {
              const int64_t ok_lo = std::max<int64_t>(0, cdiv(pad - dk, st));
              const int64_t ok_hi = std::min(od, fdiv(id - 1 - dk + pad, st) + 1);
              const float wv = wgt[size_t((((co * s.in_ch + ci) * k + di) * k + dj) * k + dk)];
              if (wv == 0.0f) continue;
              for (int64_t oi = oi_lo; oi < oi_hi; ++oi) {
                const int64_t ii = oi * st + di - pad;
                for (int64_t oj = oj_lo; oj < oj_hi; ++oj) {
                  const int64_t jj = oj * st + dj - pad;
                  float* yrow = yp + (oi * ow + oj) * od;
                  const float* xrow = xp + (ii * iw + jj) * id + dk - pad;
                  if (st == 1) {
                    for (int64_t ok = ok_lo; ok < ok_hi; ++ok) yrow[ok] += wv * xrow[ok];
                  } else {
                    for (int64_t ok = ok_lo; ok < ok_hi; ++ok) yrow[ok] += wv * xrow[ok * st];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

void conv3d_backward(const Tensor& x, const std::vector<float>& wgt, const Tensor& gy,
                     Tensor& gx, std::vector<float>& gw, std::vector<float>& gb,
                     const ConvSpec& s) {
  check_conv_args(x, wgt, gb, s);
  const int64_t oh = gy.h, ow = gy.w, od = gy.d;
  const int64_t ih = x.h, iw = x.w, id = x.d;
  const int k = s.k, st = s.stride, pad = s.pad;
  gx = Tensor(x.n, x.c, x.h, x.w, x.d);

  // input gradient: each (n, ci) slice owned by one iteration
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < x.n; ++n) {
    for (int64_t ci = 0; ci < s.in_ch; ++ci) {
      float* gxp = gx.chan(n, ci);
      for (int64_t co = 0; co < s.out_ch; ++co) {
        const float* gyp = gy.chan(n, co);
        for (int di = 0; di < k; ++di) {
          const int64_t oi_lo = std::max<int64_t>(0, cdiv(pad - di, st));
          const int64_t oi_hi = std::min(oh, fdiv(ih - 1 - di + pad, st) + 1);
          for (int dj = 0; dj < k; ++dj) {
            const int64_t oj_lo = std::max<int64_t>(0, cdiv(pad - dj, st));
            const int64_t oj_hi = std::min(ow, fdiv(iw - 1 - dj + pad, st) + 1);
            for (int dk = 0; dk < k; ++dk) {
              const int64_t ok_lo = std::max<int64_t>(0, cdiv(pad - dk, st));
              const int64_t ok_hi = std::min(od, fdiv(id - 1 - dk + pad, st) + 1);
              const float wv = wgt[size_t((((co * s.in_ch + ci) * k + di) * k + dj) * k + dk)];
              if (wv == 0.0f) continue;
              for (int64_t oi = oi_lo; oi < oi_hi; ++oi) {
                const int64_t ii = oi * st + di - pad;
                for (int64_t oj = oj_lo; oj < oj_hi; ++oj) {
                  const int64_t jj = oj * st + dj - pad;
                  const float* grow = gyp + (oi * ow + oj) * od;
                  float* gxrow = gxp + (ii * iw + jj) * id + dk - pad;
                  if (st == 1) {
                    for (int64_t ok = ok_lo; ok < ok_hi; ++ok) gxrow[ok] += wv * grow[ok];
                  } else {
                    for (int64_t ok = ok_lo; ok < ok_hi; ++ok) gxrow[ok * st] += wv * grow[ok];
                  }
                }
              }
            }
          }
        }
      }
    }
  }

  // weight gradient: each (co, ci) pair owned by one iteration
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t co = 0; co < s.out_ch; ++co) {
    for (int64_t ci = 0; ci < s.in_ch; ++ci) {
      for (int di = 0; di < k; ++di) {
        const int64_t oi_lo = std::max<int64_t>(0, cdiv(pad - di, st));
        const int64_t oi_hi = std::min(oh, fdiv(ih - 1 - di + pad, st) + 1);
        for (int dj = 0; dj < k; ++dj) {
          const int64_t oj_lo = std::max<int64_t>(0, cdiv(pad - dj, st));
          const int64_t oj_hi = std::min(ow, fdiv(iw - 1 - dj + pad, st) + 1);
          for (int dk = 0; dk < k; ++dk) {
            const int64_t ok_lo = std::max<int64_t>(0, cdiv(pad - dk, st));
            const int64_t ok_hi = std::min(od, fdiv(id - 1 - dk + pad, st) + 1);
            double acc = 0.0;
            for (int64_t n = 0; n < x.n; ++n) {
              const float* xp = x.chan(n, ci);
              const float* gyp = gy.chan(n, co);
              for (int64_t oi = oi_lo; oi < oi_hi; ++oi) {
                const int64_t ii = oi * st + di - pad;
                for (int64_t oj = oj_lo; oj < oj_hi; ++oj) {
                  const int64_t jj = oj * st + dj - pad;
                  const float* grow = gyp + (oi * ow + oj) * od;
                  const float* xrow = xp + (ii * iw + jj) * id + dk - pad;
                  double row = 0.0;
                  if (st == 1) {
                    for (int64_t ok = ok_lo; ok < ok_hi; ++ok)
                      row += double(grow[ok]) * double(xrow[ok]);
                  } else {
                    for (int64_t ok = ok_lo; ok < ok_hi; ++ok)
                      row += double(grow[ok]) * double(xrow[ok * st]);
                  }
                  acc += row;
                }
              }
            }
            gw[size_t((((co * s.in_ch + ci) * k + di) * k + dj) * k + dk)] += float(acc);
          }
        }
      }
    }
  }

#pragma omp parallel for schedule(static)
  for (int64_t co = 0; co < s.out_ch; ++co) {
    double acc = 0.0;
    for (int64_t n = 0; n < gy.n; ++n) {
      const float* gyp = gy.chan(n, co);
      for (int64_t i = 0; i < oh * ow * od; ++i) acc += double(gyp[i]);
    }
    gb[size_t(co)] += float(acc);
  }
}

void conv_transpose3d_forward(const Tensor& x, const std::vector<float>& wgt,
                              const std::vector<float>& bias, Tensor& y, int64_t in_ch,
                              int64_t out_ch) {
  if (x.c != in_ch)
    throw ShapeMismatchError("transpose conv input: expected " + std::to_string(in_ch) +
                             " channels, got " + x.shape_str());
  if (int64_t(wgt.size()) != in_ch * out_ch * 8)
    throw ShapeMismatchError("transpose conv weight: bad size " + std::to_string(wgt.size()));
  y = Tensor(x.n, out_ch, x.h * 2, x.w * 2, x.d * 2);
  const int64_t oh = y.h, ow = y.w, od = y.d;

#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < x.n; ++n) {
    for (int64_t co = 0; co < out_ch; ++co) {
      float* yp = y.chan(n, co);
      const float b = bias[size_t(co)];
      for (int64_t oi = 0; oi < oh; ++oi) {
        const int64_t ii = oi >> 1;
        const int64_t di = oi & 1;
        for (int64_t oj = 0; oj < ow; ++oj) {
          const int64_t jj = oj >> 1;
          const int64_t dj = oj & 1;
          float* yrow = yp + (oi * ow + oj) * od;
          for (int64_t ok = 0; ok < od; ++ok) {
            const int64_t kk = ok >> 1;
            const int64_t dk = ok & 1;
            float acc = b;
            for (int64_t ci = 0; ci < in_ch; ++ci)
              acc += x.at(n, ci, ii, jj, kk) *
                     wgt[size_t((((ci * out_ch + co) * 2 + di) * 2 + dj) * 2 + dk)];
            yrow[ok] = acc;
          }
        }
      }
    }
  }
}

void conv_transpose3d_backward(const Tensor& x, const std::vector<float>& wgt, const Tensor& gy,
                               Tensor& gx, std::vector<float>& gw, std::vector<float>& gb,
                               int64_t in_ch, int64_t out_ch) {
  gx = Tensor(x.n, x.c, x.h, x.w, x.d);

#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < x.n; ++n) {
    for (int64_t ci = 0; ci < in_ch; ++ci) {
      float* gxp = gx.chan(n, ci);
      for (int64_t ii = 0; ii < x.h; ++ii) {
        for (int64_t jj = 0; jj < x.w; ++jj) {
          for (int64_t kk = 0; kk < x.d; ++kk) {
            float acc = 0.0f;
            for (int64_t co = 0; co < out_ch; ++co)
              for (int64_t di = 0; di < 2; ++di)
                for (int64_t dj = 0; dj < 2; ++dj)
                  for (int64_t dk = 0; dk < 2; ++dk)
                    acc += gy.at(n, co, 2 * ii + di, 2 * jj + dj, 2 * kk + dk) *
                           wgt[size_t((((ci * out_ch + co) * 2 + di) * 2 + dj) * 2 + dk)];
            gxp[(ii * x.w + jj) * x.d + kk] = acc;
          }
        }
      }
    }
  }

#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t ci = 0; ci < in_ch; ++ci) {
    for (int64_t co = 0; co < out_ch; ++co) {
      for (int64_t di = 0; di < 2; ++di)
        for (int64_t dj = 0; dj < 2; ++dj)
          for (int64_t dk = 0; dk < 2; ++dk) {
            double acc = 0.0;
            for (int64_t n = 0; n < x.n; ++n)
              for (int64_t ii = 0; ii < x.h; ++ii)
                for (int64_t jj = 0; jj < x.w; ++jj)
                  for (int64_t kk = 0; kk < x.d; ++kk)
                    acc += double(x.at(n, ci, ii, jj, kk)) *
                           double(gy.at(n, co, 2 * ii + di, 2 * jj + dj, 2 * kk + dk));
            gw[size_t((((ci * out_ch + co) * 2 + di) * 2 + dj) * 2 + dk)] += float(acc);
          }
    }
  }

#pragma omp parallel for schedule(static)
  for (int64_t co = 0; co < out_ch; ++co) {
    double acc = 0.0;
    for (int64_t n = 0; n < gy.n; ++n) {
      const float* gyp = gy.chan(n, co);
      for (int64_t i = 0; i < gy.spatial(); ++i) acc += double(gyp[i]);
    }
    gb[size_t(co)] += float(acc);
  }
}

void sigmoid_inplace(Tensor& t) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < t.numel(); ++i)
    t.data[size_t(i)] = 1.0f / (1.0f + std::exp(-t.data[size_t(i)]));
}

void sigmoid_backward_into(const Tensor& p, const Tensor& gp, Tensor& gz) {
  gz = Tensor(p.n, p.c, p.h, p.w, p.d);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < p.numel(); ++i) {
    float pv = p.data[size_t(i)];
    gz.data[size_t(i)] = gp.data[size_t(i)] * pv * (1.0f - pv);
  }
}

Tensor softmax_channels(const Tensor& logits) {
  Tensor p(logits.n, logits.c, logits.h, logits.w, logits.d);
  const int64_t sp = logits.spatial();
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < logits.n; ++n) {
    for (int64_t s = 0; s < sp; ++s) {
      float mx = logits.data[size_t(n * logits.c * sp + s)];
      for (int64_t c = 1; c < logits.c; ++c)
        mx = std::max(mx, logits.data[size_t((n * logits.c + c) * sp + s)]);
      double z = 0.0;
      for (int64_t c = 0; c < logits.c; ++c) {
        float e = std::exp(logits.data[size_t((n * logits.c + c) * sp + s)] - mx);
        p.data[size_t((n * logits.c + c) * sp + s)] = e;
        z += double(e);
      }
      const float inv = float(1.0 / z);
      for (int64_t c = 0; c < logits.c; ++c) p.data[size_t((n * logits.c + c) * sp + s)] *= inv;
    }
  }
  return p;
}

void softmax_backward_into(const Tensor& p, const Tensor& gp, Tensor& gz) {
  gz = Tensor(p.n, p.c, p.h, p.w, p.d);
  const int64_t sp = p.spatial();
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < p.n; ++n) {
    for (int64_t s = 0; s < sp; ++s) {
      double dot = 0.0;
      for (int64_t c = 0; c < p.c; ++c) {
        size_t idx = size_t((n * p.c + c) * sp + s);
        dot += double(gp.data[idx]) * double(p.data[idx]);
      }
      for (int64_t c = 0; c < p.c; ++c) {
        size_t idx = size_t((n * p.c + c) * sp + s);
        gz.data[idx] = p.data[idx] * (gp.data[idx] - float(dot));
      }
    }
  }
}

}  // namespace bseg::nn
