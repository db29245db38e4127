#include "bseg/nn/layers.hpp"

#include <cmath>

namespace bseg::nn {

NormKind norm_kind_from_string(const std::string& s) {
  if (s == "batch") return NormKind::batch;
  if (s == "instance") return NormKind::instance;
  throw ConfigError("unknown norm '" + s + "' (expected 'batch' or 'instance')");
}

std::string to_string(NormKind k) { return k == NormKind::batch ? "batch" : "instance"; }

ActKind act_kind_from_string(const std::string& s) {
  if (s == "relu") return ActKind::relu;
  if (s == "leaky_relu") return ActKind::leaky_relu;
  throw ConfigError("unknown activation '" + s + "' (expected 'relu' or 'leaky_relu')");
}

std::string to_string(ActKind k) { return k == ActKind::relu ? "relu" : "leaky_relu"; }

// ---------------------------------------------------------------------------
// Conv3d
// ---------------------------------------------------------------------------

Conv3d::Conv3d(std::string name, int64_t in_ch, int64_t out_ch, int k, int stride, int pad)
    : name_(std::move(name)) {
  spec_ = ConvSpec{in_ch, out_ch, k, stride, pad};
  const size_t wn = size_t(out_ch * in_ch * k * k * k);
  w_.assign(wn, 0.0f);
  b_.assign(size_t(out_ch), 0.0f);
  gw_.assign(wn, 0.0f);
  gb_.assign(size_t(out_ch), 0.0f);
}

void Conv3d::init_he(Rng& rng) {
  const double fan_in = double(spec_.in_ch) * spec_.k * spec_.k * spec_.k;
  const double std = std::sqrt(2.0 / fan_in);
  for (auto& v : w_) v = float(rng.normal(0.0, std));
  for (auto& v : b_) v = 0.0f;
}

Tensor Conv3d::forward(const Tensor& x) {
  x_cache_ = x;
  Tensor y;
  conv3d_forward(x, w_, b_, y, spec_);
  return y;
}

Tensor Conv3d::backward(const Tensor& gy) {
  Tensor gx;
  conv3d_backward(x_cache_, w_, gy, gx, gw_, gb_, spec_);
  return gx;
}

void Conv3d::collect_params(std::vector<ParamRef>& out) {
  out.push_back({name_ + ".weight", &w_, &gw_,
                 {spec_.out_ch, spec_.in_ch, spec_.k, spec_.k, spec_.k}});
  out.push_back({name_ + ".bias", &b_, &gb_, {spec_.out_ch}});
}

// ---------------------------------------------------------------------------
// ConvTranspose3d
// ---------------------------------------------------------------------------

ConvTranspose3d::ConvTranspose3d(std::string name, int64_t in_ch, int64_t out_ch)
    : name_(std::move(name)), in_ch_(in_ch), out_ch_(out_ch) {
  w_.assign(size_t(in_ch * out_ch * 8), 0.0f);
  b_.assign(size_t(out_ch), 0.0f);
  gw_.assign(w_.size(), 0.0f);
  gb_.assign(b_.size(), 0.0f);
}

void ConvTranspose3d::init_he(Rng& rng) {
  const double fan_in = double(in_ch_) * 8.0;
  const double std = std::sqrt(2.0 / fan_in);
  for (auto& v : w_) v = float(rng.normal(0.0, std));
  for (auto& v : b_) v = 0.0f;
}

Tensor ConvTranspose3d::forward(const Tensor& x) {
  x_cache_ = x;
  Tensor y;
  conv_transpose3d_forward(x, w_, b_, y, in_ch_, out_ch_);
  return y;
}

Tensor ConvTranspose3d::backward(const Tensor& gy) {
  Tensor gx;
  conv_transpose3d_backward(x_cache_, w_, gy, gx, gw_, gb_, in_ch_, out_ch_);
  return gx;
}

void ConvTranspose3d::collect_params(std::vector<ParamRef>& out) {
  out.push_back({name_ + ".weight", &w_, &gw_, {in_ch_, out_ch_, 2, 2, 2}});
  out.push_back({name_ + ".bias", &b_, &gb_, {out_ch_}});
}

// ---------------------------------------------------------------------------
// Norm3d
// ---------------------------------------------------------------------------

Norm3d::Norm3d(std::string name, NormKind kind, int64_t channels, double eps, double momentum)
    : name_(std::move(name)), kind_(kind), channels_(channels), eps_(eps), momentum_(momentum) {
  gamma_.assign(size_t(channels), 1.0f);
  beta_.assign(size_t(channels), 0.0f);
  ggamma_.assign(size_t(channels), 0.0f);
  gbeta_.assign(size_t(channels), 0.0f);
  if (kind_ == NormKind::batch) {
    running_mean_.assign(size_t(channels), 0.0f);
    running_var_.assign(size_t(channels), 1.0f);
  }
}

Tensor Norm3d::forward(const Tensor& x, bool train) {
  if (x.c != channels_)
    throw ShapeMismatchError("norm input: expected " + std::to_string(channels_) +
                             " channels, got " + x.shape_str());
  Tensor y(x.n, x.c, x.h, x.w, x.d);
  xhat_cache_ = Tensor(x.n, x.c, x.h, x.w, x.d);
  const int64_t sp = x.spatial();

  if (kind_ == NormKind::batch) {
    inv_std_cache_.assign(size_t(channels_), 0.0);
    const double m = double(x.n) * double(sp);
    cached_train_ = train;
#pragma omp parallel for schedule(static)
    for (int64_t c = 0; c < channels_; ++c) {
      double mean, var;
      if (train) {
        double sum = 0.0, sumsq = 0.0;
        for (int64_t n = 0; n < x.n; ++n) {
          const float* p = x.chan(n, c);
          for (int64_t i = 0; i < sp; ++i) {
            sum += double(p[i]);
            sumsq += double(p[i]) * double(p[i]);
          }
        }
        mean = sum / m;
        var = std::max(0.0, sumsq / m - mean * mean);
        running_mean_[size_t(c)] =
            float((1.0 - momentum_) * double(running_mean_[size_t(c)]) + momentum_ * mean);
        running_var_[size_t(c)] =
            float((1.0 - momentum_) * double(running_var_[size_t(c)]) + momentum_ * var);
      } else {
        mean = double(running_mean_[size_t(c)]);
        var = double(running_var_[size_t(c)]);
      }
      const double is = 1.0 / std::sqrt(var + eps_);
      inv_std_cache_[size_t(c)] = is;
      const float g = gamma_[size_t(c)], bt = beta_[size_t(c)];
      for (int64_t n = 0; n < x.n; ++n) {
        const float* p = x.chan(n, c);
        float* xh = xhat_cache_.chan(n, c);
        float* yp = y.chan(n, c);
        for (int64_t i = 0; i < sp; ++i) {
          float v = float((double(p[i]) - mean) * is);
          xh[i] = v;
          yp[i] = g * v + bt;
        }
      }
    }
  } else {
    inv_std_cache_.assign(size_t(x.n * channels_), 0.0);
    cached_train_ = true;
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < x.n; ++n) {
      for (int64_t c = 0; c < channels_; ++c) {
        const float* p = x.chan(n, c);
        double sum = 0.0, sumsq = 0.0;
        for (int64_t i = 0; i < sp; ++i) {
          sum += double(p[i]);
          sumsq += double(p[i]) * double(p[i]);
        }
        const double mean = sum / double(sp);
        const double var = std::max(0.0, sumsq / double(sp) - mean * mean);
        const double is = 1.0 / std::sqrt(var + eps_);
        inv_std_cache_[size_t(n * channels_ + c)] = is;
        const float g = gamma_[size_t(c)], bt = beta_[size_t(c)];
        float* xh = xhat_cache_.chan(n, c);
        float* yp = y.chan(n, c);
        for (int64_t i = 0; i < sp; ++i) {
          float v = float((double(p[i]) - mean) * is);
          xh[i] = v;
          yp[i] = g * v + bt;
        }
      }
    }
  }
  return y;
}

Tensor Norm3d::backward(const Tensor& gy) {
  Tensor gx(gy.n, gy.c, gy.h, gy.w, gy.d);
  const int64_t sp = gy.spatial();

  if (kind_ == NormKind::batch) {
    const double m = double(gy.n) * double(sp);
#pragma omp parallel for schedule(static)
    for (int64_t c = 0; c < channels_; ++c) {
      double sg = 0.0, sgx = 0.0;
      for (int64_t n = 0; n < gy.n; ++n) {
        const float* gp = gy.chan(n, c);
        const float* xh = xhat_cache_.chan(n, c);
        for (int64_t i = 0; i < sp; ++i) {
          sg += double(gp[i]);
          sgx += double(gp[i]) * double(xh[i]);
        }
      }
      ggamma_[size_t(c)] += float(sgx);
      gbeta_[size_t(c)] += float(sg);
      const double g = double(gamma_[size_t(c)]);
      const double is = inv_std_cache_[size_t(c)];
      for (int64_t n = 0; n < gy.n; ++n) {
        const float* gp = gy.chan(n, c);
        const float* xh = xhat_cache_.chan(n, c);
        float* gxp = gx.chan(n, c);
        if (cached_train_) {
          for (int64_t i = 0; i < sp; ++i)
            gxp[i] = float(g * is / m * (m * double(gp[i]) - sg - double(xh[i]) * sgx));
        } else {
          for (int64_t i = 0; i < sp; ++i) gxp[i] = float(g * is * double(gp[i]));
        }
      }
    }
  } else {
#pragma omp parallel for schedule(static)
    for (int64_t c = 0; c < channels_; ++c) {
      double sg_total = 0.0, sgx_total = 0.0;
      const double g = double(gamma_[size_t(c)]);
      for (int64_t n = 0; n < gy.n; ++n) {
        const float* gp = gy.chan(n, c);
        const float* xh = xhat_cache_.chan(n, c);
        double sg = 0.0, sgx = 0.0;
        for (int64_t i = 0; i < sp; ++i) {
          sg += double(gp[i]);
          sgx += double(gp[i]) * double(xh[i]);
        }
        sg_total += sg;
        sgx_total += sgx;
        const double is = inv_std_cache_[size_t(n * channels_ + c)];
        float* gxp = gx.chan(n, c);
        for (int64_t i = 0; i < sp; ++i)
          gxp[i] =
              float(g * is / double(sp) * (double(sp) * double(gp[i]) - sg - double(xh[i]) * sgx));
      }
      ggamma_[size_t(c)] += float(sgx_total);
      gbeta_[size_t(c)] += float(sg_total);
    }
  }
  return gx;
}

void Norm3d::collect_params(std::vector<ParamRef>& out) {
  out.push_back({name_ + ".gamma", &gamma_, &ggamma_, {channels_}});
  out.push_back({name_ + ".beta", &beta_, &gbeta_, {channels_}});
}

void Norm3d::collect_buffers(std::vector<BufRef>& out) {
  if (kind_ != NormKind::batch) return;
  out.push_back({name_ + ".running_mean", &running_mean_, {channels_}});
  out.push_back({name_ + ".running_var", &running_var_, {channels_}});
}

// ---------------------------------------------------------------------------
// Activation
// ---------------------------------------------------------------------------

Tensor Activation::forward(const Tensor& x) {
  x_cache_ = x;
  Tensor y(x.n, x.c, x.h, x.w, x.d);
  const float s = kind_ == ActKind::relu ? 0.0f : slope_;
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < x.numel(); ++i) {
    float v = x.data[size_t(i)];
    y.data[size_t(i)] = v > 0.0f ? v : s * v;
  }
  return y;
}

Tensor Activation::backward(const Tensor& gy) {
  Tensor gx(gy.n, gy.c, gy.h, gy.w, gy.d);
  const float s = kind_ == ActKind::relu ? 0.0f : slope_;
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < gy.numel(); ++i) {
    gx.data[size_t(i)] = x_cache_.data[size_t(i)] > 0.0f ? gy.data[size_t(i)]
                                                         : s * gy.data[size_t(i)];
  }
  return gx;
}

// ---------------------------------------------------------------------------
// ConvBlock
// ---------------------------------------------------------------------------

ConvBlock::ConvBlock(const std::string& name, int64_t in_ch, int64_t out_ch, int k, int stride,
                     int pad, NormKind norm, ActKind act, double slope)
    : conv_(name + ".conv", in_ch, out_ch, k, stride, pad),
      norm_(name + ".norm", norm, out_ch),
      act_(act, slope) {}

Tensor ConvBlock::forward(const Tensor& x, bool train) {
  return act_.forward(norm_.forward(conv_.forward(x), train));
}

Tensor ConvBlock::backward(const Tensor& gy) {
  return conv_.backward(norm_.backward(act_.backward(gy)));
}

void ConvBlock::collect_params(std::vector<ParamRef>& out) {
  conv_.collect_params(out);
  norm_.collect_params(out);
}

void ConvBlock::collect_buffers(std::vector<BufRef>& out) { norm_.collect_buffers(out); }

// ---------------------------------------------------------------------------
// UpBlock
// ---------------------------------------------------------------------------

UpBlock::UpBlock(const std::string& name, int64_t in_ch, int64_t out_ch, NormKind norm,
                 ActKind act, double slope)
    : up_(name + ".up", in_ch, out_ch), norm_(name + ".norm", norm, out_ch), act_(act, slope) {}

Tensor UpBlock::forward(const Tensor& x, bool train) {
  return act_.forward(norm_.forward(up_.forward(x), train));
}

Tensor UpBlock::backward(const Tensor& gy) {
  return up_.backward(norm_.backward(act_.backward(gy)));
}

void UpBlock::collect_params(std::vector<ParamRef>& out) {
  up_.collect_params(out);
  norm_.collect_params(out);
}

void UpBlock::collect_buffers(std::vector<BufRef>& out) { norm_.collect_buffers(out); }

}  // namespace bseg::nn
