#pragma once

#include <vector>

#include "bseg/nn/tensor.hpp"

namespace bseg::nn {

struct ConvSpec {
  int64_t in_ch = 0;
  int64_t out_ch = 0;
  int k = 3;
  int stride = 1;
  int pad = 1;
};

int64_t conv_out_dim(int64_t in, int k, int stride, int pad);

/// y[n,co] = bias[co] + sum_ci x[n,ci] * w[co,ci,:,:,:], zero padding.
/// Weight layout (out_ch, in_ch, k, k, k).
void conv3d_forward(const Tensor& x, const std::vector<float>& wgt,
                    const std::vector<float>& bias, Tensor& y, const ConvSpec& s);

/// Accumulates into gw/gb, overwrites gx.
void conv3d_backward(const Tensor& x, const std::vector<float>& wgt, const Tensor& gy,
                     Tensor& gx, std::vector<float>& gw, std::vector<float>& gb,
                     const ConvSpec& s);

/// Transposed convolution, kernel 2 stride 2 (exact upsampling by 2).
/// Weight layout (in_ch, out_ch, 2, 2, 2).
void conv_transpose3d_forward(const Tensor& x, const std::vector<float>& wgt,
                              const std::vector<float>& bias, Tensor& y, int64_t in_ch,
                              int64_t out_ch);

void conv_transpose3d_backward(const Tensor& x, const std::vector<float>& wgt, const Tensor& gy,
                               Tensor& gx, std::vector<float>& gw, std::vector<float>& gb,
                               int64_t in_ch, int64_t out_ch);

/// Elementwise logistic map.
void sigmoid_inplace(Tensor& t);

/// gz = gp * p * (1 - p), where p = sigmoid(z).
void sigmoid_backward_into(const Tensor& p, const Tensor& gp, Tensor& gz);

/// Per-voxel softmax over the channel axis.
Tensor softmax_channels(const Tensor& logits);

/// gz_c = p_c * (gp_c - sum_k gp_k p_k) per voxel.
void softmax_backward_into(const Tensor& p, const Tensor& gp, Tensor& gz);

}  // namespace bseg::nn
