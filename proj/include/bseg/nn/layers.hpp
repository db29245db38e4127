#pragma once

#include <string>
#include <vector>

#include "bseg/nn/kernels.hpp"
#include "bseg/nn/tensor.hpp"
#include "bseg/rng.hpp"

namespace bseg::nn {

/// Named view of one parameter tensor and its gradient.
struct ParamRef {
  std::string name;
  std::vector<float>* value = nullptr;
  std::vector<float>* grad = nullptr;
  std::vector<int64_t> shape;
};

/// Named view of a non-trainable state tensor (e.g. running statistics).
struct BufRef {
  std::string name;
  std::vector<float>* value = nullptr;
  std::vector<int64_t> shape;
};

enum class NormKind { batch, instance };
enum class ActKind { relu, leaky_relu };

NormKind norm_kind_from_string(const std::string& s);
std::string to_string(NormKind k);
ActKind act_kind_from_string(const std::string& s);
std::string to_string(ActKind k);

class Conv3d {
 public:
  Conv3d(std::string name, int64_t in_ch, int64_t out_ch, int k, int stride, int pad);

  void init_he(Rng& rng);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);
  void collect_params(std::vector<ParamRef>& out);
  const ConvSpec& spec() const { return spec_; }
  const Tensor& input_cache() const { return x_cache_; }

 private:
  std::string name_;
  ConvSpec spec_;
  std::vector<float> w_, b_, gw_, gb_;
  Tensor x_cache_;
};

/// Transposed conv, fixed kernel 2 stride 2.
class ConvTranspose3d {
 public:
  ConvTranspose3d(std::string name, int64_t in_ch, int64_t out_ch);

  void init_he(Rng& rng);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);
  void collect_params(std::vector<ParamRef>& out);

 private:
  std::string name_;
  int64_t in_ch_, out_ch_;
  std::vector<float> w_, b_, gw_, gb_;
  Tensor x_cache_;
};

/// Batch or instance normalization over (N,)H,W,D per channel.
/// Batch mode uses biased (population) variance for both normalization and
/// the running estimate, and updates running stats only in training mode.
class Norm3d {
 public:
  Norm3d(std::string name, NormKind kind, int64_t channels, double eps = 1e-5,
         double momentum = 0.1);

  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& gy);
  void collect_params(std::vector<ParamRef>& out);
  void collect_buffers(std::vector<BufRef>& out);
  const std::vector<float>& running_mean() const { return running_mean_; }
  const std::vector<float>& running_var() const { return running_var_; }

 private:
  std::string name_;
  NormKind kind_;
  int64_t channels_;
  double eps_, momentum_;
  std::vector<float> gamma_, beta_, ggamma_, gbeta_;
  std::vector<float> running_mean_, running_var_;
  // training-pass caches
  Tensor xhat_cache_;
  std::vector<double> inv_std_cache_;
  bool cached_train_ = false;
};

class Activation {
 public:
  Activation(ActKind kind, double slope) : kind_(kind), slope_(float(slope)) {}

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

 private:
  ActKind kind_;
  float slope_;
  Tensor x_cache_;
};

/// conv -> norm -> activation, the repeating unit of the backbone.
class ConvBlock {
 public:
  ConvBlock(const std::string& name, int64_t in_ch, int64_t out_ch, int k, int stride, int pad,
            NormKind norm, ActKind act, double slope);

  void init_he(Rng& rng) { conv_.init_he(rng); }
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& gy);
  void collect_params(std::vector<ParamRef>& out);
  void collect_buffers(std::vector<BufRef>& out);
  const Tensor& conv_input() const { return conv_.input_cache(); }

 private:
  Conv3d conv_;
  Norm3d norm_;
  Activation act_;
};

/// transposed conv (2x upsampling) -> norm -> activation.
class UpBlock {
 public:
  UpBlock(const std::string& name, int64_t in_ch, int64_t out_ch, NormKind norm, ActKind act,
          double slope);

  void init_he(Rng& rng) { up_.init_he(rng); }
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& gy);
  void collect_params(std::vector<ParamRef>& out);
  void collect_buffers(std::vector<BufRef>& out);

 private:
  ConvTranspose3d up_;
  Norm3d norm_;
  Activation act_;
};

}  // namespace bseg::nn
