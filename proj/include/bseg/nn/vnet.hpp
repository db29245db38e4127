#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bseg/nn/layers.hpp"

namespace bseg::nn {

struct VNetConfig {
  int64_t in_channels = 1;
  int depth = 5;
  int64_t base_width = 16;
  int64_t feat_channels = 16;
  int64_t class_count = 1;
  bool dual_head = true;
  NormKind norm = NormKind::batch;
  ActKind activation = ActKind::relu;
  double leaky_slope = 0.01;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static VNetConfig from_json(const nlohmann::json& j);
};

struct VNetOutput {
  Tensor seg_logits;
  Tensor bnd_logits;  // empty unless dual_head
};

/// Encoder-decoder segmentation backbone with skip connections and one or
/// two pointwise prediction heads on a shared trunk.
class VNet {
 public:
  VNet(const VNetConfig& cfg, Rng& rng);

  /// Requires each spatial dim divisible by 2^(depth-1).
  VNetOutput forward(const Tensor& x, bool train);

  /// Backward through the cached forward pass. g_bnd is ignored for
  /// single-head models; pass an empty tensor.
  void backward(const Tensor& g_seg_logits, const Tensor& g_bnd_logits);

  void zero_grad();
  std::vector<ParamRef> params();
  std::vector<BufRef> buffers();
  const VNetConfig& config() const { return cfg_; }
  int64_t param_count();
  /// Gradients of the boundary head are zeroed after each backward call.
  void set_freeze_boundary_head(bool freeze) { freeze_bnd_head_ = freeze; }

 private:
  VNetConfig cfg_;
  int levels_;
  std::vector<int64_t> width_;

  std::optional<ConvBlock> stem_;
  std::vector<ConvBlock> enc_down_, enc_a_, enc_b_;
  std::vector<UpBlock> dec_up_;
  std::vector<ConvBlock> dec_a_, dec_b_;
  std::optional<ConvBlock> neck_;
  std::optional<Conv3d> head_seg_, head_bnd_;
  bool freeze_bnd_head_ = false;
  bool forward_done_ = false;
};

}  // namespace bseg::nn
