#include "bseg/nn/vnet.hpp"

namespace bseg::nn {

void VNetConfig::validate() const {
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (depth < 2 || depth > 6) throw ConfigError("depth must be in [2, 6]");
  if (base_width < 1) throw ConfigError("base_width must be >= 1");
  if (feat_channels < 1) throw ConfigError("feat_channels must be >= 1");
  if (class_count < 1) throw ConfigError("class_count must be >= 1");
  if (leaky_slope < 0.0) throw ConfigError("leaky_slope must be >= 0");
}

nlohmann::ordered_json VNetConfig::to_json() const {
  return nlohmann::ordered_json{{"in_channels", in_channels},
                                {"depth", depth},
                                {"base_width", base_width},
                                {"feat_channels", feat_channels},
                                {"class_count", class_count},
                                {"dual_head", dual_head},
                                {"norm", to_string(norm)},
                                {"activation", to_string(activation)},
                                {"leaky_slope", leaky_slope}};
}

VNetConfig VNetConfig::from_json(const nlohmann::json& j) {
  VNetConfig c;
  c.in_channels = j.value("in_channels", c.in_channels);
  c.depth = j.value("depth", c.depth);
  c.base_width = j.value("base_width", c.base_width);
  c.feat_channels = j.value("feat_channels", c.feat_channels);
  c.class_count = j.value("class_count", c.class_count);
  c.dual_head = j.value("dual_head", c.dual_head);
  if (j.contains("norm")) c.norm = norm_kind_from_string(j.at("norm").get<std::string>());
  if (j.contains("activation"))
    c.activation = act_kind_from_string(j.at("activation").get<std::string>());
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.validate();
  return c;
}

VNet::VNet(const VNetConfig& cfg, Rng& rng) : cfg_(cfg), levels_(cfg.depth) {
  cfg_.validate();
  const NormKind nk = cfg_.norm;
  const ActKind ak = cfg_.activation;
  const double sl = cfg_.leaky_slope;

  width_.resize(size_t(levels_));
  for (int i = 0; i < levels_; ++i) width_[size_t(i)] = cfg_.base_width << i;

  stem_.emplace("stem", cfg_.in_channels, width_[0], 3, 1, 1, nk, ak, sl);
  for (int i = 0; i + 1 < levels_; ++i) {
    const std::string lv = "enc" + std::to_string(i + 1);
    enc_down_.emplace_back(lv + ".down", width_[size_t(i)], width_[size_t(i + 1)], 2, 2, 0, nk,
                           ak, sl);
    enc_a_.emplace_back(lv + ".a", width_[size_t(i + 1)], width_[size_t(i + 1)], 3, 1, 1, nk, ak,
                        sl);
    enc_b_.emplace_back(lv + ".b", width_[size_t(i + 1)], width_[size_t(i + 1)], 3, 1, 1, nk, ak,
                        sl);
  }
  for (int i = 0; i + 1 < levels_; ++i) {
    const std::string lv = "dec" + std::to_string(i);
    dec_up_.emplace_back(lv + ".up", width_[size_t(i + 1)], width_[size_t(i)], nk, ak, sl);
    dec_a_.emplace_back(lv + ".a", 2 * width_[size_t(i)], width_[size_t(i)], 3, 1, 1, nk, ak,
                        sl);
    dec_b_.emplace_back(lv + ".b", width_[size_t(i)], width_[size_t(i)], 3, 1, 1, nk, ak, sl);
  }
  if (cfg_.feat_channels != width_[0])
    neck_.emplace("neck", width_[0], cfg_.feat_channels, 1, 1, 0, nk, ak, sl);
  head_seg_.emplace("head_seg", cfg_.feat_channels, cfg_.class_count, 1, 1, 0);
  if (cfg_.dual_head) head_bnd_.emplace("head_bnd", cfg_.feat_channels, cfg_.class_count, 1, 1, 0);

  // Initialization order fixes the random stream: the shared trunk and the
  // seg head consume draws before the boundary head, so a single-head model
  // built from the same seed starts from identical trunk weights.
  stem_->init_he(rng);
  for (int i = 0; i + 1 < levels_; ++i) {
    enc_down_[size_t(i)].init_he(rng);
    enc_a_[size_t(i)].init_he(rng);
    enc_b_[size_t(i)].init_he(rng);
  }
  for (int i = 0; i + 1 < levels_; ++i) {
    dec_up_[size_t(i)].init_he(rng);
    dec_a_[size_t(i)].init_he(rng);
    dec_b_[size_t(i)].init_he(rng);
  }
  if (neck_) neck_->init_he(rng);
  head_seg_->init_he(rng);
  if (head_bnd_) head_bnd_->init_he(rng);
}

VNetOutput VNet::forward(const Tensor& x, bool train) {
  if (x.c != cfg_.in_channels)
    throw IncompatibleShapeError("input: expected " + std::to_string(cfg_.in_channels) +
                                 " channels, got " + x.shape_str());
  const int64_t div = int64_t(1) << (levels_ - 1);
  const char* names[3] = {"height", "width", "depth"};
  const int64_t dims[3] = {x.h, x.w, x.d};
  for (int a = 0; a < 3; ++a) {
    if (dims[a] % div != 0 || dims[a] == 0)
      throw IncompatibleShapeError(std::string("input ") + names[a] + " " +
                                   std::to_string(dims[a]) + " is not divisible by " +
                                   std::to_string(div));
  }

  Tensor cur = stem_->forward(x, train);
  for (int i = 0; i + 1 < levels_; ++i) {
    Tensor y = enc_down_[size_t(i)].forward(cur, train);
    y = enc_a_[size_t(i)].forward(y, train);
    cur = enc_b_[size_t(i)].forward(y, train);
  }
  // walk back up; each module keeps its own input cache for backward
  for (int i = levels_ - 2; i >= 0; --i) {
    Tensor up = dec_up_[size_t(i)].forward(cur, train);
    // the skip is the cached input of the matching down-transition
    Tensor cat = concat_channels(up, enc_down_[size_t(i)].conv_input());
    Tensor y = dec_a_[size_t(i)].forward(cat, train);
    cur = dec_b_[size_t(i)].forward(y, train);
  }
  Tensor feat = neck_ ? neck_->forward(cur, train) : std::move(cur);

  VNetOutput out;
  out.seg_logits = head_seg_->forward(feat);
  if (head_bnd_) out.bnd_logits = head_bnd_->forward(feat);
  forward_done_ = true;
  return out;
}

void VNet::backward(const Tensor& g_seg_logits, const Tensor& g_bnd_logits) {
  if (!forward_done_) throw Error("backward called before forward");

  Tensor g_feat = head_seg_->backward(g_seg_logits);
  if (head_bnd_ && g_bnd_logits.numel() > 0) {
    Tensor g2 = head_bnd_->backward(g_bnd_logits);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < g_feat.numel(); ++i) g_feat.data[size_t(i)] += g2.data[size_t(i)];
  }
  Tensor g = neck_ ? neck_->backward(g_feat) : std::move(g_feat);

  std::vector<Tensor> g_skip(size_t(levels_ - 1));
  for (int i = 0; i + 1 < levels_; ++i) {
    Tensor gy = dec_a_[size_t(i)].backward(dec_b_[size_t(i)].backward(g));
    Tensor g_up;
    split_channels(gy, width_[size_t(i)], g_up, g_skip[size_t(i)]);
    g = dec_up_[size_t(i)].backward(g_up);
  }
  for (int i = levels_ - 2; i >= 0; --i) {
    Tensor gy = enc_down_[size_t(i)].backward(
        enc_a_[size_t(i)].backward(enc_b_[size_t(i)].backward(g)));
#pragma omp parallel for schedule(static)
    for (int64_t j = 0; j < gy.numel(); ++j)
      gy.data[size_t(j)] += g_skip[size_t(i)].data[size_t(j)];
    g = std::move(gy);
  }
  stem_->backward(g);

  if (freeze_bnd_head_ && head_bnd_) {
    std::vector<ParamRef> ps;
    head_bnd_->collect_params(ps);
    for (auto& p : ps) std::fill(p.grad->begin(), p.grad->end(), 0.0f);
  }
}

void VNet::zero_grad() {
  for (auto& p : params()) std::fill(p.grad->begin(), p.grad->end(), 0.0f);
}

std::vector<ParamRef> VNet::params() {
  std::vector<ParamRef> out;
  stem_->collect_params(out);
  for (int i = 0; i + 1 < levels_; ++i) {
    enc_down_[size_t(i)].collect_params(out);
    enc_a_[size_t(i)].collect_params(out);
    enc_b_[size_t(i)].collect_params(out);
  }
  for (int i = 0; i + 1 < levels_; ++i) {
    dec_up_[size_t(i)].collect_params(out);
    dec_a_[size_t(i)].collect_params(out);
    dec_b_[size_t(i)].collect_params(out);
  }
  if (neck_) neck_->collect_params(out);
  head_seg_->collect_params(out);
  if (head_bnd_) head_bnd_->collect_params(out);
  return out;
}

std::vector<BufRef> VNet::buffers() {
  std::vector<BufRef> out;
  stem_->collect_buffers(out);
  for (int i = 0; i + 1 < levels_; ++i) {
    enc_down_[size_t(i)].collect_buffers(out);
    enc_a_[size_t(i)].collect_buffers(out);
    enc_b_[size_t(i)].collect_buffers(out);
  }
  for (int i = 0; i + 1 < levels_; ++i) {
    dec_up_[size_t(i)].collect_buffers(out);
    dec_a_[size_t(i)].collect_buffers(out);
    dec_b_[size_t(i)].collect_buffers(out);
  }
  if (neck_) neck_->collect_buffers(out);
  return out;
}

int64_t VNet::param_count() {
  int64_t n = 0;
  for (const auto& p : params()) n += int64_t(p.value->size());
  return n;
}

}  // namespace bseg::nn
