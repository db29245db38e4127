#include "bseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "bseg/errors.hpp"
#include "bseg/morphology.hpp"
#include "bseg/nn/checkpoint.hpp"
#include "bseg/nn/kernels.hpp"

namespace fs = std::filesystem;

namespace bseg::train {

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "supervised") return TrainMode::supervised;
  if (s == "fp_semisup") return TrainMode::fp_semisup;
  throw ConfigError("unknown train mode '" + s + "'");
}

Method method_from_string(const std::string& s) {
  if (s == "boundaryseg") return Method::boundaryseg;
  if (s == "lower_bound") return Method::lower_bound;
  if (s == "peri_loss") return Method::peri_loss;
  throw ConfigError("unknown method '" + s + "'");
}

std::string to_string(TrainMode m) {
  return m == TrainMode::supervised ? "supervised" : "fp_semisup";
}

std::string to_string(Method m) {
  switch (m) {
    case Method::boundaryseg: return "boundaryseg";
    case Method::lower_bound: return "lower_bound";
    default: return "peri_loss";
  }
}

void OptimizerConfig::validate() const {
  if (kind != "sgd") throw ConfigError("unknown optimizer '" + kind + "'");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
}

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (log_every < 1) throw ConfigError("log_every must be positive");
  if (eval_every < 0) throw ConfigError("eval_every must be non-negative");
  if (r < 1 || r % 2 == 0) throw ConfigError("r must be an odd positive integer");
  weights.validate();
  optimizer.validate();
  augment.validate();
  model.validate();
  if (model.class_count != 1) throw ConfigError("training is binary: class_count must be 1");
  if (mode == TrainMode::fp_semisup) {
    if (labeled_batch_size < 1 || labeled_batch_size >= batch_size)
      throw ConfigError("fp_semisup requires 1 <= labeled_batch_size < batch_size");
    if (model.norm != nn::NormKind::batch)
      throw ConfigError("fp_semisup requires batch normalization");
    if (method == Method::peri_loss)
      throw ConfigError("peri_loss has no semi-supervised mode");
  }
  int64_t div = int64_t(1) << (model.depth - 1);
  for (int a = 0; a < 3; ++a) {
    if (patch_size[size_t(a)] < 1) throw ConfigError("patch_size must be positive");
    if (patch_size[size_t(a)] % div)
      throw ConfigError("patch_size axis " + std::to_string(a) + " must be divisible by " +
                        std::to_string(div));
    if (infer_strides[size_t(a)] < 1 || infer_strides[size_t(a)] > patch_size[size_t(a)])
      throw ConfigError("infer_strides must be in [1, patch_size] per axis");
  }
  if (augment.rot90_prob > 0.0 && patch_size[0] != patch_size[1])
    throw ConfigError("in-plane rotation requires square in-plane patches");
  if (fg_bias < 0.0 || fg_bias > 1.0) throw ConfigError("fg_bias must be in [0, 1]");
  if (!(threshold > 0.0) || !(threshold < 1.0)) throw ConfigError("threshold must be in (0, 1)");
  if (!(hd_percentile > 0.0) || hd_percentile > 100.0)
    throw ConfigError("hd_percentile must be in (0, 100]");
}

TrainConfig TrainConfig::normalized() const {
  TrainConfig c = *this;
  if (method == Method::lower_bound) {
    c.weights.lambda_boundary = 0.0;
    c.weights.lambda_cons = 0.0;
    c.model.dual_head = false;
  }
  if (method == Method::peri_loss) c.model.dual_head = false;
  return c;
}

namespace {

nlohmann::ordered_json weights_to_json(const losses::LossWeights& w) {
  return {{"lambda_boundary", w.lambda_boundary},
          {"lambda_cons", w.lambda_cons},
          {"cons_variant", losses::to_string(w.cons_variant)},
          {"dice_epsilon", w.dice_epsilon},
          {"cons_stop_grad_seg", w.cons_stop_grad_seg}};
}

losses::LossWeights weights_from_json(const nlohmann::json& j) {
  losses::LossWeights w;
  w.lambda_boundary = j.value("lambda_boundary", w.lambda_boundary);
  w.lambda_cons = j.value("lambda_cons", w.lambda_cons);
  if (j.contains("cons_variant"))
    w.cons_variant = losses::cons_variant_from_string(j.at("cons_variant").get<std::string>());
  w.dice_epsilon = j.value("dice_epsilon", w.dice_epsilon);
  w.cons_stop_grad_seg = j.value("cons_stop_grad_seg", w.cons_stop_grad_seg);
  return w;
}

}  // namespace

nlohmann::ordered_json TrainConfig::to_json() const {
  return {{"iterations", iterations},
          {"batch_size", batch_size},
          {"labeled_batch_size", labeled_batch_size},
          {"r", r},
          {"mode", train::to_string(mode)},
          {"method", train::to_string(method)},
          {"seed", seed},
          {"eval_every", eval_every},
          {"log_every", log_every},
          {"patch_size", patch_size},
          {"infer_strides", infer_strides},
          {"fg_bias", fg_bias},
          {"threshold", threshold},
          {"hd_percentile", hd_percentile},
          {"freeze_boundary_head", freeze_boundary_head},
          {"weights", weights_to_json(weights)},
          {"optimizer",
           {{"kind", optimizer.kind},
            {"learning_rate", optimizer.learning_rate},
            {"momentum", optimizer.momentum},
            {"weight_decay", optimizer.weight_decay}}},
          {"augment", {{"flip_prob", augment.flip_prob}, {"rot90_prob", augment.rot90_prob}}},
          {"model", model.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.iterations = j.value("iterations", c.iterations);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.labeled_batch_size = j.value("labeled_batch_size", c.labeled_batch_size);
  c.r = j.value("r", c.r);
  if (j.contains("mode")) c.mode = train_mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("method")) c.method = method_from_string(j.at("method").get<std::string>());
  c.seed = j.value("seed", c.seed);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.log_every = j.value("log_every", c.log_every);
  if (j.contains("patch_size")) c.patch_size = j.at("patch_size").get<std::array<int64_t, 3>>();
  if (j.contains("infer_strides"))
    c.infer_strides = j.at("infer_strides").get<std::array<int64_t, 3>>();
  c.fg_bias = j.value("fg_bias", c.fg_bias);
  c.threshold = j.value("threshold", c.threshold);
  c.hd_percentile = j.value("hd_percentile", c.hd_percentile);
  c.freeze_boundary_head = j.value("freeze_boundary_head", c.freeze_boundary_head);
  if (j.contains("weights")) c.weights = weights_from_json(j.at("weights"));
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    c.optimizer.kind = o.value("kind", c.optimizer.kind);
    c.optimizer.learning_rate = o.value("learning_rate", c.optimizer.learning_rate);
    c.optimizer.momentum = o.value("momentum", c.optimizer.momentum);
    c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
  }
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    c.augment.flip_prob = a.value("flip_prob", c.augment.flip_prob);
    c.augment.rot90_prob = a.value("rot90_prob", c.augment.rot90_prob);
  }
  if (j.contains("model")) c.model = nn::VNetConfig::from_json(j.at("model"));
  return c;
}

Sgd::Sgd(const OptimizerConfig& cfg, std::vector<nn::ParamRef> params)
    : cfg_(cfg), lr_(cfg.learning_rate), params_(std::move(params)) {
  cfg_.validate();
  velocity_.reserve(params_.size());
  for (auto& p : params_) velocity_.emplace_back(p.value->size(), 0.0f);
}

void Sgd::set_learning_rate(double lr) {
  if (!(lr > 0.0)) throw ConfigError("learning_rate must be positive");
  lr_ = lr;
}

void Sgd::step() {
  const float mu = float(cfg_.momentum);
  const float wd = float(cfg_.weight_decay);
  const float lr = float(lr_);
  for (size_t t = 0; t < params_.size(); ++t) {
    float* w = params_[t].value->data();
    const float* g = params_[t].grad->data();
    float* v = velocity_[t].data();
    const int64_t m = int64_t(params_[t].value->size());
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) {
      v[i] = mu * v[i] + (g[i] + wd * w[i]);
      w[i] -= lr * v[i];
    }
  }
}

ProbabilityMap soft_boundary(const ProbabilityMap& p, int r) {
  ProbabilityMap eroded = morph::soft_erode(p, r);
  GridF out(p.voxels.h, p.voxels.w, p.voxels.d);
  for (int64_t i = 0; i < out.size(); ++i) {
    float v = p.voxels.data[size_t(i)] - eroded.voxels.data[size_t(i)];
    out.data[size_t(i)] = std::clamp(v, 0.0f, 1.0f);
  }
  return ProbabilityMap(std::move(out));
}

losses::LossBreakdown peri_loss_value(const ProbabilityMap& seg_prob, const BinaryMask& label,
                                      int r, const losses::LossWeights& w) {
  seg_prob.validate();
  if (seg_prob.voxels.h != label.voxels.h || seg_prob.voxels.w != label.voxels.w ||
      seg_prob.voxels.d != label.voxels.d)
    throw ShapeMismatchError("label: shape " + label.voxels.shape_str() +
                             " does not match prediction " + seg_prob.voxels.shape_str());
  losses::LossBreakdown out;
  out.seg = losses::seg_loss(seg_prob, label, w.dice_epsilon);
  BinaryMask band = morph::boundary_label(label, r);
  ProbabilityMap sb = soft_boundary(seg_prob, r);
  std::vector<float> band_f(band.voxels.data.begin(), band.voxels.data.end());
  out.boundary = losses::dice_loss_flat(sb.voxels.data.data(), band_f.data(),
                                        sb.voxels.size(), w.dice_epsilon);
  out.consistency = 0.0;
  out.total = out.seg + w.lambda_boundary * out.boundary;
  return out;
}

namespace {

void check_batch_shapes(const std::vector<data::Sample>& batch) {
  if (batch.empty()) throw ConfigError("empty batch");
  const auto& ref = batch.front().image.voxels;
  for (const auto& s : batch)
    if (s.image.voxels.h != ref.h || s.image.voxels.w != ref.w || s.image.voxels.d != ref.d)
      throw ShapeMismatchError("batch item " + s.id + ": shape " + s.image.voxels.shape_str() +
                               " does not match " + ref.shape_str());
}

void require_labels(const std::vector<data::Sample>& batch) {
  for (const auto& s : batch)
    if (!s.label) throw MissingLabelError("batch item " + s.id + " has no label");
}

nn::Tensor stack_images(const std::vector<const data::Sample*>& items) {
  const auto& ref = items.front()->image.voxels;
  nn::Tensor x(int64_t(items.size()), 1, ref.h, ref.w, ref.d);
  for (size_t b = 0; b < items.size(); ++b)
    std::copy(items[b]->image.voxels.data.begin(), items[b]->image.voxels.data.end(),
              x.chan(int64_t(b), 0));
  return x;
}

std::vector<float> mask_to_float(const GridU8& g) {
  return std::vector<float>(g.data.begin(), g.data.end());
}

struct StepScratch {
  nn::Tensor seg_prob, bnd_prob, g_segp, g_bndp, g_seg, g_bnd;
};

losses::LossBreakdown scale_breakdown(const losses::LossBreakdown& b, double s) {
  return {b.total * s, b.seg * s, b.boundary * s, b.consistency * s};
}

void add_breakdown(losses::LossBreakdown& acc, const losses::LossBreakdown& b) {
  acc.total += b.total;
  acc.seg += b.seg;
  acc.boundary += b.boundary;
  acc.consistency += b.consistency;
}

// Forward, per-labeled-item loss (mean), backward, optimizer step.
losses::LossBreakdown dual_head_update(nn::VNet& model, Sgd& opt, const nn::Tensor& x,
                                       std::vector<data::Sample>& labeled,
                                       const TrainConfig& cfg) {
  if (!model.config().dual_head)
    throw ConfigError("boundaryseg training requires a dual-head model");
  nn::VNetOutput out = model.forward(x, true);
  nn::Tensor seg_prob = out.seg_logits;
  nn::sigmoid_inplace(seg_prob);
  nn::Tensor bnd_prob = out.bnd_logits;
  nn::sigmoid_inplace(bnd_prob);

  const int64_t nl = int64_t(labeled.size());
  const int64_t sp = seg_prob.spatial();
  const double item_scale = 1.0 / double(nl);
  nn::Tensor g_segp(seg_prob.n, 1, seg_prob.h, seg_prob.w, seg_prob.d);
  nn::Tensor g_bndp(bnd_prob.n, 1, bnd_prob.h, bnd_prob.w, bnd_prob.d);

  losses::LossBreakdown total{};
  for (int64_t b = 0; b < nl; ++b) {
    std::vector<float> lbl = mask_to_float(labeled[size_t(b)].label->voxels);
    std::vector<float> band = mask_to_float(labeled[size_t(b)].boundary(cfg.r).voxels);
    losses::LossBreakdown item = losses::total_loss_grad_flat(
        seg_prob.chan(b, 0), bnd_prob.chan(b, 0), lbl.data(), band.data(), sp, cfg.weights,
        item_scale, g_segp.chan(b, 0), g_bndp.chan(b, 0));
    add_breakdown(total, scale_breakdown(item, item_scale));
  }

  nn::Tensor g_seg, g_bnd;
  nn::sigmoid_backward_into(seg_prob, g_segp, g_seg);
  nn::sigmoid_backward_into(bnd_prob, g_bndp, g_bnd);
  model.zero_grad();
  model.backward(g_seg, g_bnd);
  opt.step();
  return total;
}

losses::LossBreakdown single_head_update(nn::VNet& model, Sgd& opt, const nn::Tensor& x,
                                         std::vector<data::Sample>& labeled,
                                         const TrainConfig& cfg) {
  nn::VNetOutput out = model.forward(x, true);
  nn::Tensor seg_prob = out.seg_logits;
  nn::sigmoid_inplace(seg_prob);

  const int64_t nl = int64_t(labeled.size());
  const int64_t sp = seg_prob.spatial();
  const double item_scale = 1.0 / double(nl);
  nn::Tensor g_segp(seg_prob.n, 1, seg_prob.h, seg_prob.w, seg_prob.d);

  losses::LossBreakdown total{};
  for (int64_t b = 0; b < nl; ++b) {
    std::vector<float> lbl = mask_to_float(labeled[size_t(b)].label->voxels);
    double seg = losses::dice_loss_flat(seg_prob.chan(b, 0), lbl.data(), sp,
                                        cfg.weights.dice_epsilon);
    losses::dice_loss_grad_flat(seg_prob.chan(b, 0), lbl.data(), sp, cfg.weights.dice_epsilon,
                                item_scale, g_segp.chan(b, 0));
    total.seg += seg * item_scale;
  }
  total.total = total.seg;

  nn::Tensor g_seg;
  nn::sigmoid_backward_into(seg_prob, g_segp, g_seg);
  model.zero_grad();
  model.backward(g_seg, nn::Tensor());
  opt.step();
  return total;
}

}  // namespace

losses::LossBreakdown train_step_supervised(nn::VNet& model, Sgd& opt,
                                            std::vector<data::Sample>& batch,
                                            const TrainConfig& cfg) {
  require_labels(batch);
  check_batch_shapes(batch);
  std::vector<const data::Sample*> ptrs;
  for (auto& s : batch) ptrs.push_back(&s);
  nn::Tensor x = stack_images(ptrs);
  if (cfg.method == Method::lower_bound) return single_head_update(model, opt, x, batch, cfg);
  return dual_head_update(model, opt, x, batch, cfg);
}

losses::LossBreakdown train_step_fp(nn::VNet& model, Sgd& opt,
                                    std::vector<data::Sample>& labeled_batch,
                                    std::vector<data::Sample>& unlabeled_batch,
                                    const TrainConfig& cfg) {
  if (cfg.mode != TrainMode::fp_semisup)
    throw ConfigError("train_step_fp requires mode fp_semisup");
  if (model.config().norm != nn::NormKind::batch)
    throw ConfigError("fp_semisup requires batch normalization");
  if (unlabeled_batch.empty()) throw ConfigError("fp_semisup step needs unlabeled items");
  require_labels(labeled_batch);

  std::vector<const data::Sample*> ptrs;
  for (auto& s : labeled_batch) ptrs.push_back(&s);
  for (auto& s : unlabeled_batch) ptrs.push_back(&s);
  const auto& ref = labeled_batch.front().image.voxels;
  for (auto* p : ptrs)
    if (p->image.voxels.h != ref.h || p->image.voxels.w != ref.w || p->image.voxels.d != ref.d)
      throw ShapeMismatchError("batch item " + p->id + ": shape " +
                               p->image.voxels.shape_str() + " does not match " +
                               ref.shape_str());
  nn::Tensor x = stack_images(ptrs);
  return dual_head_update(model, opt, x, labeled_batch, cfg);
}

losses::LossBreakdown train_step_peri(nn::VNet& model, Sgd& opt,
                                      std::vector<data::Sample>& batch,
                                      const TrainConfig& cfg) {
  if (cfg.method != Method::peri_loss) throw ConfigError("train_step_peri requires peri_loss");
  require_labels(batch);
  check_batch_shapes(batch);
  std::vector<const data::Sample*> ptrs;
  for (auto& s : batch) ptrs.push_back(&s);
  nn::Tensor x = stack_images(ptrs);

  nn::VNetOutput out = model.forward(x, true);
  nn::Tensor seg_prob = out.seg_logits;
  nn::sigmoid_inplace(seg_prob);

  const int64_t nl = int64_t(batch.size());
  const int64_t sp = seg_prob.spatial();
  const double item_scale = 1.0 / double(nl);
  nn::Tensor g_segp(seg_prob.n, 1, seg_prob.h, seg_prob.w, seg_prob.d);
  const auto& ref = batch.front().image.voxels;

  losses::LossBreakdown total{};
  for (int64_t b = 0; b < nl; ++b) {
    auto& item = batch[size_t(b)];
    std::vector<float> lbl = mask_to_float(item.label->voxels);
    std::vector<float> band = mask_to_float(item.boundary(cfg.r).voxels);

    GridF p(ref.h, ref.w, ref.d);
    std::copy(seg_prob.chan(b, 0), seg_prob.chan(b, 0) + sp, p.data.begin());
    GridF eroded;
    std::vector<int64_t> argmin;
    morph::soft_erode_argmin(p, cfg.r, eroded, argmin);
    std::vector<float> sb(size_t(sp), 0.0f);
    for (int64_t i = 0; i < sp; ++i)
      sb[size_t(i)] = std::clamp(p.data[size_t(i)] - eroded.data[size_t(i)], 0.0f, 1.0f);

    double seg = losses::dice_loss_flat(seg_prob.chan(b, 0), lbl.data(), sp,
                                        cfg.weights.dice_epsilon);
    double bnd = losses::dice_loss_flat(sb.data(), band.data(), sp, cfg.weights.dice_epsilon);
    total.seg += seg * item_scale;
    total.boundary += bnd * item_scale;

    losses::dice_loss_grad_flat(seg_prob.chan(b, 0), lbl.data(), sp, cfg.weights.dice_epsilon,
                                item_scale, g_segp.chan(b, 0));
    // dice gradient in the soft band, routed through p - min_window(p):
    // +1 into the center, -1 into the voxel the erosion picked
    std::vector<float> g_sb(size_t(sp), 0.0f);
    losses::dice_loss_grad_flat(sb.data(), band.data(), sp, cfg.weights.dice_epsilon,
                                item_scale * cfg.weights.lambda_boundary, g_sb.data());
    float* gp = g_segp.chan(b, 0);
    for (int64_t i = 0; i < sp; ++i) {
      gp[i] += g_sb[size_t(i)];
      int64_t am = argmin[size_t(i)];
      if (am >= 0) gp[am] -= g_sb[size_t(i)];
    }
  }
  total.total = total.seg + cfg.weights.lambda_boundary * total.boundary;

  nn::Tensor g_seg;
  nn::sigmoid_backward_into(seg_prob, g_segp, g_seg);
  model.zero_grad();
  model.backward(g_seg, nn::Tensor());
  opt.step();
  return total;
}

namespace {

metrics::SegMetrics metrics_with_sentinel(const BinaryMask& pred, const BinaryMask& gt,
                                          const Spacing& spacing, double hd_percentile) {
  try {
    return metrics::evaluate_pair(pred, gt, spacing, hd_percentile);
  } catch (const EmptyMaskError&) {
    metrics::SegMetrics m;
    m.dice = metrics::dice_coefficient(pred, gt);
    m.jaccard = metrics::jaccard_index(pred, gt);
    m.hausdorff_percentile = hd_percentile;
    bool both_empty = pred.empty_mask() && gt.empty_mask();
    double sentinel = both_empty ? 0.0
                                 : metrics::volume_diagonal_mm(gt.voxels.h, gt.voxels.w,
                                                               gt.voxels.d, spacing);
    m.hausdorff_mm = sentinel;
    m.asd_mm = sentinel;
    return m;
  }
}

}  // namespace

EvalResult evaluate_model(nn::VNet& model, const std::vector<data::Sample>& test,
                          const EvalConfig& cfg) {
  if (test.empty()) throw ConfigError("evaluation needs at least one sample");
  data::PatchPredictor predict = [&](const GridF& patch) {
    nn::Tensor x(1, 1, patch.h, patch.w, patch.d);
    std::copy(patch.data.begin(), patch.data.end(), x.data.begin());
    nn::VNetOutput out = model.forward(x, false);
    nn::sigmoid_inplace(out.seg_logits);
    data::WindowPrediction p;
    p.seg = GridF(patch.h, patch.w, patch.d);
    std::copy(out.seg_logits.data.begin(), out.seg_logits.data.end(), p.seg.data.begin());
    p.bnd = GridF(patch.h, patch.w, patch.d);
    if (out.bnd_logits.numel() > 0) {
      nn::sigmoid_inplace(out.bnd_logits);
      std::copy(out.bnd_logits.data.begin(), out.bnd_logits.data.end(), p.bnd.data.begin());
    }
    return p;
  };

  EvalResult result;
  double sums[4] = {0.0, 0.0, 0.0, 0.0};
  for (const auto& s : test) {
    if (!s.label) throw MissingLabelError("test sample " + s.id + " has no label");
    auto [seg_map, bnd_map] =
        data::sliding_window_infer(predict, s.image, cfg.patch_size, cfg.strides);
    BinaryMask pred = mask_from_probability(seg_map, cfg.threshold);
    metrics::SegMetrics m =
        metrics_with_sentinel(pred, *s.label, s.image.spacing, cfg.hd_percentile);
    result.ids.push_back(s.id);
    result.per_sample.push_back(m);
    sums[0] += m.dice;
    sums[1] += m.jaccard;
    sums[2] += m.hausdorff_mm;
    sums[3] += m.asd_mm;
  }
  const double n = double(test.size());
  result.mean.dice = sums[0] / n;
  result.mean.jaccard = sums[1] / n;
  result.mean.hausdorff_mm = sums[2] / n;
  result.mean.asd_mm = sums[3] / n;
  result.mean.hausdorff_percentile = cfg.hd_percentile;
  return result;
}

EvalResult evaluate_checkpoint(const std::string& path, const std::vector<data::Sample>& test,
                               const EvalConfig& cfg) {
  auto model = nn::load_checkpoint(path);
  return evaluate_model(*model, test, cfg);
}

TrainInputs load_inputs(const data::DatasetManifest& manifest) {
  TrainInputs in;
  for (const auto& id : manifest.labeled_ids) {
    data::Sample s = data::load_sample(manifest.resolve(id));
    if (!s.label) throw MissingLabelError("labeled sample " + id + " has no label");
    in.labeled.push_back(std::move(s));
  }
  for (const auto& id : manifest.unlabeled_ids)
    in.unlabeled.push_back(data::load_sample(manifest.resolve(id)));
  for (const auto& id : manifest.test_ids) {
    data::Sample s = data::load_sample(manifest.resolve(id));
    if (!s.label) throw MissingLabelError("test sample " + id + " has no label");
    in.test.push_back(std::move(s));
  }
  return in;
}

TrainArtifacts train(const TrainConfig& cfg, TrainInputs& inputs, const std::string& out_dir) {
  cfg.validate();
  TrainConfig c = cfg.normalized();
  if (inputs.labeled.empty()) throw ConfigError("training requires labeled samples");
  for (auto& s : inputs.labeled)
    if (!s.label) throw MissingLabelError("labeled sample " + s.id + " has no label");
  if (c.mode == TrainMode::fp_semisup && inputs.unlabeled.empty())
    throw ConfigError("fp_semisup requires a non-empty unlabeled set");

  fs::create_directories(out_dir);
  Rng root(c.seed);
  Rng model_rng = root.child(0);
  Rng data_rng = root.child(1);
  nn::VNet model(c.model, model_rng);
  model.set_freeze_boundary_head(c.freeze_boundary_head);
  Sgd opt(c.optimizer, model.params());

  // boundary bands are built on the full volumes so that patch crops carry
  // bands free of crop-edge artifacts
  if (c.method != Method::lower_bound)
    for (auto& s : inputs.labeled) s.boundary(c.r);

  std::ofstream log_stream(fs::path(out_dir) / "train_log.jsonl");
  if (!log_stream) throw IoError("cannot create training log under " + out_dir);

  auto draw = [&](std::vector<data::Sample>& pool) {
    data::Sample& s = pool[size_t(data_rng.uniform_int(0, int64_t(pool.size()) - 1))];
    data::Sample p = data::random_patch(s, c.patch_size, data_rng, c.fg_bias);
    return data::augment(p, c.augment, data_rng);
  };

  EvalConfig eval_cfg{c.patch_size, c.infer_strides, c.threshold, c.hd_percentile};
  TrainArtifacts art;
  art.final_checkpoint = (fs::path(out_dir) / "final.ckpt").string();
  art.best_checkpoint = (fs::path(out_dir) / "best.ckpt").string();
  bool best_saved = false;

  for (int64_t it = 1; it <= c.iterations; ++it) {
    losses::LossBreakdown loss;
    if (c.mode == TrainMode::fp_semisup) {
      std::vector<data::Sample> labeled, unlabeled;
      for (int64_t b = 0; b < c.labeled_batch_size; ++b) labeled.push_back(draw(inputs.labeled));
      for (int64_t b = c.labeled_batch_size; b < c.batch_size; ++b)
        unlabeled.push_back(draw(inputs.unlabeled));
      loss = train_step_fp(model, opt, labeled, unlabeled, c);
    } else {
      std::vector<data::Sample> batch;
      for (int64_t b = 0; b < c.batch_size; ++b) batch.push_back(draw(inputs.labeled));
      loss = c.method == Method::peri_loss ? train_step_peri(model, opt, batch, c)
                                           : train_step_supervised(model, opt, batch, c);
    }

    if (it % c.log_every == 0 || it == c.iterations) {
      nlohmann::ordered_json rec{{"iter", it},
                                 {"loss_total", loss.total},
                                 {"loss_seg", loss.seg},
                                 {"loss_bnd", loss.boundary},
                                 {"loss_cons", loss.consistency},
                                 {"lr", opt.learning_rate()}};
      log_stream << rec.dump() << "\n";
      art.log.push_back(std::move(rec));
    }
    if (c.eval_every > 0 && it % c.eval_every == 0 && !inputs.val.empty()) {
      EvalResult ev = evaluate_model(model, inputs.val, eval_cfg);
      if (ev.mean.dice > art.best_val_dice) {
        art.best_val_dice = ev.mean.dice;
        nn::save_checkpoint(art.best_checkpoint, model,
                            {{"iteration", it}, {"val_dice", ev.mean.dice}});
        best_saved = true;
      }
    }
    art.final_loss = loss;
  }

  nlohmann::ordered_json extra{{"iteration", c.iterations},
                               {"final_loss", art.final_loss.total},
                               {"config", c.to_json()}};
  nn::save_checkpoint(art.final_checkpoint, model, extra);
  if (!best_saved)
    fs::copy_file(art.final_checkpoint, art.best_checkpoint,
                  fs::copy_options::overwrite_existing);
  return art;
}

nlohmann::ordered_json RunResult::to_json() const {
  nlohmann::ordered_json runs_json = nlohmann::ordered_json::array();
  for (const auto& r : runs) {
    nlohmann::ordered_json rj{{"seed", r.seed}, {"failed", r.failed}};
    if (r.failed) {
      rj["error"] = r.error;
    } else {
      rj["final_loss"] = r.final_loss.total;
      rj["metrics"] = {{"dice", r.eval.mean.dice},
                       {"jaccard", r.eval.mean.jaccard},
                       {"hausdorff_mm", r.eval.mean.hausdorff_mm},
                       {"asd_mm", r.eval.mean.asd_mm}};
    }
    runs_json.push_back(std::move(rj));
  }
  auto metrics_json = [](const metrics::SegMetrics& m) {
    return nlohmann::ordered_json{{"dice", m.dice},
                                  {"jaccard", m.jaccard},
                                  {"hausdorff_mm", m.hausdorff_mm},
                                  {"asd_mm", m.asd_mm}};
  };
  return {{"config", config.to_json()},
          {"seed_count", runs.size()},
          {"runs", std::move(runs_json)},
          {"mean", metrics_json(mean)},
          {"stddev", metrics_json(stddev)}};
}

RunResult run_seeds(const TrainConfig& cfg, TrainInputs& inputs,
                    const std::vector<uint64_t>& seeds, const std::string& out_dir) {
  if (seeds.empty()) throw ConfigError("run_seeds needs at least one seed");
  if (inputs.test.empty()) throw ConfigError("run_seeds needs test samples");

  RunResult rr;
  rr.config = cfg;
  std::vector<metrics::SegMetrics> ok;
  for (uint64_t seed : seeds) {
    SeedRun run;
    run.seed = seed;
    try {
      TrainConfig c = cfg;
      c.seed = seed;
      std::string dir = (fs::path(out_dir) / ("seed_" + std::to_string(seed))).string();
      TrainArtifacts art = train(c, inputs, dir);
      run.final_loss = art.final_loss;
      run.eval = evaluate_checkpoint(
          art.final_checkpoint, inputs.test,
          EvalConfig{c.patch_size, c.infer_strides, c.threshold, c.hd_percentile});
      ok.push_back(run.eval.mean);
    } catch (const std::exception& e) {
      run.failed = true;
      run.error = e.what();
    }
    rr.runs.push_back(std::move(run));
  }
  if (ok.empty()) throw Error("all seeds failed; first error: " + rr.runs.front().error);

  auto mean_of = [&](auto fieldptr) {
    double s = 0.0;
    for (const auto& m : ok) s += m.*fieldptr;
    return s / double(ok.size());
  };
  auto std_of = [&](auto fieldptr, double mean) {
    double s = 0.0;
    for (const auto& m : ok) {
      double d = m.*fieldptr - mean;
      s += d * d;
    }
    return std::sqrt(s / double(ok.size()));
  };
  rr.mean.dice = mean_of(&metrics::SegMetrics::dice);
  rr.mean.jaccard = mean_of(&metrics::SegMetrics::jaccard);
  rr.mean.hausdorff_mm = mean_of(&metrics::SegMetrics::hausdorff_mm);
  rr.mean.asd_mm = mean_of(&metrics::SegMetrics::asd_mm);
  rr.mean.hausdorff_percentile = cfg.hd_percentile;
  rr.stddev.dice = std_of(&metrics::SegMetrics::dice, rr.mean.dice);
  rr.stddev.jaccard = std_of(&metrics::SegMetrics::jaccard, rr.mean.jaccard);
  rr.stddev.hausdorff_mm = std_of(&metrics::SegMetrics::hausdorff_mm, rr.mean.hausdorff_mm);
  rr.stddev.asd_mm = std_of(&metrics::SegMetrics::asd_mm, rr.mean.asd_mm);
  rr.stddev.hausdorff_percentile = cfg.hd_percentile;
  return rr;
}

}  // namespace bseg::train
