#include "bseg/losses.hpp"

#include <vector>

#include "bseg/errors.hpp"

namespace bseg::losses {

ConsVariant cons_variant_from_string(const std::string& s) {
  if (s == "mse") return ConsVariant::mse;
  if (s == "dice") return ConsVariant::dice;
  throw ConfigError("unknown consistency variant '" + s + "' (expected 'mse' or 'dice')");
}

std::string to_string(ConsVariant v) { return v == ConsVariant::mse ? "mse" : "dice"; }

void LossWeights::validate() const {
  if (lambda_boundary < 0.0) throw ConfigError("lambda_boundary must be >= 0");
  if (lambda_cons < 0.0) throw ConfigError("lambda_cons must be >= 0");
  if (!(dice_epsilon > 0.0)) throw ConfigError("dice_epsilon must be > 0");
}

namespace {

std::vector<float> mask_to_float(const BinaryMask& m) {
  std::vector<float> out(m.voxels.data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = float(m.voxels.data[i]);
  return out;
}

void check_same_shape(const GridF& a, const GridF& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeMismatchError(std::string(what) + ": shape " + b.shape_str() +
                             " does not match " + a.shape_str());
}

}  // namespace

double dice_loss(const ProbabilityMap& pred, const GridF& target, double eps) {
  check_same_shape(pred.voxels, target, "dice target");
  return dice_loss_flat(pred.voxels.data.data(), target.data.data(),
                        int64_t(pred.voxels.data.size()), eps);
}

double seg_loss(const ProbabilityMap& seg_pred, const BinaryMask& label, double eps) {
  if (seg_pred.voxels.h != label.voxels.h || seg_pred.voxels.w != label.voxels.w ||
      seg_pred.voxels.d != label.voxels.d)
    throw ShapeMismatchError("label: shape " + label.voxels.shape_str() +
                             " does not match prediction " + seg_pred.voxels.shape_str());
  std::vector<float> t = mask_to_float(label);
  return dice_loss_flat(seg_pred.voxels.data.data(), t.data(), int64_t(t.size()), eps);
}

double boundary_loss(const ProbabilityMap& bnd_pred, const BinaryMask& label, int r, double eps) {
  BinaryMask bl = morph::boundary_label(label, r);
  return seg_loss(bnd_pred, bl, eps);
}

double consistency_loss(const ProbabilityMap& bnd_pred, const ProbabilityMap& seg_pred,
                        const BinaryMask& boundary_lbl, ConsVariant variant, double eps) {
  check_same_shape(bnd_pred.voxels, seg_pred.voxels, "consistency seg prediction");
  if (bnd_pred.voxels.h != boundary_lbl.voxels.h || bnd_pred.voxels.w != boundary_lbl.voxels.w ||
      bnd_pred.voxels.d != boundary_lbl.voxels.d)
    throw ShapeMismatchError("boundary label: shape " + boundary_lbl.voxels.shape_str() +
                             " does not match prediction " + bnd_pred.voxels.shape_str());
  std::vector<float> b = mask_to_float(boundary_lbl);
  return consistency_loss_flat(bnd_pred.voxels.data.data(), seg_pred.voxels.data.data(),
                               b.data(), int64_t(b.size()), variant, eps);
}

LossBreakdown total_loss(const ProbabilityMap& seg_pred, const ProbabilityMap& bnd_pred,
                         const BinaryMask& label, const LossWeights& weights, int r) {
  weights.validate();
  check_same_shape(seg_pred.voxels, bnd_pred.voxels, "boundary prediction");
  if (seg_pred.voxels.h != label.voxels.h || seg_pred.voxels.w != label.voxels.w ||
      seg_pred.voxels.d != label.voxels.d)
    throw ShapeMismatchError("label: shape " + label.voxels.shape_str() +
                             " does not match prediction " + seg_pred.voxels.shape_str());
  BinaryMask bl = morph::boundary_label(label, r);
  std::vector<float> lab = mask_to_float(label);
  std::vector<float> blf = mask_to_float(bl);
  return total_loss_flat(seg_pred.voxels.data.data(), bnd_pred.voxels.data.data(), lab.data(),
                         blf.data(), int64_t(lab.size()), weights);
}

}  // namespace bseg::losses
