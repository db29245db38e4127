#pragma once

#include <cstdint>
#include <string>

#include "bseg/morphology.hpp"
#include "bseg/volume.hpp"

namespace bseg::losses {

enum class ConsVariant { mse, dice };

ConsVariant cons_variant_from_string(const std::string& s);
std::string to_string(ConsVariant v);

/// Weights of the combined objective: total = seg + lambda_boundary * boundary
/// + lambda_cons * consistency.
struct LossWeights {
  double lambda_boundary = 30.0;
  double lambda_cons = 0.3;
  ConsVariant cons_variant = ConsVariant::mse;
  double dice_epsilon = 1e-5;
  /// Ablation toggle: suppress the consistency gradient into the seg head.
  bool cons_stop_grad_seg = false;

  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double seg = 0.0;
  double boundary = 0.0;
  double consistency = 0.0;
};

// ---------------------------------------------------------------------------
// Flat-array kernels. All sums accumulate in double regardless of T.
// Gradient functions ACCUMULATE scale * dL/dx into the grad arrays.
// ---------------------------------------------------------------------------

/// Smoothed soft Dice loss: 1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps).
template <typename T>
double dice_loss_flat(const T* pred, const T* target, int64_t n, double eps) {
  double sp = 0.0, st = 0.0, spt = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    sp += double(pred[i]);
    st += double(target[i]);
    spt += double(pred[i]) * double(target[i]);
  }
  return 1.0 - (2.0 * spt + eps) / (sp + st + eps);
}

/// Gradient of dice_loss_flat in pred (and optionally in target, for targets
/// that are themselves differentiable functions).
template <typename T>
void dice_loss_grad_flat(const T* pred, const T* target, int64_t n, double eps, double scale,
                         T* grad_pred, T* grad_target = nullptr) {
  double sp = 0.0, st = 0.0, spt = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    sp += double(pred[i]);
    st += double(target[i]);
    spt += double(pred[i]) * double(target[i]);
  }
  const double num = 2.0 * spt + eps;
  const double den = sp + st + eps;
  const double inv_den2 = 1.0 / (den * den);
  for (int64_t i = 0; i < n; ++i) {
    if (grad_pred)
      grad_pred[i] += T(scale * -(2.0 * double(target[i]) * den - num) * inv_den2);
    if (grad_target)
      grad_target[i] += T(scale * -(2.0 * double(pred[i]) * den - num) * inv_den2);
  }
}

/// Mean squared error.
template <typename T>
double mse_loss_flat(const T* pred, const T* target, int64_t n) {
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double e = double(pred[i]) - double(target[i]);
    s += e * e;
  }
  return s / double(n);
}

/// Consistency loss of the boundary head against boundary_lbl ⊙ seg_pred.
template <typename T>
double consistency_loss_flat(const T* bnd_pred, const T* seg_pred, const T* boundary_lbl,
                             int64_t n, ConsVariant variant, double eps) {
  if (variant == ConsVariant::mse) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      double t = double(boundary_lbl[i]) * double(seg_pred[i]);
      double e = double(bnd_pred[i]) - t;
      s += e * e;
    }
    return s / double(n);
  }
  double sp = 0.0, st = 0.0, spt = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double t = double(boundary_lbl[i]) * double(seg_pred[i]);
    sp += double(bnd_pred[i]);
    st += t;
    spt += double(bnd_pred[i]) * t;
  }
  return 1.0 - (2.0 * spt + eps) / (sp + st + eps);
}

/// Gradient of the consistency loss into both heads (the product target
/// back-propagates into seg_pred unless stop_grad_seg).
template <typename T>
void consistency_loss_grad_flat(const T* bnd_pred, const T* seg_pred, const T* boundary_lbl,
                                int64_t n, ConsVariant variant, double eps, double scale,
                                T* grad_bnd, T* grad_seg, bool stop_grad_seg = false) {
  if (variant == ConsVariant::mse) {
    const double inv_n = 1.0 / double(n);
    for (int64_t i = 0; i < n; ++i) {
      double b = double(boundary_lbl[i]);
      double e = double(bnd_pred[i]) - b * double(seg_pred[i]);
      if (grad_bnd) grad_bnd[i] += T(scale * 2.0 * e * inv_n);
      if (grad_seg && !stop_grad_seg) grad_seg[i] += T(scale * -2.0 * e * b * inv_n);
    }
    return;
  }
  double sp = 0.0, st = 0.0, spt = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double t = double(boundary_lbl[i]) * double(seg_pred[i]);
    sp += double(bnd_pred[i]);
    st += t;
    spt += double(bnd_pred[i]) * t;
  }
  const double num = 2.0 * spt + eps;
  const double den = sp + st + eps;
  const double inv_den2 = 1.0 / (den * den);
  for (int64_t i = 0; i < n; ++i) {
    double t = double(boundary_lbl[i]) * double(seg_pred[i]);
    if (grad_bnd) grad_bnd[i] += T(scale * -(2.0 * t * den - num) * inv_den2);
    if (grad_seg && !stop_grad_seg) {
      double dt = -(2.0 * double(bnd_pred[i]) * den - num) * inv_den2;
      grad_seg[i] += T(scale * dt * double(boundary_lbl[i]));
    }
  }
}

/// Combined objective over flat arrays; boundary_lbl is the precomputed
/// boundary target (same shape).
template <typename T>
LossBreakdown total_loss_flat(const T* seg_pred, const T* bnd_pred, const T* label,
                              const T* boundary_lbl, int64_t n, const LossWeights& w) {
  LossBreakdown out;
  out.seg = dice_loss_flat(seg_pred, label, n, w.dice_epsilon);
  out.boundary = dice_loss_flat(bnd_pred, boundary_lbl, n, w.dice_epsilon);
  out.consistency =
      consistency_loss_flat(bnd_pred, seg_pred, boundary_lbl, n, w.cons_variant, w.dice_epsilon);
  out.total = out.seg + w.lambda_boundary * out.boundary + w.lambda_cons * out.consistency;
  return out;
}

template <typename T>
LossBreakdown total_loss_grad_flat(const T* seg_pred, const T* bnd_pred, const T* label,
                                   const T* boundary_lbl, int64_t n, const LossWeights& w,
                                   double scale, T* grad_seg, T* grad_bnd) {
  LossBreakdown out = total_loss_flat(seg_pred, bnd_pred, label, boundary_lbl, n, w);
  dice_loss_grad_flat(seg_pred, label, n, w.dice_epsilon, scale, grad_seg);
  if (w.lambda_boundary != 0.0)
    dice_loss_grad_flat(bnd_pred, boundary_lbl, n, w.dice_epsilon, scale * w.lambda_boundary,
                        grad_bnd);
  if (w.lambda_cons != 0.0)
    consistency_loss_grad_flat(bnd_pred, seg_pred, boundary_lbl, n, w.cons_variant,
                               w.dice_epsilon, scale * w.lambda_cons, grad_bnd, grad_seg,
                               w.cons_stop_grad_seg);
  return out;
}

/// Per-foreground-class mean of the Dice loss over a channels-first
/// (K, nvox) layout. For K == 1 the single channel is the foreground; for
/// K > 1 channel 0 is background and is skipped.
template <typename T>
double dice_loss_multiclass_flat(const T* pred, const T* target, int64_t k, int64_t nvox,
                                 double eps) {
  const int64_t first = k > 1 ? 1 : 0;
  double s = 0.0;
  for (int64_t c = first; c < k; ++c)
    s += dice_loss_flat(pred + c * nvox, target + c * nvox, nvox, eps);
  return s / double(k - first);
}

// ---------------------------------------------------------------------------
// Volume-level operations (single-class maps).
// ---------------------------------------------------------------------------

double dice_loss(const ProbabilityMap& pred, const GridF& target, double eps);

/// Dice loss of the seg head against the full-organ label.
double seg_loss(const ProbabilityMap& seg_pred, const BinaryMask& label, double eps = 1e-5);

/// Dice loss of the boundary head against boundary_label(label, r).
double boundary_loss(const ProbabilityMap& bnd_pred, const BinaryMask& label, int r,
                     double eps = 1e-5);

double consistency_loss(const ProbabilityMap& bnd_pred, const ProbabilityMap& seg_pred,
                        const BinaryMask& boundary_lbl, ConsVariant variant, double eps = 1e-5);

/// seg + lambda * boundary + lambda_cons * consistency, with the boundary
/// target derived from the label via erosion/XOR with kernel r.
LossBreakdown total_loss(const ProbabilityMap& seg_pred, const ProbabilityMap& bnd_pred,
                         const BinaryMask& label, const LossWeights& weights, int r);

}  // namespace bseg::losses
