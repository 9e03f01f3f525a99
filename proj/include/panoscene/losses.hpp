#pragma once

#include <cstdint>
#include <vector>

#include "panoscene/autograd.hpp"
#include "panoscene/tensor.hpp"

namespace pano::loss {

struct LossConfig {
  float lambda_pixel = 0.4f;
  float lambda_adv = 0.01f;
  float lambda_pn = 0.001f;
  std::int64_t pn_gate_iteration = 1000;  // pn term active strictly after this iteration
  float lambda_dist = 0.01f;
  float gamma = 0.8f;  // probability floor for the discriminator's real semantics
  float scene_weight = 0.01f;
  float ce_eps = 1e-8f;
  bool mask_only = false;  // supervise observed pixels only instead of the full frame

  void validate() const;  // throws std::invalid_argument
};

// Masked pixel losses. mask has one channel ((1,H,W) or (N,1,H,W)) and is
// replicated across the prediction's channels; reductions are means over the
// selected elements. An all-zero mask yields a constant 0 with zero gradient.
ag::Var l1_masked(const ag::Var& pred, const Tensor& gt, const Tensor& mask);

// mean over masked pixels of (1 - pred_n·gt_n); both fields unit length.
ag::Var cosine_loss(const ag::Var& pred_n, const Tensor& gt_n, const Tensor& mask);

// pred_s holds per-pixel probability distributions (already softmaxed).
// gt_labels is (1,H,W) or (N,1,H,W) with integer class ids stored as floats.
ag::Var softmax_ce(const ag::Var& pred_s, const Tensor& gt_labels, const Tensor& mask,
                   float eps = 1e-8f);

// Masked mean L1 over (x,y,z); same reduction as l1_masked. The mask must
// already exclude pixels the PN layer marked invalid.
ag::Var pn_consistency(const ag::Var& pred_points, const Tensor& gt_points, const Tensor& mask);

// Real-branch semantics for the discriminator: y_il = max(gamma, s_il) at the
// true class l, remaining mass rescaled so each pixel still sums to 1.
// gt_labels as in softmax_ce; pred_s is the (detached) predicted distribution.
Tensor smooth_real_semantics(const Tensor& gt_labels, const Tensor& pred_s, float gamma);

// Least-squares GAN on patch logit maps: targets 1 for real, 0 for fake.
// d = (mse(real,1) + mse(fake,0)) / 2, g = mse(fake,1).
ag::Var adv_loss_g(const ag::Var& fake_logits);
ag::Var adv_loss_d(const ag::Var& real_logits, const ag::Var& fake_logits);

// Cross entropy over 8-way scene logits ((N,8,1,1) or (8,1,1)).
ag::Var scene_loss(const ag::Var& scene_logits, const std::vector<int>& gt_category,
                   float eps = 1e-8f);

// Sum of |pred - gt| over the class distribution vector, averaged over the batch.
ag::Var distribution_loss(const ag::Var& pred_dist, const Tensor& gt_dist);

// Scalar schedule combination (Appendix-style per-channel totals). Inputs are
// already-reduced loss values; arithmetic runs in double with the f32 weights
// promoted, pn/dist terms added last.
struct CombinedInput {
  double l1_p = 0.0;
  double cos_n = 0.0;
  double ce_s = 0.0;
  double pn = 0.0;
  double dist = 0.0;
  double adv = 0.0;
  double scene = 0.0;
};
struct CombinedTotals {
  double plane = 0.0;
  double normal = 0.0;
  double semantic = 0.0;
  double scene = 0.0;
};
CombinedTotals combined_losses(const CombinedInput& in, std::int64_t iteration,
                               const LossConfig& cfg);

// Weight actually applied to the pn term at this iteration (0 before the gate).
double pn_weight_at(std::int64_t iteration, const LossConfig& cfg);

}  // namespace pano::loss
