#include "panoscene/losses.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pano::loss {

namespace {

struct Dims {
  int n, c, h, w;
};

Dims dims_of(const Tensor& t, const char* where) {
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2)};
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
  std::ostringstream os;
  os << where << ": expected (C,H,W) or (N,C,H,W), got " << t.shape_str();
  throw std::invalid_argument(os.str());
}

void require_mask(const Dims& p, const Tensor& mask, const char* where) {
  const Dims m = dims_of(mask, where);
  if (m.c != 1 || m.n != p.n || m.h != p.h || m.w != p.w) {
    std::ostringstream os;
    os << where << ": mask " << mask.shape_str() << " does not match prediction batch/size";
    throw std::invalid_argument(os.str());
  }
}

// Replicate a 1-channel mask across the prediction's channels, tracking the
// selected pixel count. The result takes the prediction's exact shape.
Tensor replicate_mask(const Tensor& mask, const Dims& p, const std::vector<int>& target_shape,
                      double* count) {
  Tensor out = Tensor::zeros(target_shape);
  const std::int64_t hw = static_cast<std::int64_t>(p.h) * p.w;
  double cnt = 0.0;
  for (int n = 0; n < p.n; ++n)
    for (std::int64_t i = 0; i < hw; ++i) {
      const float m = mask.data[static_cast<size_t>(n * hw + i)];
      cnt += m;
      for (int c = 0; c < p.c; ++c)
        out.data[static_cast<size_t>((static_cast<std::int64_t>(n) * p.c + c) * hw + i)] = m;
    }
  *count = cnt;
  return out;
}

int label_at(const Tensor& labels, std::int64_t i, int classes, const char* where) {
  const float raw = labels.data[static_cast<size_t>(i)];
  const int l = static_cast<int>(std::lround(raw));
  if (l < 0 || l >= classes) {
    std::ostringstream os;
    os << where << ": label " << raw << " outside [0," << classes << ")";
    throw std::invalid_argument(os.str());
  }
  return l;
}

ag::Var zero_scalar() { return ag::constant(Tensor::scalar(0.0f)); }

}  // namespace

void LossConfig::validate() const {
  if (lambda_pixel < 0 || lambda_adv < 0 || lambda_pn < 0 || lambda_dist < 0 || scene_weight < 0)
    throw std::invalid_argument("LossConfig: negative loss weight");
  if (pn_gate_iteration < 0) throw std::invalid_argument("LossConfig: negative gate iteration");
  if (!(gamma > 0.0f && gamma < 1.0f))
    throw std::invalid_argument("LossConfig: gamma must lie in (0,1)");
  if (!(ce_eps > 0.0f)) throw std::invalid_argument("LossConfig: ce_eps must be positive");
}

ag::Var l1_masked(const ag::Var& pred, const Tensor& gt, const Tensor& mask) {
  require_same_shape(pred->value, gt, "l1_masked");
  const Dims p = dims_of(pred->value, "l1_masked");
  require_mask(p, mask, "l1_masked");
  double count = 0.0;
  Tensor mc = replicate_mask(mask, p, pred->value.shape, &count);
  if (count == 0.0) return zero_scalar();
  const float scale = static_cast<float>(1.0 / (count * p.c));
  ag::Var diff = ag::abs_val(ag::sub(pred, ag::constant(gt)));
  return ag::mul_scalar(ag::sum_all(ag::mul(diff, ag::constant(std::move(mc)))), scale);
}

ag::Var cosine_loss(const ag::Var& pred_n, const Tensor& gt_n, const Tensor& mask) {
  require_same_shape(pred_n->value, gt_n, "cosine_loss");
  const Dims p = dims_of(pred_n->value, "cosine_loss");
  if (p.c != 3) throw std::invalid_argument("cosine_loss: normals must have 3 channels");
  require_mask(p, mask, "cosine_loss");
  double count = 0.0;
  Tensor mc = replicate_mask(mask, p, pred_n->value.shape, &count);
  if (count == 0.0) return zero_scalar();
  // mean(1 - pred·gt) = 1 - sum(pred⊙gt⊙mask)/count
  ag::Var dot = ag::sum_all(ag::mul(ag::mul(pred_n, ag::constant(gt_n)),
                                    ag::constant(std::move(mc))));
  return ag::add_scalar(ag::mul_scalar(dot, static_cast<float>(-1.0 / count)), 1.0f);
}

ag::Var softmax_ce(const ag::Var& pred_s, const Tensor& gt_labels, const Tensor& mask, float eps) {
  const Dims p = dims_of(pred_s->value, "softmax_ce");
  require_mask(p, gt_labels, "softmax_ce");
  require_mask(p, mask, "softmax_ce");
  const std::int64_t hw = static_cast<std::int64_t>(p.h) * p.w;
  Tensor sel = Tensor::zeros(pred_s->value.shape);
  double count = 0.0;
  for (int n = 0; n < p.n; ++n)
    for (std::int64_t i = 0; i < hw; ++i) {
      if (mask.data[static_cast<size_t>(n * hw + i)] == 0.0f) continue;
      const int l = label_at(gt_labels, n * hw + i, p.c, "softmax_ce");
      sel.data[static_cast<size_t>((static_cast<std::int64_t>(n) * p.c + l) * hw + i)] = 1.0f;
      count += 1.0;
    }
  if (count == 0.0) return zero_scalar();
  ag::Var picked = ag::mul(ag::log_clamped(pred_s, eps), ag::constant(std::move(sel)));
  return ag::mul_scalar(ag::sum_all(picked), static_cast<float>(-1.0 / count));
}

ag::Var pn_consistency(const ag::Var& pred_points, const Tensor& gt_points, const Tensor& mask) {
  return l1_masked(pred_points, gt_points, mask);
}

Tensor smooth_real_semantics(const Tensor& gt_labels, const Tensor& pred_s, float gamma) {
  if (!(gamma > 0.0f && gamma < 1.0f))
    throw std::invalid_argument("smooth_real_semantics: gamma must lie in (0,1)");
  const Dims p = dims_of(pred_s, "smooth_real_semantics");
  require_mask(p, gt_labels, "smooth_real_semantics");
  const std::int64_t hw = static_cast<std::int64_t>(p.h) * p.w;
  Tensor out = Tensor::zeros(pred_s.shape);
  for (int n = 0; n < p.n; ++n)
    for (std::int64_t i = 0; i < hw; ++i) {
      const int l = label_at(gt_labels, n * hw + i, p.c, "smooth_real_semantics");
      const auto at = [&](int c) {
        return static_cast<size_t>((static_cast<std::int64_t>(n) * p.c + c) * hw + i);
      };
      const double sl = pred_s.data[at(l)];
      if (sl >= 1.0 - 1e-12) {  // limit case: already (numerically) one-hot at l
        out.data[at(l)] = 1.0f;
        continue;
      }
      const double yl = std::max(static_cast<double>(gamma), sl);
      const double scale = (1.0 - yl) / (1.0 - sl);
      for (int c = 0; c < p.c; ++c)
        out.data[at(c)] = (c == l) ? static_cast<float>(yl)
                                   : static_cast<float>(pred_s.data[at(c)] * scale);
    }
  return out;
}

namespace {
ag::Var mse_to(const ag::Var& logits, float target) {
  ag::Var d = ag::add_scalar(logits, -target);
  return ag::mean_all(ag::mul(d, d));
}
}  // namespace

ag::Var adv_loss_g(const ag::Var& fake_logits) { return mse_to(fake_logits, 1.0f); }

ag::Var adv_loss_d(const ag::Var& real_logits, const ag::Var& fake_logits) {
  return ag::mul_scalar(ag::add(mse_to(real_logits, 1.0f), mse_to(fake_logits, 0.0f)), 0.5f);
}

ag::Var scene_loss(const ag::Var& scene_logits, const std::vector<int>& gt_category, float eps) {
  const Dims p = dims_of(scene_logits->value, "scene_loss");
  if (p.h != 1 || p.w != 1)
    throw std::invalid_argument("scene_loss: logits must be (N,C,1,1) shaped");
  if (static_cast<int>(gt_category.size()) != p.n)
    throw std::invalid_argument("scene_loss: category count does not match batch");
  Tensor sel = Tensor::zeros(scene_logits->value.shape);
  for (int n = 0; n < p.n; ++n) {
    const int l = gt_category[static_cast<size_t>(n)];
    if (l < 0 || l >= p.c) throw std::invalid_argument("scene_loss: category out of range");
    sel.data[static_cast<size_t>(n) * p.c + l] = 1.0f;
  }
  ag::Var probs = ag::softmax_channels(scene_logits);
  ag::Var picked = ag::mul(ag::log_clamped(probs, eps), ag::constant(std::move(sel)));
  return ag::mul_scalar(ag::sum_all(picked), -1.0f / static_cast<float>(p.n));
}

ag::Var distribution_loss(const ag::Var& pred_dist, const Tensor& gt_dist) {
  require_same_shape(pred_dist->value, gt_dist, "distribution_loss");
  const Dims p = dims_of(pred_dist->value, "distribution_loss");
  ag::Var l1 = ag::sum_all(ag::abs_val(ag::sub(pred_dist, ag::constant(gt_dist))));
  return ag::mul_scalar(l1, 1.0f / static_cast<float>(p.n));
}

double pn_weight_at(std::int64_t iteration, const LossConfig& cfg) {
  return iteration > cfg.pn_gate_iteration ? static_cast<double>(cfg.lambda_pn) : 0.0;
}

CombinedTotals combined_losses(const CombinedInput& in, std::int64_t iteration,
                               const LossConfig& cfg) {
  const double l1 = cfg.lambda_pixel, l2 = cfg.lambda_adv, ld = cfg.lambda_dist;
  const double w3 = pn_weight_at(iteration, cfg);
  CombinedTotals out;
  out.plane = l1 * in.l1_p + l2 * in.adv;
  out.plane += w3 * in.pn;
  out.normal = l1 * in.cos_n + l2 * in.adv;
  out.normal += w3 * in.pn;
  out.semantic = l1 * in.ce_s + l2 * in.adv;
  out.semantic += ld * in.dist;
  out.scene = static_cast<double>(cfg.scene_weight) * in.scene;
  return out;
}

}  // namespace pano::loss
