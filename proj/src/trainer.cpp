#include "panoscene/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace pano::trainer {

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

TrainHistory train_model(model::ModelBundle& bundle, const std::vector<Panorama>& train,
                         const TrainOptions& opt) {
  if (train.empty()) throw std::invalid_argument("train_model: empty training set");
  if (opt.iterations < 0 || opt.batch < 1)
    throw std::invalid_argument("train_model: bad iteration or batch count");
  const auto& cfg = bundle.config;
  for (const Panorama& p : train)
    if (p.face_w != cfg.face_w || p.face_h != cfg.face_h)
      throw std::invalid_argument("train_model: panorama size does not match the model");
  const cam::CameraRig rig = cam::make_rig(cfg.face_w, cfg.face_h, cfg.hfov_deg, cfg.vfov_deg);

  std::vector<std::size_t> all(train.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  TrainHistory history;
  history.steps.reserve(static_cast<std::size_t>(opt.iterations));
  for (int step = 0; step < opt.iterations; ++step) {
    Rng rng(mix(opt.seed, static_cast<std::uint64_t>(step)));
    std::vector<std::size_t> picks;
    if (static_cast<std::size_t>(opt.batch) <= train.size()) {
      std::sample(all.begin(), all.end(), std::back_inserter(picks),
                  static_cast<std::size_t>(opt.batch), rng);
    } else {
      for (int k = 0; k < opt.batch; ++k)
        picks.push_back(std::uniform_int_distribution<std::size_t>(0, train.size() - 1)(rng));
    }
    model::Batch batch;
    batch.reserve(picks.size());
    for (std::size_t idx : picks) {
      const ObservationMask om = config_mask(rig, opt.mask_preset, rng);
      batch.push_back({apply_mask(train[idx], om), train[idx]});
    }
    const model::StepStats stats = model::train_step(bundle, batch, opt.loss);
    if (opt.log_every > 0 &&
        (stats.iteration % opt.log_every == 0 || step + 1 == opt.iterations)) {
      std::fprintf(stderr, "iter %6lld  g %.4f  d %.4f  ce %.4f  l1_p %.4f\n",
                   static_cast<long long>(stats.iteration), stats.g_total, stats.d_loss,
                   stats.ce_s, stats.l1_p);
    }
    history.steps.push_back(stats);
  }
  return history;
}

SetEval evaluate_set(const Predictor& fn, const std::vector<Panorama>& test,
                     const cam::CameraRig& rig, const MaskFn& mask_fn, const EvalOptions& opt) {
  if (test.empty()) throw std::invalid_argument("evaluate_set: empty test set");
  SetEval out;
  out.images = static_cast<int>(test.size());
  double acc = 0.0, iou = 0.0, pog = 0.0, surf = 0.0, norm = 0.0;
  int iou_n = 0, pog_n = 0, surf_n = 0, norm_n = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Panorama& gt = test[i];
    Rng rng(mix(opt.seed, i));
    const ObservationMask om = mask_fn(rig, rng);
    const Panorama masked = apply_mask(gt, om);
    const Panorama pred = fn(masked, gt);
    std::vector<std::uint8_t> eval(gt.mask.size(), 1);
    if (opt.unobserved_only)
      for (std::size_t p = 0; p < eval.size(); ++p) eval[p] = om.geom[p] ? 0 : 1;
    const metrics::MetricReport report = metrics::compute_report(pred, gt, eval, rig, opt.report);
    acc += report.accuracy;
    if (report.iou_mean) {
      iou += *report.iou_mean;
      ++iou_n;
    }
    if (report.pog_mean) {
      pog += *report.pog_mean;
      ++pog_n;
    }
    if (report.surface) {
      surf += report.surface->median_m;
      ++surf_n;
    }
    if (report.normal) {
      norm += report.normal->mean_deg;
      ++norm_n;
    }
  }
  out.accuracy = acc / static_cast<double>(test.size());
  out.iou = iou_n ? iou / iou_n : 0.0;
  out.pog = pog_n ? pog / pog_n : 0.0;
  out.surface_median = surf_n ? surf / surf_n : 0.0;
  out.normal_mean = norm_n ? norm / norm_n : 0.0;
  return out;
}

SetEval evaluate_set(const Predictor& fn, const std::vector<Panorama>& test,
                     const cam::CameraRig& rig, const EvalOptions& opt) {
  const std::string preset = opt.mask_preset;
  return evaluate_set(
      fn, test, rig,
      [&preset](const cam::CameraRig& r, Rng& rng) { return config_mask(r, preset, rng); }, opt);
}

Predictor model_predictor(model::ModelBundle& bundle) {
  return [&bundle](const Panorama& masked, const Panorama&) {
    return model::predict(bundle, masked);
  };
}

Predictor avg_predictor(const baseline::AvgModel& avg) {
  return [pano = avg.to_panorama()](const Panorama&, const Panorama&) { return pano; };
}

Predictor avg_type_predictor(const baseline::AvgTypeModel& m) {
  std::vector<Panorama> per_cat;
  per_cat.reserve(sem::kSceneCount);
  for (int c = 0; c < sem::kSceneCount; ++c) per_cat.push_back(m.for_category(c).to_panorama());
  return [per_cat = std::move(per_cat)](const Panorama&, const Panorama& gt) {
    return per_cat.at(static_cast<std::size_t>(gt.scene_category));
  };
}

Predictor nn_predictor(const std::vector<Panorama>& train) {
  return [&train](const Panorama& masked, const Panorama&) {
    return baseline::predict_nn(masked, masked.mask, train);
  };
}

Predictor copy_predictor() {
  return [](const Panorama&, const Panorama& gt) { return gt; };
}

}  // namespace pano::trainer
