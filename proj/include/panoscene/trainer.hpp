#pragma once

#include <functional>
#include <string>
#include <vector>

#include "panoscene/baselines.hpp"
#include "panoscene/losses.hpp"
#include "panoscene/metrics.hpp"
#include "panoscene/model.hpp"

// Training loop and whole-set evaluation shared by the CLI and the tests.
namespace pano::trainer {

struct TrainOptions {
  int iterations = 1000;
  int batch = 3;
  std::uint64_t seed = 0;
  std::string mask_preset = "middle3";
  loss::LossConfig loss;
  int log_every = 0;  // stderr progress lines; 0 = silent
};

struct TrainHistory {
  std::vector<model::StepStats> steps;
};

// Runs train_step over batches sampled per step from `train` with fresh
// observation masks.  Deterministic for a given (bundle state, train order,
// options).  model::DivergenceError propagates to the caller.
TrainHistory train_model(model::ModelBundle& bundle, const std::vector<Panorama>& train,
                         const TrainOptions& opt);

// A predictor sees the masked observation and the ground truth (for oracle
// baselines such as the per-type average, which reads the true category).
using Predictor = std::function<Panorama(const Panorama& masked, const Panorama& gt)>;

// Per-image masks for evaluation; only the `random` preset consumes the rng.
using MaskFn = std::function<ObservationMask(const cam::CameraRig&, Rng&)>;

struct EvalOptions {
  std::string mask_preset = "middle3";
  std::uint64_t seed = 0;
  bool unobserved_only = true;  // evaluate where geometry was masked out
  metrics::ReportOptions report;
  EvalOptions() { report.emd = false; }
};

// Macro averages over the test set.  Per-image metrics that are absent (no
// valid pixels for that statistic) are skipped; `images` counts the set.
struct SetEval {
  double accuracy = 0.0;        // mean per-image semantic accuracy
  double iou = 0.0;             // mean per-image class-mean IoU
  double pog = 0.0;             // mean per-image PoG
  double surface_median = 0.0;  // mean per-image median surface distance (m)
  double normal_mean = 0.0;     // mean per-image mean normal angle (deg)
  int images = 0;
};

SetEval evaluate_set(const Predictor& fn, const std::vector<Panorama>& test,
                     const cam::CameraRig& rig, const MaskFn& mask_fn, const EvalOptions& opt);
SetEval evaluate_set(const Predictor& fn, const std::vector<Panorama>& test,
                     const cam::CameraRig& rig, const EvalOptions& opt);

Predictor model_predictor(model::ModelBundle& bundle);
Predictor avg_predictor(const baseline::AvgModel& avg);
Predictor avg_type_predictor(const baseline::AvgTypeModel& m);
Predictor nn_predictor(const std::vector<Panorama>& train);
Predictor copy_predictor();  // returns the ground truth; the perfect reference

}  // namespace pano::trainer
