#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "panoscene/camera.hpp"
#include "panoscene/geometry.hpp"
#include "panoscene/palette.hpp"
#include "panoscene/panorama.hpp"
#include "panoscene/tensor.hpp"

// Evaluation suite over unobserved pixels: probability of ground truth,
// class existence F1, class size error, EMD between clustered class point
// sets, IoU, pixel accuracy, normal-angle and surface-distance statistics,
// and IoU as a function of distance from the nearest observation.
//
// Every aggregation is order-canonical (sorted sums, integer counts,
// rotation-canonical cluster seeding), so a report computed on inputs that
// were jointly rotated by whole faces is bit-identical.
namespace pano::metrics {

// the reference existence threshold, 400 pixels at 1024x160, as a fraction
// of full-panorama pixels so smaller panoramas use an equivalent criterion
constexpr double kExistFrac = 400.0 / 163840.0;
constexpr int kDefaultClusters = 50;
constexpr float kProbFloor = 0.01f;
// substituted error for pixels where the prediction has no usable geometry
constexpr double kInvalidAngleDeg = 180.0;
constexpr double kInvalidSurfaceM = 10.0;

// Sum with a canonical addend order: bit-identical for any permutation of v.
double stable_sum(std::vector<double> v);
// Euclidean norm / dot with the three terms added in sorted order, so jointly
// permuted (and sign-flipped) coordinates give bit-identical results.
double sorted_norm(double dx, double dy, double dz);
double sorted_dot(double ax, double ay, double az, double bx, double by, double bz);

// per-pixel argmax class ids from a (13,H,W) or (1,13,H,W) map; ties break
// toward the lower class id
std::vector<int> argmax_labels(const Tensor& s);

// Per-class value plus the mean over classes where the value is present.
struct PerClass {
  std::array<std::optional<double>, sem::kClassCount> per_class;
  std::optional<double> mean;
};

// mean predicted probability of the true label per class, over eval pixels;
// classes with no ground-truth pixels in the mask are absent
PerClass pog(const Tensor& pred_s, const std::vector<int>& gt_labels,
             const std::vector<std::uint8_t>& eval_mask);

struct ExistReport {
  std::array<bool, sem::kClassCount> gt{};
  std::array<bool, sem::kClassCount> pred{};
  int tp = 0, fp = 0, fn = 0;
  double f1 = 1.0;          // 2tp / (2tp + fp + fn); 1 when nothing exists
  double threshold_px = 0;  // threshold_frac * full-panorama pixel count
};
ExistReport exist_f1(const Tensor& pred_s, const std::vector<int>& gt_labels,
                     const std::vector<std::uint8_t>& eval_mask,
                     double threshold_frac = kExistFrac);

// |n(G_c) - n(P_c)| / n(G_c) for classes passing the existence threshold on
// both sides; others absent
PerClass class_size(const Tensor& pred_s, const std::vector<int>& gt_labels,
                    const std::vector<std::uint8_t>& eval_mask,
                    double threshold_frac = kExistFrac);

struct WeightedClusters {
  std::vector<geom::Vec3> centers;
  std::vector<double> weights;  // nonnegative, sum to 1
};

// Greedy farthest-point clustering (2-approximation). Centers are input
// points; cluster weight is the sum of member weights, renormalized to 1.
// Input order is canonicalized internally, which makes the result invariant
// under joint exact 90-degree yaw rotations of the point set.
WeightedClusters kcenter(const std::vector<geom::Vec3>& points,
                         const std::vector<double>& weights, int k);

// Exact balanced transportation cost between two weight-1 cluster sets
// (transportation simplex with Bland's rule). Unbalanced inputs rejected.
double emd(const WeightedClusters& a, const WeightedClusters& b);

struct IouAcc {
  std::array<std::optional<double>, sem::kClassCount> iou;
  std::optional<double> mean_iou;  // over classes present in pred or GT
  double accuracy = 0.0;
};
IouAcc iou_acc(const Tensor& pred_s, const std::vector<int>& gt_labels,
               const std::vector<std::uint8_t>& eval_mask);

struct NormalStats {
  double mean_deg = 0.0, median_deg = 0.0;
  double pct_11_25 = 0.0, pct_22_5 = 0.0, pct_30 = 0.0;
};
struct SurfaceStats {
  double mean_m = 0.0, median_m = 0.0;
  double pct_0_2 = 0.0, pct_0_5 = 0.0, pct_1_0 = 0.0;
};
struct GeomStats {
  std::optional<NormalStats> normal;
  std::optional<SurfaceStats> surface;
  std::int64_t pixels = 0;
};

// pred_P/gt_P are (3,H,W) rig-frame points. Pixels where pred_valid is 0
// count as maximal error (180 degrees, 10 m). Pass has_normals/has_points
// false to skip a side the model does not predict.
GeomStats geom_stats(const Tensor& pred_n, const Tensor& pred_P,
                     const std::vector<std::uint8_t>& pred_valid, const Tensor& gt_n,
                     const Tensor& gt_P, const std::vector<std::uint8_t>& eval_mask,
                     bool has_normals = true, bool has_points = true);

struct EmdOptions {
  int k = kDefaultClusters;
  float prob_floor = kProbFloor;
  double threshold_frac = kExistFrac;
};

// Per-class EMD between the GT class point cloud (uniform weights) and the
// predicted cloud (pixels with p_xc > prob_floor, weights proportional to
// p_xc), both k-centered. Only classes whose existence is correctly
// predicted are evaluated; classes whose prediction side is empty after
// flooring are skipped.
PerClass emd_per_class(const Tensor& pred_s, const Tensor& pred_P,
                       const std::vector<std::uint8_t>& pred_valid,
                       const std::vector<int>& gt_labels, const Tensor& gt_P,
                       const std::vector<std::uint8_t>& eval_mask, const EmdOptions& opt = {});

// Exact Euclidean distance (pixels) to the nearest observed pixel, with
// circular horizontal wraparound. Unreachable pixels (no observation at all)
// get infinity.
std::vector<double> wrap_distance(const std::vector<std::uint8_t>& observed, int w, int h);

struct DistanceBin {
  double lo_px = 0.0, hi_px = 0.0;
  double lo_deg = 0.0, hi_deg = 0.0;  // 360/W degrees per pixel
  std::int64_t pixels = 0;
  std::optional<double> mean_iou;
};

// bins eval pixels by distance-to-observation [edges[b], edges[b+1]) and
// reports mean IoU per bin; empty bins are omitted
std::vector<DistanceBin> iou_vs_distance(const Tensor& pred_s, const std::vector<int>& gt_labels,
                                         const std::vector<std::uint8_t>& observed_mask,
                                         const std::vector<std::uint8_t>& eval_mask, int w, int h,
                                         const std::vector<double>& bin_edges);

struct MetricReport {
  std::array<std::optional<double>, sem::kClassCount> pog;
  std::array<std::optional<double>, sem::kClassCount> iou;
  std::array<std::optional<double>, sem::kClassCount> size_error;
  std::array<std::optional<double>, sem::kClassCount> emd;
  std::array<bool, sem::kClassCount> gt_exists{};
  std::array<bool, sem::kClassCount> pred_exists{};
  std::optional<double> pog_mean, iou_mean, size_mean, emd_mean;
  double exist_f1 = 1.0;
  double accuracy = 0.0;
  std::optional<NormalStats> normal;
  std::optional<SurfaceStats> surface;
  std::int64_t eval_pixels = 0;
};

struct ReportOptions {
  bool semantics = true;  // PoG / exist / size / IoU / accuracy / EMD
  bool normals = true;
  bool surface = true;
  bool emd = true;
  int k = kDefaultClusters;
  float prob_floor = kProbFloor;
  double threshold_frac = kExistFrac;
};

// Full per-example report. 3D points are depth * ray per pixel; prediction
// pixels with nonpositive or nonfinite depth count as invalid geometry.
MetricReport compute_report(const Panorama& pred, const Panorama& gt,
                            const std::vector<std::uint8_t>& eval_mask,
                            const cam::CameraRig& rig, const ReportOptions& opt = {});

}  // namespace pano::metrics
