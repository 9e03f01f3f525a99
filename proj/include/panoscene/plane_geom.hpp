#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "panoscene/camera.hpp"
#include "panoscene/tensor.hpp"

// Plane-equation surface encoding.  Convention: n·P + p = 0 with P in
// rig-centered world coordinates, so p = -n·P.  Rays use the face-z = 1
// parameterization, making the ray parameter t equal to the face-frame depth.
namespace pano::pg {

inline constexpr double kEpsRay = 1e-4;  // |v·n| below this is a grazing plane

struct PlaneImage {
  int w = 0, h = 0;
  Tensor normal;  // (3, h, w) world frame, unit on valid pixels
  Tensor pdist;   // (1, h, w)
  std::vector<std::uint8_t> valid;
};

struct PointImage {
  int w = 0, h = 0;
  Tensor points;  // (3, h, w) rig-centered world
  std::vector<std::uint8_t> valid;
};

// observed == nullptr treats every pixel as observed; pixels with depth <= 0,
// outside the mask, or grazing (|v·n| < kEpsRay) come out invalid and zeroed
PlaneImage depth_to_plane(const Tensor& depth, const Tensor& normal, const cam::CameraRig& rig,
                          const std::vector<std::uint8_t>* observed = nullptr);

// PN-layer forward: P = -(p/(v·n))·v per valid pixel
PointImage pn_to_points(const PlaneImage& plane, const cam::CameraRig& rig);

// analytic PN-layer backward; returns (grad_normal, grad_pdist); invalid
// pixels contribute zero
std::pair<Tensor, Tensor> pn_backward(const PlaneImage& plane, const cam::CameraRig& rig,
                                      const Tensor& grad_points);

struct NormalEstimate {
  Tensor normal;  // (3, h, w)
  std::vector<std::uint8_t> valid;
};

// least-squares plane fit over 3x3 neighborhoods of back-projected points,
// oriented toward the camera (n·v < 0); columns wrap across the pano seam
NormalEstimate normals_from_depth(const Tensor& depth, const cam::CameraRig& rig,
                                  const std::vector<std::uint8_t>* observed = nullptr);

struct PlaneFitResult {
  PlaneImage refined;
  std::vector<int> labels;  // region id per pixel, -1 where invalid
};

// Greedy 4-connected region growing (columns wrap) followed by least-squares
// refit of regions with at least min_region_px members.  Visual post-process
// only; quantitative metric paths never call this.
PlaneFitResult fit_planes(const PlaneImage& pred, const cam::CameraRig& rig,
                          double angle_tol_deg = 10.0, double dist_tol_m = 0.1,
                          int min_region_px = 50);

}  // namespace pano::pg
