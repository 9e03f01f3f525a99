#pragma once

#include <array>

#include "panoscene/geometry.hpp"
#include "panoscene/tensor.hpp"

namespace pano::cam {

using geom::Mat3;
using geom::Vec3;

// Four-face sky-box rig.  Face f looks along yaw 90°·f (world y up, yaw 0 =
// +z, yaw measured toward +x).  Face frame: x right, y up, z forward; a pixel
// ray is v = ((xi-cx)/fx, (cy-yi)/fy, 1) with continuous image coordinates
// where pixel (i,j) has center (i+0.5, j+0.5).
struct CameraRig {
  int face_w = 0;
  int face_h = 0;
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  Vec3 p0;  // rig center in scene coordinates; ray math is rig-centered
  std::array<Mat3, 4> face_rot;  // face frame -> world

  int width() const { return 4 * face_w; }
  int height() const { return face_h; }
  std::int64_t pixel_count() const { return static_cast<std::int64_t>(width()) * face_h; }
};

struct PixelRay {
  Vec3 v;    // face frame, v.z == 1
  Vec3 r;    // world frame, same parameterization (depth along the ray == face z)
  Vec3 dir;  // world frame, unit length
};

// hfov/vfov in degrees, exclusive (0, 180)
CameraRig make_rig(int face_w, int face_h, double hfov_deg, double vfov_deg, Vec3 p0 = {});

// xi, yi are continuous face-image coordinates (pixel centers at +0.5)
PixelRay pixel_ray(const CameraRig& rig, int face, double xi, double yi);

// ray through the center of panorama pixel (x, y); x indexes the 4W-wide strip
PixelRay pano_ray(const CameraRig& rig, int x, int y);

// yaw in degrees, wrapped to (-180, 180], of the column's center ray
double column_yaw_deg(const CameraRig& rig, int x);

// (3, H, 4W) world rays with face-z = 1 parameterization, f32, for the
// differentiable PN path; double-precision consumers recompute rays directly
Tensor rays_tensor(const CameraRig& rig);

}  // namespace pano::cam
