#include "panoscene/camera.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pano::cam {

CameraRig make_rig(int face_w, int face_h, double hfov_deg, double vfov_deg, Vec3 p0) {
  if (face_w < 1 || face_h < 1) {
    std::ostringstream os;
    os << "make_rig: face size must be positive, got " << face_w << "x" << face_h;
    throw std::invalid_argument(os.str());
  }
  if (!(hfov_deg > 0.0 && hfov_deg < 180.0) || !(vfov_deg > 0.0 && vfov_deg < 180.0)) {
    std::ostringstream os;
    os << "make_rig: FoV must lie in (0, 180) degrees, got hfov=" << hfov_deg
       << " vfov=" << vfov_deg;
    throw std::invalid_argument(os.str());
  }
  CameraRig rig;
  rig.face_w = face_w;
  rig.face_h = face_h;
  rig.fx = face_w / (2.0 * std::tan(geom::deg_to_rad(hfov_deg) / 2.0));
  rig.fy = face_h / (2.0 * std::tan(geom::deg_to_rad(vfov_deg) / 2.0));
  rig.cx = face_w / 2.0;
  rig.cy = face_h / 2.0;
  rig.p0 = p0;
  for (int f = 0; f < 4; ++f) rig.face_rot[f] = Mat3::face_yaw(f);
  return rig;
}

PixelRay pixel_ray(const CameraRig& rig, int face, double xi, double yi) {
  if (face < 0 || face >= 4) throw std::invalid_argument("pixel_ray: face must be in [0, 4)");
  PixelRay out;
  out.v = {(xi - rig.cx) / rig.fx, (rig.cy - yi) / rig.fy, 1.0};
  out.r = rig.face_rot[face].apply(out.v);
  out.dir = geom::normalized(out.r);
  return out;
}

PixelRay pano_ray(const CameraRig& rig, int x, int y) {
  const int face = x / rig.face_w;
  return pixel_ray(rig, face, (x % rig.face_w) + 0.5, y + 0.5);
}

double column_yaw_deg(const CameraRig& rig, int x) {
  const int face = x / rig.face_w;
  const double vx = ((x % rig.face_w) + 0.5 - rig.cx) / rig.fx;
  return geom::wrap_deg(90.0 * face + geom::rad_to_deg(std::atan(vx)));
}

Tensor rays_tensor(const CameraRig& rig) {
  const int w = rig.width(), h = rig.height();
  Tensor rays = Tensor::zeros({3, h, w});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Vec3 r = pano_ray(rig, x, y).r;
      const std::int64_t i = static_cast<std::int64_t>(y) * w + x;
      rays.data[0 * hw + i] = static_cast<float>(r.x);
      rays.data[1 * hw + i] = static_cast<float>(r.y);
      rays.data[2 * hw + i] = static_cast<float>(r.z);
    }
  return rays;
}

}  // namespace pano::cam
