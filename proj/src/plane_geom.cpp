#include "panoscene/plane_geom.hpp"

#include <cmath>
#include <deque>
#include <sstream>
#include <stdexcept>

namespace pano::pg {

using geom::Vec3;

namespace {

void check_pano_shape(const Tensor& t, const cam::CameraRig& rig, int channels, const char* op) {
  const std::int64_t hw = rig.pixel_count();
  if (t.numel() != channels * hw) {
    std::ostringstream os;
    os << op << ": expected " << channels << "x" << rig.height() << "x" << rig.width()
       << " channel, got shape " << t.shape_str();
    throw std::invalid_argument(os.str());
  }
}

inline Vec3 read3(const Tensor& t, std::int64_t hw, std::int64_t i) {
  return {t.data[i], t.data[hw + i], t.data[2 * hw + i]};
}

inline void write3(Tensor& t, std::int64_t hw, std::int64_t i, const Vec3& v) {
  t.data[i] = static_cast<float>(v.x);
  t.data[hw + i] = static_cast<float>(v.y);
  t.data[2 * hw + i] = static_cast<float>(v.z);
}

}  // namespace

PlaneImage depth_to_plane(const Tensor& depth, const Tensor& normal, const cam::CameraRig& rig,
                          const std::vector<std::uint8_t>* observed) {
  check_pano_shape(depth, rig, 1, "depth_to_plane");
  check_pano_shape(normal, rig, 3, "depth_to_plane");
  const int w = rig.width(), h = rig.height();
  const std::int64_t hw = rig.pixel_count();
  PlaneImage out;
  out.w = w;
  out.h = h;
  out.normal = Tensor::zeros({3, h, w});
  out.pdist = Tensor::zeros({1, h, w});
  out.valid.assign(static_cast<size_t>(hw), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::int64_t i = static_cast<std::int64_t>(y) * w + x;
      if (observed && !(*observed)[i]) continue;
      const double z = depth.data[i];
      if (!(z > 0.0)) continue;
      const Vec3 n = read3(normal, hw, i);
      const Vec3 r = cam::pano_ray(rig, x, y).r;
      if (std::abs(geom::dot(r, n)) < kEpsRay) continue;  // grazing plane
      out.valid[i] = 1;
      write3(out.normal, hw, i, n);
      out.pdist.data[i] = static_cast<float>(-z * geom::dot(r, n));
    }
  return out;
}

PointImage pn_to_points(const PlaneImage& plane, const cam::CameraRig& rig) {
  if (plane.w != rig.width() || plane.h != rig.height())
    throw std::invalid_argument("pn_to_points: plane image size does not match rig");
  const int w = plane.w, h = plane.h;
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  PointImage out;
  out.w = w;
  out.h = h;
  out.points = Tensor::zeros({3, h, w});
  out.valid.assign(static_cast<size_t>(hw), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::int64_t i = static_cast<std::int64_t>(y) * w + x;
      if (!plane.valid[i]) continue;
      const Vec3 n = read3(plane.normal, hw, i);
      const Vec3 r = cam::pano_ray(rig, x, y).r;
      const double denom = geom::dot(r, n);
      if (std::abs(denom) < kEpsRay) continue;
      const double t = -static_cast<double>(plane.pdist.data[i]) / denom;
      out.valid[i] = 1;
      write3(out.points, hw, i, r * t);
    }
  return out;
}

std::pair<Tensor, Tensor> pn_backward(const PlaneImage& plane, const cam::CameraRig& rig,
                                      const Tensor& grad_points) {
  check_pano_shape(grad_points, rig, 3, "pn_backward");
  const int w = plane.w, h = plane.h;
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor grad_n = Tensor::zeros({3, h, w});
  Tensor grad_p = Tensor::zeros({1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::int64_t i = static_cast<std::int64_t>(y) * w + x;
      if (!plane.valid[i]) continue;
      const Vec3 n = read3(plane.normal, hw, i);
      const Vec3 r = cam::pano_ray(rig, x, y).r;
      const double denom = geom::dot(r, n);
      if (std::abs(denom) < kEpsRay) continue;
      const Vec3 g = read3(grad_points, hw, i);
      const double gr = geom::dot(g, r);
      const double p = plane.pdist.data[i];
      grad_p.data[i] = static_cast<float>(-gr / denom);
      write3(grad_n, hw, i, r * (p / (denom * denom) * gr));
    }
  return {std::move(grad_n), std::move(grad_p)};
}

NormalEstimate normals_from_depth(const Tensor& depth, const cam::CameraRig& rig,
                                  const std::vector<std::uint8_t>* observed) {
  check_pano_shape(depth, rig, 1, "normals_from_depth");
  const int w = rig.width(), h = rig.height();
  const std::int64_t hw = rig.pixel_count();
  NormalEstimate out;
  out.normal = Tensor::zeros({3, h, w});
  out.valid.assign(static_cast<size_t>(hw), 0);

  auto point_at = [&](int y, int x, Vec3& P) {
    const std::int64_t i = static_cast<std::int64_t>(y) * w + x;
    if (observed && !(*observed)[i]) return false;
    const double z = depth.data[i];
    if (!(z > 0.0)) return false;
    P = cam::pano_ray(rig, x, y).r * z;
    return true;
  };

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::int64_t i = static_cast<std::int64_t>(y) * w + x;
      Vec3 pts[9];
      int count = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        if (y + dy < 0 || y + dy >= h) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          Vec3 P;
          if (point_at(y + dy, ((x + dx) % w + w) % w, P)) pts[count++] = P;
        }
      }
      if (count < 6) continue;  // insufficient support for a stable fit
      Vec3 centroid{};
      for (int k = 0; k < count; ++k) centroid += pts[k];
      centroid = centroid * (1.0 / count);
      double xx = 0, xy = 0, xz = 0, yy = 0, yz = 0, zz = 0;
      for (int k = 0; k < count; ++k) {
        const Vec3 d = pts[k] - centroid;
        xx += d.x * d.x;
        xy += d.x * d.y;
        xz += d.x * d.z;
        yy += d.y * d.y;
        yz += d.y * d.z;
        zz += d.z * d.z;
      }
      const geom::Eigen3 eig = geom::symmetric_eigen3(xx, xy, xz, yy, yz, zz);
      // collinear neighborhoods have two vanishing eigenvalues
      if (eig.values[1] < 1e-12 * std::max(1.0, eig.values[2])) continue;
      Vec3 n = eig.vectors[0];
      const double len = geom::norm(n);
      if (len < 1e-12) continue;
      n = n * (1.0 / len);
      Vec3 Pc;
      if (!point_at(y, x, Pc)) continue;
      if (geom::dot(n, Pc) > 0.0) n = -n;  // orient toward the camera
      out.valid[i] = 1;
      write3(out.normal, hw, i, n);
    }
  return out;
}

PlaneFitResult fit_planes(const PlaneImage& pred, const cam::CameraRig& rig,
                          double angle_tol_deg, double dist_tol_m, int min_region_px) {
  const int w = pred.w, h = pred.h;
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  PlaneFitResult res;
  res.refined = pred;
  res.labels.assign(static_cast<size_t>(hw), -1);
  const double cos_tol = std::cos(geom::deg_to_rad(angle_tol_deg));

  const PointImage pts = pn_to_points(pred, rig);

  int next_label = 0;
  std::vector<std::vector<std::int64_t>> regions;
  for (std::int64_t seed = 0; seed < hw; ++seed) {
    if (!pred.valid[seed] || res.labels[seed] != -1) continue;
    const Vec3 n0 = read3(pred.normal, hw, seed);
    const double p0 = pred.pdist.data[seed];
    const int label = next_label++;
    std::vector<std::int64_t> members;
    std::deque<std::int64_t> queue{seed};
    res.labels[seed] = label;
    while (!queue.empty()) {
      const std::int64_t cur = queue.front();
      queue.pop_front();
      members.push_back(cur);
      const int cy = static_cast<int>(cur / w), cx = static_cast<int>(cur % w);
      const int nx4[4] = {(cx + 1) % w, (cx - 1 + w) % w, cx, cx};
      const int ny4[4] = {cy, cy, cy + 1, cy - 1};
      for (int k = 0; k < 4; ++k) {
        if (ny4[k] < 0 || ny4[k] >= h) continue;
        const std::int64_t nb = static_cast<std::int64_t>(ny4[k]) * w + nx4[k];
        if (!pred.valid[nb] || res.labels[nb] != -1) continue;
        const Vec3 nn = read3(pred.normal, hw, nb);
        if (geom::dot(n0, nn) < cos_tol) continue;
        if (std::abs(pred.pdist.data[nb] - p0) >= dist_tol_m) continue;
        res.labels[nb] = label;
        queue.push_back(nb);
      }
    }
    regions.push_back(std::move(members));
  }

  for (const auto& members : regions) {
    if (static_cast<int>(members.size()) < min_region_px) continue;
    Vec3 centroid{};
    int count = 0;
    for (std::int64_t i : members) {
      if (!pts.valid[i]) continue;
      centroid += read3(pts.points, hw, i);
      ++count;
    }
    if (count < 3) continue;
    centroid = centroid * (1.0 / count);
    double xx = 0, xy = 0, xz = 0, yy = 0, yz = 0, zz = 0;
    for (std::int64_t i : members) {
      if (!pts.valid[i]) continue;
      const Vec3 d = read3(pts.points, hw, i) - centroid;
      xx += d.x * d.x;
      xy += d.x * d.y;
      xz += d.x * d.z;
      yy += d.y * d.y;
      yz += d.y * d.z;
      zz += d.z * d.z;
    }
    const geom::Eigen3 eig = geom::symmetric_eigen3(xx, xy, xz, yy, yz, zz);
    Vec3 n = eig.vectors[0];
    const double len = geom::norm(n);
    if (len < 1e-12) continue;
    n = n * (1.0 / len);
    if (geom::dot(n, centroid) > 0.0) n = -n;
    const double p = -geom::dot(n, centroid);
    for (std::int64_t i : members) {
      write3(res.refined.normal, hw, i, n);
      res.refined.pdist.data[i] = static_cast<float>(p);
    }
  }
  return res;
}

}  // namespace pano::pg
