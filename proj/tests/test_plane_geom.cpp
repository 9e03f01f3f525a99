#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "panoscene/plane_geom.hpp"
#include "panoscene/scenegen.hpp"

using namespace pano;
using cam::CameraRig;
using geom::Vec3;

namespace {

const CameraRig& desk_rig() {
  static const CameraRig rig = cam::make_rig(64, 40, 90.0, 116.0);
  return rig;
}

// odd-sized rig so one pixel ray is exactly (0,0,1)
const CameraRig& odd_rig() {
  static const CameraRig rig = cam::make_rig(9, 9, 90.0, 90.0);
  return rig;
}

double max_roundtrip_rel_err(const Panorama& pano, const CameraRig& rig) {
  const pg::PlaneImage plane = pg::depth_to_plane(pano.depth, pano.normal, rig);
  const pg::PointImage pts = pg::pn_to_points(plane, rig);
  const std::int64_t hw = pano.pixel_count();
  double max_rel = 0.0;
  for (int y = 0; y < pano.height(); ++y)
    for (int x = 0; x < pano.width(); ++x) {
      const std::int64_t i = pano.at(y, x);
      if (!pts.valid[i]) continue;
      const Vec3 P{pts.points.data[i], pts.points.data[hw + i], pts.points.data[2 * hw + i]};
      const int face = x / rig.face_w;
      const double z = rig.face_rot[face].apply_transposed(P).z;
      max_rel = std::max(max_rel, std::abs(z - pano.depth.data[i]) /
                                      std::max(1e-12, static_cast<double>(pano.depth.data[i])));
    }
  return max_rel;
}

}  // namespace

TEST_CASE("depth_to_plane hand case at the exact center pixel") {
  const CameraRig& rig = odd_rig();
  const int w = rig.width(), h = rig.height();
  Tensor depth = Tensor::zeros({1, h, w});
  Tensor normal = Tensor::zeros({3, h, w});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const std::int64_t center = 4 * w + 4;  // face 0, pixel (4,4): v = (0,0,1)
  depth.data[center] = 2.0f;
  normal.data[2 * hw + center] = -1.0f;  // n = (0,0,-1), facing the camera

  const pg::PlaneImage plane = pg::depth_to_plane(depth, normal, rig);
  REQUIRE(plane.valid[center] == 1);
  CHECK(plane.pdist.data[center] == 2.0f);  // p = -z (n·v) with v = (0,0,1)

  // perpendicular normal: grazing, invalid
  Tensor n2 = Tensor::zeros({3, h, w});
  n2.data[center] = 1.0f;  // n = (1,0,0), v·n = 0
  const pg::PlaneImage graze = pg::depth_to_plane(depth, n2, rig);
  CHECK(graze.valid[center] == 0);
  CHECK(graze.pdist.data[center] == 0.0f);
}

TEST_CASE("pn_to_points hand cases") {
  const CameraRig& rig = odd_rig();
  const int w = rig.width(), h = rig.height();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const std::int64_t center = 4 * w + 4;

  pg::PlaneImage plane;
  plane.w = w;
  plane.h = h;
  plane.normal = Tensor::zeros({3, h, w});
  plane.pdist = Tensor::zeros({1, h, w});
  plane.valid.assign(static_cast<size_t>(hw), 0);
  plane.valid[center] = 1;
  plane.normal.data[2 * hw + center] = -1.0f;
  plane.pdist.data[center] = 2.0f;

  const pg::PointImage pts = pg::pn_to_points(plane, rig);
  REQUIRE(pts.valid[center] == 1);
  CHECK(pts.points.data[center] == 0.0f);
  CHECK(pts.points.data[hw + center] == 0.0f);
  CHECK(pts.points.data[2 * hw + center] == 2.0f);  // P = (0,0,2)

  // p = 0: the plane passes through the camera, every valid point is the origin
  pg::PlaneImage through = plane;
  through.pdist.data[center] = 0.0f;
  const pg::PointImage origin = pg::pn_to_points(through, rig);
  CHECK(origin.points.data[2 * hw + center] == 0.0f);
}

TEST_CASE("floor plane reconstructs constant height on downward rays") {
  // camera 1.5 m above the floor: world floor normal (0,1,0), p = 1.5
  const CameraRig& rig = desk_rig();
  const int w = rig.width(), h = rig.height();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  pg::PlaneImage plane;
  plane.w = w;
  plane.h = h;
  plane.normal = Tensor::zeros({3, h, w});
  plane.pdist = Tensor::zeros({1, h, w});
  plane.valid.assign(static_cast<size_t>(hw), 0);
  for (std::int64_t i = 0; i < hw; ++i) {
    plane.normal.data[hw + i] = 1.0f;
    plane.pdist.data[i] = 1.5f;
    plane.valid[i] = 1;
  }
  const pg::PointImage pts = pg::pn_to_points(plane, rig);
  int checked = 0;
  for (int y = h / 2 + 3; y < h; ++y)  // strictly downward rays
    for (int x = 0; x < w; x += 17) {
      const std::int64_t i = static_cast<std::int64_t>(y) * w + x;
      if (!pts.valid[i]) continue;
      CHECK(pts.points.data[hw + i] == doctest::Approx(-1.5).epsilon(1e-5));
      ++checked;
    }
  CHECK(checked > 100);
}

TEST_CASE("round trip reproduces rendered depth below 1e-6 relative") {
  const Panorama pano = sg::render_panorama(sg::sample_scene(42, 0), desk_rig());
  CHECK(max_roundtrip_rel_err(pano, desk_rig()) < 1e-6);
}

TEST_CASE("acceptance-scale round trip: 50 rooms under 5 seconds") {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const Panorama pano =
        sg::render_panorama(sg::sample_scene(1000 + k, k % sem::kSceneCount), desk_rig());
    worst = std::max(worst, max_roundtrip_rel_err(pano, desk_rig()));
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  INFO("worst rel err " << worst << ", " << secs << " s");
  CHECK(worst < 1e-6);
  CHECK(secs < 5.0);
}

TEST_CASE("pn_backward matches a double-precision finite-difference oracle") {
  const CameraRig& rig = odd_rig();
  const int w = rig.width(), h = rig.height();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Rng rng(17);
  std::uniform_real_distribution<float> up(1.0f, 2.5f);
  std::uniform_real_distribution<float> uxy(-0.25f, 0.25f);
  std::uniform_real_distribution<float> ug(-1.0f, 1.0f);

  pg::PlaneImage plane;
  plane.w = w;
  plane.h = h;
  plane.normal = Tensor::zeros({3, h, w});
  plane.pdist = Tensor::zeros({1, h, w});
  plane.valid.assign(static_cast<size_t>(hw), 1);
  Tensor grad_P = Tensor::zeros({3, h, w});
  for (std::int64_t i = 0; i < hw; ++i) {
    // aim each normal roughly against its own ray; t = -p/(r·n) is a pole in
    // the denominator, so a central difference only converges when |r·n| stays
    // far above the step size
    const int py = static_cast<int>(i / w), px = static_cast<int>(i % w);
    const Vec3 r = cam::pano_ray(rig, px, py).r;
    const Vec3 n = geom::normalized({-r.x + uxy(rng), -r.y + uxy(rng), -r.z + uxy(rng)});
    plane.normal.data[i] = static_cast<float>(n.x);
    plane.normal.data[hw + i] = static_cast<float>(n.y);
    plane.normal.data[2 * hw + i] = static_cast<float>(n.z);
    plane.pdist.data[i] = up(rng);
    for (int c = 0; c < 3; ++c) grad_P.data[c * hw + i] = ug(rng);
  }

  const auto [grad_n, grad_p] = pg::pn_backward(plane, rig, grad_P);

  // double-precision forward of sum(grad_P ⊙ P)
  const auto loss = [&](const pg::PlaneImage& pl) {
    double acc = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::int64_t i = static_cast<std::int64_t>(y) * w + x;
        const Vec3 r = cam::pano_ray(rig, x, y).r;
        const Vec3 n{pl.normal.data[i], pl.normal.data[hw + i], pl.normal.data[2 * hw + i]};
        const double denom = geom::dot(r, n);
        if (std::abs(denom) < pg::kEpsRay) continue;
        const double t = -static_cast<double>(pl.pdist.data[i]) / denom;
        const Vec3 P = r * t;
        acc += grad_P.data[i] * P.x + grad_P.data[hw + i] * P.y + grad_P.data[2 * hw + i] * P.z;
      }
    return acc;
  };

  const double h_fd = 1e-4;
  double max_rel = 0.0;
  for (std::int64_t probe = 0; probe < hw; probe += 7) {
    for (int c = 0; c < 4; ++c) {
      Tensor& field = (c < 3) ? plane.normal : plane.pdist;
      const std::int64_t idx = (c < 3) ? c * hw + probe : probe;
      const float saved = field.data[idx];
      field.data[idx] = static_cast<float>(saved + h_fd);
      const double xp = field.data[idx];  // realized f32 step, not the nominal h
      const double fp = loss(plane);
      field.data[idx] = static_cast<float>(saved - h_fd);
      const double xm = field.data[idx];
      const double fm = loss(plane);
      field.data[idx] = saved;
      const double numeric = (fp - fm) / (xp - xm);
      const double analytic = (c < 3) ? grad_n.data[idx] : grad_p.data[idx];
      const double rel =
          std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      if (std::abs(analytic) + std::abs(numeric) > 1e-6) max_rel = std::max(max_rel, rel);
    }
  }
  CHECK(max_rel < 1e-3);

  // zero upstream gradient produces zero parameter gradients
  const auto [zn, zp] = pg::pn_backward(plane, rig, Tensor::zeros({3, h, w}));
  for (float v : zn.data) CHECK(v == 0.0f);
  for (float v : zp.data) CHECK(v == 0.0f);
}

TEST_CASE("pn consistency invariant on a rendered scene") {
  const CameraRig& rig = desk_rig();
  const Panorama pano = sg::render_panorama(sg::sample_scene(9, 4), rig);
  const pg::PlaneImage plane = pg::depth_to_plane(pano.depth, pano.normal, rig);
  const pg::PointImage pts = pg::pn_to_points(plane, rig);
  const std::int64_t hw = pano.pixel_count();
  for (std::int64_t i = 0; i < hw; i += 11) {
    if (!pts.valid[i]) continue;
    const Vec3 P{pts.points.data[i], pts.points.data[hw + i], pts.points.data[2 * hw + i]};
    const Vec3 n{plane.normal.data[i], plane.normal.data[hw + i],
                 plane.normal.data[2 * hw + i]};
    CHECK(std::abs(geom::dot(n, P) + plane.pdist.data[i]) < 1e-5);
  }
}

TEST_CASE("normals_from_depth recovers exact plane normals away from edges") {
  const CameraRig& rig = desk_rig();
  const Panorama pano = sg::render_panorama(sg::sample_scene(55, 6), rig);
  const pg::NormalEstimate est = pg::normals_from_depth(pano.depth, rig);
  const int w = pano.width(), h = pano.height();
  const std::int64_t hw = pano.pixel_count();

  std::int64_t compared = 0;
  double worst = 0.0;
  for (int y = 1; y < h - 1; ++y)
    for (int x = 0; x < w; ++x) {
      const std::int64_t i = pano.at(y, x);
      if (!est.valid[i]) continue;
      // compare only where the GT plane (normal and p) is constant over the
      // 3x3 window; elsewhere the window straddles a depth edge
      bool uniform = true;
      for (int dy = -1; dy <= 1 && uniform; ++dy)
        for (int dx = -1; dx <= 1 && uniform; ++dx) {
          const std::int64_t j = pano.at(y + dy, ((x + dx) % w + w) % w);
          if (pano.pdist.data[j] != pano.pdist.data[i]) uniform = false;
          for (int c = 0; c < 3; ++c)
            if (pano.normal.data[c * hw + j] != pano.normal.data[c * hw + i]) uniform = false;
        }
      if (!uniform) continue;
      for (int c = 0; c < 3; ++c)
        worst = std::max(worst, std::abs(static_cast<double>(est.normal.data[c * hw + i]) -
                                         pano.normal.data[c * hw + i]));
      ++compared;
    }
  CHECK(compared > 1000);
  CHECK(worst < 1e-4);
}

TEST_CASE("normals_from_depth rejects insufficient support") {
  const CameraRig& rig = odd_rig();
  Tensor depth = Tensor::zeros({1, rig.height(), rig.width()});
  depth.data[4 * rig.width() + 4] = 2.0f;  // a single valid pixel
  const pg::NormalEstimate est = pg::normals_from_depth(depth, rig);
  for (auto v : est.valid) CHECK(v == 0);
}

namespace {

// single box in an otherwise empty room: all plane-distance values are
// well separated, so region growing never merges distinct primitives
sg::SceneSpec separated_scene() {
  sg::SceneSpec spec;
  spec.room_w = 4.0;
  spec.room_d = 4.0;
  spec.room_h = 2.7;
  spec.cam = {2.6, 1.5, 2.2};
  spec.category = 0;
  spec.boxes.push_back({{0.02, 0.0, 0.5}, {1.6, 0.6, 2.6}, sem::kBed});
  return spec;
}

}  // namespace

TEST_CASE("fit_planes is a fixed point on exact piecewise-planar input") {
  const CameraRig& rig = desk_rig();
  const Panorama pano = sg::render_panorama(separated_scene(), rig);
  const pg::PlaneImage plane = pg::depth_to_plane(pano.depth, pano.normal, rig);
  const pg::PlaneFitResult fit = pg::fit_planes(plane, rig);
  const std::int64_t hw = pano.pixel_count();
  for (std::int64_t i = 0; i < hw; ++i) {
    if (!plane.valid[i]) continue;
    CHECK(std::abs(fit.refined.pdist.data[i] - plane.pdist.data[i]) < 1e-5);
    for (int c = 0; c < 3; ++c)
      CHECK(std::abs(fit.refined.normal.data[c * hw + i] - plane.normal.data[c * hw + i]) <
            1e-5);
  }

  // min_region_px larger than the image leaves everything untouched
  const pg::PlaneFitResult identity =
      pg::fit_planes(plane, rig, 10.0, 0.1, static_cast<int>(hw) + 1);
  for (std::int64_t i = 0; i < hw; ++i)
    CHECK(identity.refined.pdist.data[i] == plane.pdist.data[i]);
}

TEST_CASE("fit_planes reduces noise on planar regions") {
  const CameraRig& rig = desk_rig();
  const Panorama pano = sg::render_panorama(separated_scene(), rig);
  const pg::PlaneImage clean = pg::depth_to_plane(pano.depth, pano.normal, rig);

  pg::PlaneImage noisy = clean;
  Rng rng(4);
  std::normal_distribution<float> noise(0.0f, 0.02f);
  const std::int64_t hw = pano.pixel_count();
  for (std::int64_t i = 0; i < hw; ++i)
    if (noisy.valid[i]) noisy.pdist.data[i] += noise(rng);

  const pg::PlaneFitResult fit = pg::fit_planes(noisy, rig, 10.0, 0.15, 50);
  double rmse_in = 0.0, rmse_out = 0.0;
  std::int64_t n = 0;
  for (std::int64_t i = 0; i < hw; ++i) {
    if (!clean.valid[i]) continue;
    const double din = noisy.pdist.data[i] - clean.pdist.data[i];
    const double dout = fit.refined.pdist.data[i] - clean.pdist.data[i];
    rmse_in += din * din;
    rmse_out += dout * dout;
    ++n;
  }
  REQUIRE(n > 0);
  CHECK(std::sqrt(rmse_out / n) < std::sqrt(rmse_in / n));
}
