#include "panoscene/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "panoscene/kernels.hpp"

namespace pano::sg {

namespace {

using sem::Class;

constexpr double kCamClearance = 0.5;  // free radius around the camera, meters
constexpr double kBoxGap = 0.05;       // minimum gap between furniture boxes

struct ItemPrior {
  int cls;
  double prob;
  int lo, hi;  // count range when present
};

struct CategoryPrior {
  double w_lo, w_hi, d_lo, d_hi;
  std::vector<ItemPrior> items;
};

// The documented furniture prior table.  Floor classes become boxes, the
// wall classes (window/door/tv) become wall rectangles.  bedroom keeps
// bed/cabinet/window each near-certain so their joint presence stays >= 0.9.
const std::array<CategoryPrior, sem::kSceneCount>& priors() {
  static const std::array<CategoryPrior, sem::kSceneCount> table = {{
      // bedroom
      {3.4, 6.0, 3.4, 6.0,
       {{Class::kBed, 0.99, 1, 1},
        {Class::kCabinet, 0.97, 1, 2},
        {Class::kWindow, 0.96, 1, 2},
        {Class::kChair, 0.40, 1, 1},
        {Class::kTv, 0.30, 1, 1},
        {Class::kDoor, 0.95, 1, 1},
        {Class::kObjs, 0.60, 1, 2}}},
      // living_room
      {3.4, 8.0, 3.4, 8.0,
       {{Class::kSofa, 0.95, 1, 2},
        {Class::kTable, 0.70, 1, 1},
        {Class::kTv, 0.65, 1, 1},
        {Class::kWindow, 0.85, 1, 2},
        {Class::kCabinet, 0.40, 1, 1},
        {Class::kDoor, 0.95, 1, 1},
        {Class::kFurn, 0.50, 1, 2}}},
      // dining_room
      {3.2, 7.0, 3.2, 7.0,
       {{Class::kTable, 0.98, 1, 1},
        {Class::kChair, 0.95, 2, 4},
        {Class::kWindow, 0.70, 1, 2},
        {Class::kCabinet, 0.50, 1, 1},
        {Class::kDoor, 0.95, 1, 1},
        {Class::kObjs, 0.40, 1, 1}}},
      // kitchen
      {2.8, 5.5, 2.8, 5.5,
       {{Class::kCabinet, 0.97, 1, 3},
        {Class::kTable, 0.60, 1, 1},
        {Class::kChair, 0.50, 1, 2},
        {Class::kWindow, 0.70, 1, 1},
        {Class::kDoor, 0.95, 1, 1},
        {Class::kObjs, 0.70, 1, 2}}},
      // bathroom
      {2.5, 3.8, 2.5, 3.8,
       {{Class::kCabinet, 0.75, 1, 1},
        {Class::kObjs, 0.90, 1, 2},
        {Class::kWindow, 0.50, 1, 1},
        {Class::kDoor, 0.98, 1, 1}}},
      // office
      {2.8, 6.0, 2.8, 6.0,
       {{Class::kTable, 0.92, 1, 2},
        {Class::kChair, 0.92, 1, 2},
        {Class::kCabinet, 0.60, 1, 2},
        {Class::kTv, 0.45, 1, 1},
        {Class::kWindow, 0.80, 1, 2},
        {Class::kDoor, 0.95, 1, 1},
        {Class::kObjs, 0.50, 1, 1}}},
      // hallway
      {2.5, 3.0, 4.5, 8.0,
       {{Class::kDoor, 0.98, 1, 3},
        {Class::kCabinet, 0.35, 1, 1},
        {Class::kWindow, 0.30, 1, 1},
        {Class::kObjs, 0.40, 1, 1}}},
      // other
      {2.8, 7.0, 2.8, 7.0,
       {{Class::kFurn, 0.80, 1, 3},
        {Class::kObjs, 0.70, 1, 2},
        {Class::kChair, 0.40, 1, 1},
        {Class::kTable, 0.40, 1, 1},
        {Class::kWindow, 0.60, 1, 1},
        {Class::kDoor, 0.90, 1, 1}}},
  }};
  return table;
}

struct DimRange {
  double w_lo, w_hi, d_lo, d_hi, h_lo, h_hi;
};

// footprint (w x d) and height ranges per floor class
DimRange box_dims(int cls) {
  switch (cls) {
    case Class::kChair: return {0.40, 0.60, 0.40, 0.60, 0.80, 1.00};
    case Class::kBed: return {1.50, 2.00, 1.90, 2.10, 0.50, 0.70};
    case Class::kSofa: return {1.60, 2.20, 0.80, 1.00, 0.70, 0.90};
    case Class::kTable: return {0.90, 1.80, 0.60, 1.00, 0.70, 0.80};
    case Class::kCabinet: return {0.50, 1.20, 0.35, 0.60, 0.90, 2.00};
    case Class::kFurn: return {0.50, 1.40, 0.50, 1.20, 0.40, 1.20};
    default: return {0.15, 0.50, 0.15, 0.50, 0.15, 0.50};  // objs
  }
}

// width/height ranges on the wall and mount height above the floor
struct WallDims {
  double w_lo, w_hi, h_lo, h_hi, v_lo, v_hi;
};

WallDims wall_dims(int cls) {
  switch (cls) {
    case Class::kWindow: return {0.80, 2.00, 0.90, 1.40, 0.90, 1.20};
    case Class::kDoor: return {0.80, 1.00, 2.00, 2.10, 0.00, 0.00};
    default: return {0.80, 1.40, 0.50, 0.80, 1.00, 1.40};  // tv
  }
}

bool is_wall_class(int cls) {
  return cls == Class::kWindow || cls == Class::kDoor || cls == Class::kTv;
}

bool boxes_overlap(const FurnitureBox& a, const FurnitureBox& b, double gap) {
  return a.lo.x < b.hi.x + gap && b.lo.x < a.hi.x + gap && a.lo.z < b.hi.z + gap &&
         b.lo.z < a.hi.z + gap;
}

bool rects_overlap(const WallItem& a, const WallItem& b, double gap) {
  return a.u0 < b.u1 + gap && b.u0 < a.u1 + gap && a.v0 < b.v1 + gap && b.v0 < a.v1 + gap;
}

struct LayoutRng {
  Rng& rng;
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }
};

bool place_box(LayoutRng& r, SceneSpec& spec, int cls) {
  const DimRange dims = box_dims(cls);
  const bool against_wall =
      cls == Class::kBed || cls == Class::kSofa || cls == Class::kCabinet;
  for (int attempt = 0; attempt < 40; ++attempt) {
    double bw = r.uniform(dims.w_lo, dims.w_hi);
    double bd = r.uniform(dims.d_lo, dims.d_hi);
    const double bh = r.uniform(dims.h_lo, std::min(dims.h_hi, spec.room_h - 0.4));
    if (r.bernoulli(0.5)) std::swap(bw, bd);  // random 90-degree orientation
    if (bw > spec.room_w - 0.3 || bd > spec.room_d - 0.3) continue;
    double x0, z0;
    if (against_wall) {
      const int wall = r.uniform_int(0, 3);
      const double flush = 0.02;
      switch (wall) {
        case 0: x0 = flush; z0 = r.uniform(0.1, spec.room_d - bd - 0.1); break;
        case 1: x0 = spec.room_w - bw - flush; z0 = r.uniform(0.1, spec.room_d - bd - 0.1); break;
        case 2: z0 = flush; x0 = r.uniform(0.1, spec.room_w - bw - 0.1); break;
        default: z0 = spec.room_d - bd - flush; x0 = r.uniform(0.1, spec.room_w - bw - 0.1);
      }
    } else {
      x0 = r.uniform(0.1, spec.room_w - bw - 0.1);
      z0 = r.uniform(0.1, spec.room_d - bd - 0.1);
    }
    FurnitureBox box{{x0, 0.0, z0}, {x0 + bw, bh, z0 + bd}, cls};
    bool ok = true;
    for (const auto& other : spec.boxes)
      if (boxes_overlap(box, other, kBoxGap)) {
        ok = false;
        break;
      }
    if (!ok) continue;
    spec.boxes.push_back(box);
    return true;
  }
  return false;
}

bool place_wall_item(LayoutRng& r, SceneSpec& spec, int cls) {
  const WallDims dims = wall_dims(cls);
  for (int attempt = 0; attempt < 40; ++attempt) {
    const int wall = r.uniform_int(0, 3);
    const double wall_len = (wall < 2) ? spec.room_d : spec.room_w;
    const double iw = r.uniform(dims.w_lo, dims.w_hi);
    const double ih = r.uniform(dims.h_lo, dims.h_hi);
    if (iw > wall_len - 0.3) continue;
    const double v0 = r.uniform(dims.v_lo, dims.v_hi);
    if (v0 + ih > spec.room_h - 0.05) continue;
    WallItem item{wall, r.uniform(0.1, wall_len - iw - 0.1), v0, 0.0, 0.0, cls};
    item.u1 = item.u0 + iw;
    item.v1 = item.v0 + ih;
    bool ok = true;
    for (const auto& other : spec.wall_items)
      if (other.wall == wall && rects_overlap(item, other, kBoxGap)) {
        ok = false;
        break;
      }
    if (!ok) continue;
    spec.wall_items.push_back(item);
    return true;
  }
  return false;
}

bool place_camera(LayoutRng& r, SceneSpec& spec) {
  const double margin = kCamClearance + 0.1;
  if (spec.room_w <= 2 * margin || spec.room_d <= 2 * margin) return false;
  for (int attempt = 0; attempt < 200; ++attempt) {
    const double x = r.uniform(margin, spec.room_w - margin);
    const double z = r.uniform(margin, spec.room_d - margin);
    bool ok = true;
    for (const auto& box : spec.boxes)
      if (x > box.lo.x - kCamClearance && x < box.hi.x + kCamClearance &&
          z > box.lo.z - kCamClearance && z < box.hi.z + kCamClearance) {
        ok = false;
        break;
      }
    if (!ok) continue;
    spec.cam = {x, r.uniform(1.35, 1.60), z};
    return true;
  }
  return false;
}

}  // namespace

SceneSpec sample_scene(std::uint64_t seed, int category) {
  if (category < 0 || category >= sem::kSceneCount)
    throw std::invalid_argument("sample_scene: category out of range");
  Rng rng(seed);
  LayoutRng r{rng};
  const CategoryPrior& prior = priors()[category];

  for (int attempt = 0; attempt < 1000; ++attempt) {
    SceneSpec spec;
    spec.category = category;
    spec.seed = seed;
    spec.room_w = r.uniform(prior.w_lo, prior.w_hi);
    spec.room_d = r.uniform(prior.d_lo, prior.d_hi);
    spec.room_h = r.uniform(2.4, 3.2);

    bool ok = true;
    for (const ItemPrior& item : prior.items) {
      if (!r.bernoulli(item.prob)) continue;
      const int count = r.uniform_int(item.lo, item.hi);
      for (int k = 0; k < count && ok; ++k)
        ok = is_wall_class(item.cls) ? place_wall_item(r, spec, item.cls)
                                     : place_box(r, spec, item.cls);
      if (!ok) break;
    }
    if (ok && place_camera(r, spec)) return spec;
  }
  std::ostringstream os;
  os << "sample_scene: no valid layout after 1000 attempts (seed=" << seed
     << ", category=" << sem::kSceneNames[category] << ")";
  throw std::runtime_error(os.str());
}

namespace {

struct Hit {
  double t = -1.0;
  Vec3 n;
  double p = 0.0;  // plane constant, exact per primitive face
  int cls = -1;
};

struct RoomPlane {
  int axis;     // 0 x, 1 y, 2 z
  double sign;  // inward normal direction along axis
  double coord; // plane position along axis, rig-centered
  int cls;
  int wall_id;  // -1 for floor/ceiling, else 0..3 matching WallItem::wall
};

// Shared ray-caster over the scene's primitives, all rig-centered (the rig
// center is the scene camera).  Plane constants p are therefore rig-centered
// regardless of the ray origin.
struct Caster {
  const SceneSpec& spec;
  std::array<RoomPlane, 6> planes;
  std::vector<FurnitureBox> boxes;
  Vec3 light = geom::normalized({0.35, -0.8, 0.45});

  explicit Caster(const SceneSpec& s) : spec(s) {
    const Vec3 c = s.cam;
    planes = {{
        {1, 1.0, -c.y, Class::kFloor, -1},
        {1, -1.0, s.room_h - c.y, Class::kCeiling, -1},
        {0, 1.0, -c.x, Class::kWall, 0},
        {0, -1.0, s.room_w - c.x, Class::kWall, 1},
        {2, 1.0, -c.z, Class::kWall, 2},
        {2, -1.0, s.room_d - c.z, Class::kWall, 3},
    }};
    boxes = s.boxes;
    for (auto& b : boxes) {
      b.lo = b.lo - c;
      b.hi = b.hi - c;
    }
  }

  // origin o and direction r are rig-centered; returns false on escape
  bool cast(const Vec3& o, const Vec3& r, Hit& hit) const {
    const double oc[3] = {o.x, o.y, o.z};
    const double rc[3] = {r.x, r.y, r.z};

    hit = Hit{};
    int hit_wall = -1;
    for (const RoomPlane& pl : planes) {
      if (std::abs(rc[pl.axis]) < 1e-15) continue;
      const double t = (pl.coord - oc[pl.axis]) / rc[pl.axis];
      if (t <= 1e-9) continue;
      if (hit.t < 0.0 || t < hit.t) {
        hit.t = t;
        hit.n = {pl.axis == 0 ? pl.sign : 0.0, pl.axis == 1 ? pl.sign : 0.0,
                 pl.axis == 2 ? pl.sign : 0.0};
        hit.p = -pl.sign * pl.coord;
        hit.cls = pl.cls;
        hit_wall = pl.wall_id;
      }
    }
    if (hit.t < 0.0) return false;

    for (const FurnitureBox& b : boxes) {
      const double lo[3] = {b.lo.x, b.lo.y, b.lo.z};
      const double hi[3] = {b.hi.x, b.hi.y, b.hi.z};
      double tmin = -1e300, tmax = 1e300;
      int axis_in = -1;
      for (int a = 0; a < 3; ++a) {
        if (std::abs(rc[a]) < 1e-15) {
          if (oc[a] < lo[a] || oc[a] > hi[a]) {
            tmin = 1e300;
            break;
          }
          continue;
        }
        double t0 = (lo[a] - oc[a]) / rc[a], t1 = (hi[a] - oc[a]) / rc[a];
        if (t0 > t1) std::swap(t0, t1);
        if (t0 > tmin) {
          tmin = t0;
          axis_in = a;
        }
        tmax = std::min(tmax, t1);
      }
      if (axis_in < 0 || tmin > tmax || tmin <= 1e-9 || tmin >= hit.t) continue;
      hit.t = tmin;
      const double sign = rc[axis_in] > 0.0 ? -1.0 : 1.0;  // entry face opposes the ray
      hit.n = {axis_in == 0 ? sign : 0.0, axis_in == 1 ? sign : 0.0, axis_in == 2 ? sign : 0.0};
      const double face_coord = rc[axis_in] > 0.0 ? lo[axis_in] : hi[axis_in];
      hit.p = -sign * face_coord;
      hit.cls = b.cls;
      hit_wall = -1;
    }

    if (hit_wall >= 0) {
      const Vec3 P = o + r * hit.t;
      const double u = (hit_wall < 2) ? P.z + spec.cam.z : P.x + spec.cam.x;
      const double v = P.y + spec.cam.y;
      for (const WallItem& item : spec.wall_items)
        if (item.wall == hit_wall && u >= item.u0 && u <= item.u1 && v >= item.v0 &&
            v <= item.v1) {
          hit.cls = item.cls;
          break;
        }
    }
    return true;
  }

  float shade(const Vec3& n) const {
    return static_cast<float>(0.35 + 0.65 * std::max(0.0, -geom::dot(n, light)));
  }
};

}  // namespace

Panorama render_panorama(const SceneSpec& spec, const cam::CameraRig& rig) {
  Panorama out = Panorama::empty(rig.face_w, rig.face_h);
  out.scene_category = spec.category;
  const int w = out.width(), h = out.height();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const Caster caster(spec);

  // throwing across an OpenMP region is not allowed; failures are collected
  // and rethrown after the loop
  std::int64_t escaped_at = -1;

  const auto render_pixel = [&](std::int64_t i) {
    const int y = static_cast<int>(i / w), x = static_cast<int>(i % w);
    const Vec3 r = cam::pano_ray(rig, x, y).r;
    Hit hit;
    if (!caster.cast({0, 0, 0}, r, hit)) {
#pragma omp critical
      if (escaped_at < 0 || i < escaped_at) escaped_at = i;
      return;
    }
    out.depth.data[i] = static_cast<float>(hit.t);
    out.pdist.data[i] = static_cast<float>(hit.p);
    out.normal.data[i] = static_cast<float>(hit.n.x);
    out.normal.data[hw + i] = static_cast<float>(hit.n.y);
    out.normal.data[2 * hw + i] = static_cast<float>(hit.n.z);
    out.semantics.data[static_cast<std::int64_t>(hit.cls) * hw + i] = 1.0f;
    const float shade = caster.shade(hit.n);
    for (int ch = 0; ch < 3; ++ch)
      out.color.data[ch * hw + i] = sem::kClassColor[hit.cls][ch] * shade;
    out.mask[i] = 1;
  };

  if (kernels::backend() == kernels::Backend::parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < hw; ++i) render_pixel(i);
  } else {
    for (std::int64_t i = 0; i < hw; ++i) render_pixel(i);
  }
  if (escaped_at >= 0) {
    std::ostringstream os;
    os << "render_panorama: ray escaped the room at pixel (y=" << escaped_at / w
       << ", x=" << escaped_at % w << ")";
    throw std::logic_error(os.str());
  }
  return out;
}

PosedView render_view(const SceneSpec& spec, int w, int h, double hfov_deg, double vfov_deg,
                      const geom::Mat3& R, const Vec3* origin_room) {
  if (w < 1 || h < 1) throw std::invalid_argument("render_view: view size must be positive");
  if (!(hfov_deg > 0.0 && hfov_deg < 180.0) || !(vfov_deg > 0.0 && vfov_deg < 180.0))
    throw std::invalid_argument("render_view: FoV must lie in (0, 180) degrees");
  PosedView view;
  view.w = w;
  view.h = h;
  view.fx = w / (2.0 * std::tan(geom::deg_to_rad(hfov_deg) / 2.0));
  view.fy = h / (2.0 * std::tan(geom::deg_to_rad(vfov_deg) / 2.0));
  view.cx = w / 2.0;
  view.cy = h / 2.0;
  view.R = R;
  view.t = origin_room ? *origin_room - spec.cam : Vec3{};
  view.depth = Tensor::zeros({1, h, w});
  view.color = Tensor::zeros({3, h, w});
  view.normal = Tensor::zeros({3, h, w});
  view.pdist = Tensor::zeros({1, h, w});
  view.semantics = Tensor::zeros({sem::kClassCount, h, w});
  const std::int64_t vhw = static_cast<std::int64_t>(h) * w;
  const Caster caster(spec);
  for (int j = 0; j < h; ++j)
    for (int i = 0; i < w; ++i) {
      const Vec3 v{(i + 0.5 - view.cx) / view.fx, (view.cy - (j + 0.5)) / view.fy, 1.0};
      const Vec3 r = R.apply(v);
      Hit hit;
      if (!caster.cast(view.t, r, hit)) {
        std::ostringstream os;
        os << "render_view: ray escaped the room at pixel (y=" << j << ", x=" << i << ")";
        throw std::logic_error(os.str());
      }
      const std::int64_t s = static_cast<std::int64_t>(j) * w + i;
      view.depth.data[s] = static_cast<float>(hit.t);  // view-frame z (ray has z=1)
      view.pdist.data[s] = static_cast<float>(hit.p);
      view.normal.data[s] = static_cast<float>(hit.n.x);
      view.normal.data[vhw + s] = static_cast<float>(hit.n.y);
      view.normal.data[2 * vhw + s] = static_cast<float>(hit.n.z);
      view.semantics.data[static_cast<std::int64_t>(hit.cls) * vhw + s] = 1.0f;
      const float shade = caster.shade(hit.n);
      for (int ch = 0; ch < 3; ++ch)
        view.color.data[ch * vhw + s] = sem::kClassColor[hit.cls][ch] * shade;
    }
  return view;
}

}  // namespace pano::sg
