#pragma once

#include <cstdint>
#include <vector>

#include "panoscene/camera.hpp"
#include "panoscene/panorama.hpp"
#include "panoscene/rng.hpp"

// Procedural indoor-scene generator with an analytic ray-cast renderer.
// Scenes are axis-aligned: a box room with floor at y=0, floor-standing
// furniture boxes, and zero-thickness wall-mounted rectangles.  Ground truth
// (depth, normals, plane equations, semantics) is exact by construction.
namespace pano::sg {

using geom::Vec3;

struct FurnitureBox {
  Vec3 lo, hi;  // room coordinates, meters
  int cls = 0;
};

// wall 0: x=0 (normal +x), 1: x=room_w (-x), 2: z=0 (+z), 3: z=room_d (-z);
// u runs along the wall's horizontal axis, v is height above the floor
struct WallItem {
  int wall = 0;
  double u0 = 0, v0 = 0, u1 = 0, v1 = 0;
  int cls = 0;
};

struct SceneSpec {
  double room_w = 0, room_d = 0, room_h = 0;
  Vec3 cam;  // camera position in room coordinates
  std::vector<FurnitureBox> boxes;
  std::vector<WallItem> wall_items;
  int category = 0;
  std::uint64_t seed = 0;  // recorded for diagnostics only
};

// Category-conditioned sampler, deterministic per seed.  Rejection sampling
// guarantees non-overlapping furniture and a camera with free clearance;
// throws with a seed diagnostic after 1000 failed layout attempts.
SceneSpec sample_scene(std::uint64_t seed, int category);

// Exact nearest-intersection renderer; all channels filled, mask all true.
// Throws std::logic_error if a ray escapes the room (geometry bug).
Panorama render_panorama(const SceneSpec& spec, const cam::CameraRig& rig);

// Renders a single perspective view with rotation R (view frame -> rig world)
// from `origin` in room coordinates (defaults to the camera of `spec` when
// origin_room is nullptr).  The returned view carries world-frame normals and
// rig-centered plane constants, ready for project_views.
PosedView render_view(const SceneSpec& spec, int w, int h, double hfov_deg, double vfov_deg,
                      const geom::Mat3& R, const Vec3* origin_room = nullptr);

}  // namespace pano::sg
