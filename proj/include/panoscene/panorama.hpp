#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "panoscene/camera.hpp"
#include "panoscene/palette.hpp"
#include "panoscene/rng.hpp"
#include "panoscene/tensor.hpp"

namespace pano {

// Whole-room sky-box panorama: 4 faces of W x H concatenated horizontally
// into an (H, 4W) strip.  Channels are channel-planar (C, H, 4W).  Normals
// are stored in the rig world frame; depth is the face-frame z coordinate;
// pdist is the plane-equation constant p with n·P + p = 0 in rig-centered
// world coordinates.  Channels are zero-filled outside the observed mask.
struct Panorama {
  int face_w = 0;
  int face_h = 0;
  Tensor color;      // (3, H, 4W)
  Tensor depth;      // (1, H, 4W)
  Tensor normal;     // (3, H, 4W)
  Tensor pdist;      // (1, H, 4W)
  Tensor semantics;  // (13, H, 4W)
  std::vector<std::uint8_t> mask;  // H*4W observed flags
  int scene_category = 0;
  std::map<std::string, Tensor> extra;  // unknown channels, preserved verbatim

  int width() const { return 4 * face_w; }
  int height() const { return face_h; }
  std::int64_t pixel_count() const { return static_cast<std::int64_t>(width()) * face_h; }
  std::int64_t at(int y, int x) const { return static_cast<std::int64_t>(y) * width() + x; }

  static Panorama empty(int face_w, int face_h);
};

// throws std::runtime_error naming the first offending pixel/channel
void validate(const Panorama& pano);

// Rotates the panorama by `faces` quarter turns: output face f shows what
// face f+faces showed, and world-frame vector channels (normals) are rotated
// by the matching yaw so the result is again a self-consistent panorama.
// Extra channels are treated as scalars (columns shift, values untouched).
Panorama circular_shift(const Panorama& pano, int faces);

// column mask of rays whose yaw lies within ±hfov/2 of center_yaw
std::vector<std::uint8_t> fov_mask(const cam::CameraRig& rig, double hfov_deg,
                                   double center_yaw_deg);

// Per-stream observability: geometry channels (depth/normal/pdist/semantics)
// and color can be observed independently (the rgbpano presets observe color
// everywhere with little or no geometry).
struct ObservationMask {
  std::vector<std::uint8_t> geom;
  std::vector<std::uint8_t> color;
};

// presets: middle1, middle3, top6, bottom6, middle6, rgbpano, rgbpano+1,
// random.  Only `random` consumes the rng.
ObservationMask config_mask(const cam::CameraRig& rig, const std::string& preset, Rng& rng);

double coverage(const std::vector<std::uint8_t>& mask);

// zero-fills geometry channels outside om.geom and color outside om.color;
// the result's mask is om.geom (geometry observability)
Panorama apply_mask(const Panorama& pano, const ObservationMask& om);

// A posed perspective view for reprojection.  R maps camera frame to the rig
// world frame, t is the camera center in rig-centered coordinates.  The
// normal channel, when present, is already in the rig world frame.  depth is
// required; other channels are optional (numel 0 when absent).
struct PosedView {
  int w = 0, h = 0;
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  geom::Mat3 R;
  geom::Vec3 t;
  Tensor depth;      // (1, h, w)
  Tensor color;      // (3, h, w) optional
  Tensor normal;     // (3, h, w) optional
  Tensor pdist;      // (1, h, w) optional
  Tensor semantics;  // (13, h, w) optional
};

// Forward-splats every view sample into the panorama with z-buffering
// (smaller face-frame depth wins).  When a view carries plane channels the
// splatted depth is re-derived by intersecting the panorama ray with that
// sample's plane, which removes nearest-neighbor depth quantization on
// piecewise-planar scenes.
Panorama project_views(const std::vector<PosedView>& views, const cam::CameraRig& rig);

}  // namespace pano
