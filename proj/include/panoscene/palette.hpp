#pragma once

#include <array>

// Fixed semantic vocabulary.  Class indices are stable across the whole
// system: datasets, network outputs, metrics, and serialized containers all
// use this order.
namespace pano::sem {

inline constexpr int kClassCount = 13;
inline constexpr int kSceneCount = 8;

enum Class : int {
  kCeiling = 0,
  kFloor = 1,
  kWall = 2,
  kWindow = 3,
  kChair = 4,
  kBed = 5,
  kSofa = 6,
  kTable = 7,
  kTv = 8,
  kDoor = 9,
  kCabinet = 10,
  kFurn = 11,
  kObjs = 12,
};

inline constexpr std::array<const char*, kClassCount> kClassNames = {
    "ceiling", "floor", "wall", "window", "chair", "bed", "sofa",
    "table",   "tv",    "door", "cabinet", "furn",  "objs"};

inline constexpr std::array<const char*, kSceneCount> kSceneNames = {
    "bedroom", "living_room", "dining_room", "kitchen", "bathroom", "office", "hallway", "other"};

// base albedo per class for the flat-shaded renderer and image export
inline constexpr std::array<std::array<float, 3>, kClassCount> kClassColor = {{
    {0.92f, 0.92f, 0.88f},  // ceiling
    {0.55f, 0.42f, 0.28f},  // floor
    {0.75f, 0.78f, 0.82f},  // wall
    {0.45f, 0.75f, 0.95f},  // window
    {0.85f, 0.55f, 0.20f},  // chair
    {0.80f, 0.25f, 0.35f},  // bed
    {0.35f, 0.60f, 0.30f},  // sofa
    {0.60f, 0.45f, 0.70f},  // table
    {0.15f, 0.15f, 0.20f},  // tv
    {0.70f, 0.55f, 0.35f},  // door
    {0.30f, 0.45f, 0.60f},  // cabinet
    {0.88f, 0.75f, 0.45f},  // furn
    {0.55f, 0.80f, 0.75f},  // objs
}};

}  // namespace pano::sem
