#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "panoscene/palette.hpp"
#include "panoscene/panorama.hpp"

// Non-learned comparison predictors: per-pixel average models (global and per
// scene category) and nearest-neighbor retrieval on pooled image features.
namespace pano::baseline {

// Per-pixel arithmetic mean of every channel over a training set.  Sums
// accumulate in double, image by image in training order, and round to f32
// once, so the result is reproducible bit for bit by any independent mean
// that follows the same order.  The mean normal map is renormalized to unit
// length afterwards; the mean semantic map sums to 1 per pixel up to that
// single rounding.
struct AvgModel {
  Tensor color;      // (3, H, W)
  Tensor depth;      // (1, H, W)
  Tensor normal;     // (3, H, W), renormalized
  Tensor pdist;      // (1, H, W)
  Tensor semantics;  // (13, H, W)
  std::int64_t count = 0;
  std::array<std::int64_t, sem::kSceneCount> hist{};  // training categories

  // Constant prediction with a fully observed mask; scene_category is the
  // most frequent training category (ties break toward the lower id).
  Panorama to_panorama() const;
};

// throws std::invalid_argument on an empty set or mismatched dimensions
AvgModel fit_avg(const std::vector<Panorama>& train);

// One AvgModel per scene category, selected at prediction time by the ground
// truth category of the query.  A category with no training images falls
// back to the global average; `fallback` records where that happened and a
// warning goes to stderr.
struct AvgTypeModel {
  std::array<AvgModel, sem::kSceneCount> per_category;
  std::array<bool, sem::kSceneCount> fallback{};

  // throws std::out_of_range on an invalid category id
  const AvgModel& for_category(int category) const;
};

AvgTypeModel fit_avg_type(const std::vector<Panorama>& train);

// Maps the observed region of a panorama to a fixed-length vector.  The
// length must not depend on the panorama passed in.
using FeatureFn =
    std::function<std::vector<float>(const Panorama&, const std::vector<std::uint8_t>&)>;

// Default retrieval features: a 16x10 average pool per face of color and
// depth over observed pixels.  Cells with no observed pixel take the
// channel's mean over the whole observed region (zero when nothing is
// observed).  Length is fixed at 4 faces * 16 * 10 cells * 4 channels.
std::vector<float> pooled_features(const Panorama& pano,
                                   const std::vector<std::uint8_t>& observed);

// Index of the training panorama minimizing L2 feature distance to the
// query.  Both sides are featurized under the query's observed mask, so a
// query drawn from the training set retrieves itself at distance zero.  Ties
// break toward the lowest index.  Throws std::invalid_argument on an empty
// training set.
std::size_t nn_index(const Panorama& query, const std::vector<std::uint8_t>& observed,
                     const std::vector<Panorama>& train, const FeatureFn& fn = pooled_features);

// The retrieved training panorama itself serves as the prediction.
Panorama predict_nn(const Panorama& query, const std::vector<std::uint8_t>& observed,
                    const std::vector<Panorama>& train, const FeatureFn& fn = pooled_features);

}  // namespace pano::baseline
