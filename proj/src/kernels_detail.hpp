#pragma once

#include <cmath>
#include <cstdint>

#include "panoscene/kernels.hpp"
#include "panoscene/rng.hpp"

// Scalar pieces shared by the serial and OpenMP kernel translation units.
// Both backends must produce bit-identical outputs, so anything beyond plain
// loop structure lives here.

namespace pano::kernels::detail {

inline float unary_fwd(Unary f, float x, float slope) {
  switch (f) {
    case Unary::relu:
      return x > 0.0f ? x : 0.0f;
    case Unary::leaky_relu:
      return x > 0.0f ? x : slope * x;
    case Unary::tanh_fn:
      return std::tanh(x);
    case Unary::sigmoid:
      return 1.0f / (1.0f + std::exp(-x));
  }
  return 0.0f;
}

inline float unary_deriv(Unary f, float x, float y, float slope) {
  switch (f) {
    case Unary::relu:
      return x > 0.0f ? 1.0f : 0.0f;
    case Unary::leaky_relu:
      return x > 0.0f ? 1.0f : slope;
    case Unary::tanh_fn:
      return 1.0f - y * y;
    case Unary::sigmoid:
      return y * (1.0f - y);
  }
  return 0.0f;
}

inline bool dropout_keep(std::uint64_t seed, std::int64_t i, float rate) {
  return u64_to_unit(splitmix64(seed ^ static_cast<std::uint64_t>(i))) >= rate;
}

constexpr std::int64_t kSumChunk = 4096;

}  // namespace pano::kernels::detail
