#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "panoscene/rng.hpp"
#include "panoscene/tensor.hpp"

namespace pano::testutil {

inline void fill_uniform(Tensor& t, Rng& rng, float lo, float hi) {
  std::uniform_real_distribution<float> dist(lo, hi);
  for (auto& v : t.data) v = dist(rng);
}

inline Tensor random_tensor(const std::vector<int>& shape, Rng& rng, float lo = -1.0f,
                            float hi = 1.0f) {
  Tensor t(shape);
  fill_uniform(t, rng, lo, hi);
  return t;
}

inline double dot_double(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    s += static_cast<double>(a.data[i]) * static_cast<double>(b.data[i]);
  }
  return s;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]));
    if (d > m) m = d;
  }
  return m;
}

// Naive reference convolution, all accumulation in double. Used as the oracle
// for the production conv kernels.
inline Tensor conv2d_naive(const Tensor& in, const Tensor& w, const Tensor& b, int stride,
                           int pad) {
  const bool batched = in.rank() == 4;
  const int n = batched ? in.shape[0] : 1;
  const int cin = batched ? in.shape[1] : in.shape[0];
  const int hin = batched ? in.shape[2] : in.shape[1];
  const int win = batched ? in.shape[3] : in.shape[2];
  const int cout = w.shape[0];
  const int kh = w.shape[2];
  const int kw = w.shape[3];
  const int hout = (hin + 2 * pad - kh) / stride + 1;
  const int wout = (win + 2 * pad - kw) / stride + 1;
  Tensor out(batched ? std::vector<int>{n, cout, hout, wout}
                     : std::vector<int>{cout, hout, wout});
  for (int bn = 0; bn < n; ++bn) {
    for (int co = 0; co < cout; ++co) {
      for (int ho = 0; ho < hout; ++ho) {
        for (int wo = 0; wo < wout; ++wo) {
          double acc = b.numel() > 0 ? static_cast<double>(b.data[co]) : 0.0;
          for (int ci = 0; ci < cin; ++ci) {
            for (int i = 0; i < kh; ++i) {
              for (int j = 0; j < kw; ++j) {
                const int hi = ho * stride - pad + i;
                const int wi = wo * stride - pad + j;
                if (hi < 0 || hi >= hin || wi < 0 || wi >= win) continue;
                const std::int64_t xi =
                    ((static_cast<std::int64_t>(bn) * cin + ci) * hin + hi) * win + wi;
                const std::int64_t wi_idx =
                    ((static_cast<std::int64_t>(co) * cin + ci) * kh + i) * kw + j;
                acc += static_cast<double>(in.data[xi]) * static_cast<double>(w.data[wi_idx]);
              }
            }
          }
          out.data[((static_cast<std::int64_t>(bn) * cout + co) * hout + ho) * wout + wo] =
              static_cast<float>(acc);
        }
      }
    }
  }
  return out;
}

}  // namespace pano::testutil
