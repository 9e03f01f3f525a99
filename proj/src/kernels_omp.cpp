// OpenMP kernels. Each output element is computed by exactly the same scalar
// expression and accumulation order as in kernels_serial.cpp; parallelism only
// distributes independent output elements across threads, so results are
// bit-identical to the serial backend for any thread count.

#include <algorithm>
#include <cmath>
#include <vector>

#include "kernels_detail.hpp"
#include "panoscene/kernels.hpp"

namespace pano::kernels::omp_impl {

using detail::kSumChunk;

void conv2d_forward(const float* in, const float* w, const float* b, float* out,
                    const ConvDims& d) {
  const std::int64_t in_chw = static_cast<std::int64_t>(d.cin) * d.hin * d.win;
  const std::int64_t out_chw = static_cast<std::int64_t>(d.cout) * d.hout * d.wout;
  const std::int64_t outer = static_cast<std::int64_t>(d.n) * d.cout * d.hout;
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < outer; ++idx) {
    const int ho = static_cast<int>(idx % d.hout);
    const int co = static_cast<int>((idx / d.hout) % d.cout);
    const int n = static_cast<int>(idx / (static_cast<std::int64_t>(d.hout) * d.cout));
    for (int wo = 0; wo < d.wout; ++wo) {
      double acc = b ? static_cast<double>(b[co]) : 0.0;
      for (int ci = 0; ci < d.cin; ++ci) {
        for (int i = 0; i < d.kh; ++i) {
          const int hi = ho * d.stride - d.pad + i;
          if (hi < 0 || hi >= d.hin) continue;
          const float* in_row =
              in + n * in_chw + (static_cast<std::int64_t>(ci) * d.hin + hi) * d.win;
          const float* w_row =
              w + ((static_cast<std::int64_t>(co) * d.cin + ci) * d.kh + i) * d.kw;
          for (int j = 0; j < d.kw; ++j) {
            const int wi = wo * d.stride - d.pad + j;
            if (wi < 0 || wi >= d.win) continue;
            acc += static_cast<double>(in_row[wi]) * static_cast<double>(w_row[j]);
          }
        }
      }
      out[n * out_chw + (static_cast<std::int64_t>(co) * d.hout + ho) * d.wout + wo] =
          static_cast<float>(acc);
    }
  }
}

void conv2d_backward_input(const float* gout, const float* w, float* gin, const ConvDims& d) {
  const std::int64_t in_chw = static_cast<std::int64_t>(d.cin) * d.hin * d.win;
  const std::int64_t out_chw = static_cast<std::int64_t>(d.cout) * d.hout * d.wout;
  const std::int64_t outer = static_cast<std::int64_t>(d.n) * d.cin * d.hin;
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < outer; ++idx) {
    const int hi = static_cast<int>(idx % d.hin);
    const int ci = static_cast<int>((idx / d.hin) % d.cin);
    const int n = static_cast<int>(idx / (static_cast<std::int64_t>(d.hin) * d.cin));
    for (int wi = 0; wi < d.win; ++wi) {
      double acc = 0.0;
      for (int i = 0; i < d.kh; ++i) {
        const int th = hi + d.pad - i;
        if (th < 0 || th % d.stride != 0) continue;
        const int ho = th / d.stride;
        if (ho >= d.hout) continue;
        for (int j = 0; j < d.kw; ++j) {
          const int tw = wi + d.pad - j;
          if (tw < 0 || tw % d.stride != 0) continue;
          const int wo = tw / d.stride;
          if (wo >= d.wout) continue;
          for (int co = 0; co < d.cout; ++co) {
            const float g =
                gout[n * out_chw + (static_cast<std::int64_t>(co) * d.hout + ho) * d.wout + wo];
            const float wv =
                w[((static_cast<std::int64_t>(co) * d.cin + ci) * d.kh + i) * d.kw + j];
            acc += static_cast<double>(g) * static_cast<double>(wv);
          }
        }
      }
      gin[n * in_chw + (static_cast<std::int64_t>(ci) * d.hin + hi) * d.win + wi] +=
          static_cast<float>(acc);
    }
  }
}

void conv2d_backward_weights(const float* gout, const float* in, float* gw, float* gb,
                             const ConvDims& d) {
  const std::int64_t in_chw = static_cast<std::int64_t>(d.cin) * d.hin * d.win;
  const std::int64_t out_chw = static_cast<std::int64_t>(d.cout) * d.hout * d.wout;
#pragma omp parallel for schedule(static)
  for (int co = 0; co < d.cout; ++co) {
    for (int ci = 0; ci < d.cin; ++ci) {
      for (int i = 0; i < d.kh; ++i) {
        for (int j = 0; j < d.kw; ++j) {
          double acc = 0.0;
          for (int n = 0; n < d.n; ++n) {
            for (int ho = 0; ho < d.hout; ++ho) {
              const int hi = ho * d.stride - d.pad + i;
              if (hi < 0 || hi >= d.hin) continue;
              for (int wo = 0; wo < d.wout; ++wo) {
                const int wi = wo * d.stride - d.pad + j;
                if (wi < 0 || wi >= d.win) continue;
                const float g = gout[n * out_chw +
                                     (static_cast<std::int64_t>(co) * d.hout + ho) * d.wout + wo];
                const float x =
                    in[n * in_chw + (static_cast<std::int64_t>(ci) * d.hin + hi) * d.win + wi];
                acc += static_cast<double>(g) * static_cast<double>(x);
              }
            }
          }
          gw[((static_cast<std::int64_t>(co) * d.cin + ci) * d.kh + i) * d.kw + j] +=
              static_cast<float>(acc);
        }
      }
    }
    if (gb) {
      double acc = 0.0;
      for (int n = 0; n < d.n; ++n) {
        const float* g = gout + n * out_chw + static_cast<std::int64_t>(co) * d.hout * d.wout;
        for (std::int64_t k = 0; k < static_cast<std::int64_t>(d.hout) * d.wout; ++k) {
          acc += static_cast<double>(g[k]);
        }
      }
      gb[co] += static_cast<float>(acc);
    }
  }
}

void unary_forward(Unary f, const float* in, float* out, std::int64_t n, float slope) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[i] = detail::unary_fwd(f, in[i], slope);
}

void unary_backward(Unary f, const float* in, const float* out, const float* gout, float* gin,
                    std::int64_t n, float slope) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    gin[i] += gout[i] * detail::unary_deriv(f, in[i], out[i], slope);
  }
}

void dropout_forward(const float* in, float* out, std::uint8_t* kept, std::int64_t n, float rate,
                     std::uint64_t seed) {
  const float inv_keep = 1.0f / (1.0f - rate);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const bool keep = detail::dropout_keep(seed, i, rate);
    kept[i] = keep ? 1 : 0;
    out[i] = keep ? in[i] * inv_keep : 0.0f;
  }
}

void dropout_backward(const std::uint8_t* kept, const float* gout, float* gin, std::int64_t n,
                      float rate) {
  const float inv_keep = 1.0f / (1.0f - rate);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    if (kept[i]) gin[i] += gout[i] * inv_keep;
  }
}

void softmax_channels_forward(const float* in, float* out, int n, int c, std::int64_t hw) {
  const std::int64_t sites = static_cast<std::int64_t>(n) * hw;
#pragma omp parallel for schedule(static)
  for (std::int64_t site = 0; site < sites; ++site) {
    const std::int64_t b = site / hw;
    const std::int64_t s = site % hw;
    const std::int64_t base = b * c * hw + s;
    float mx = in[base];
    for (int k = 1; k < c; ++k) mx = std::max(mx, in[base + k * hw]);
    double denom = 0.0;
    for (int k = 0; k < c; ++k) {
      const double e = std::exp(static_cast<double>(in[base + k * hw] - mx));
      out[base + k * hw] = static_cast<float>(e);
      denom += e;
    }
    const double inv = 1.0 / denom;
    for (int k = 0; k < c; ++k) {
      out[base + k * hw] = static_cast<float>(out[base + k * hw] * inv);
    }
  }
}

void softmax_channels_backward(const float* out, const float* gout, float* gin, int n, int c,
                               std::int64_t hw) {
  const std::int64_t sites = static_cast<std::int64_t>(n) * hw;
#pragma omp parallel for schedule(static)
  for (std::int64_t site = 0; site < sites; ++site) {
    const std::int64_t b = site / hw;
    const std::int64_t s = site % hw;
    const std::int64_t base = b * c * hw + s;
    double dot = 0.0;
    for (int k = 0; k < c; ++k) {
      dot += static_cast<double>(gout[base + k * hw]) * static_cast<double>(out[base + k * hw]);
    }
    for (int k = 0; k < c; ++k) {
      gin[base + k * hw] += static_cast<float>(
          static_cast<double>(out[base + k * hw]) *
          (static_cast<double>(gout[base + k * hw]) - dot));
    }
  }
}

void channel_mean_var(const float* in, int n, int c, std::int64_t hw, double* mean, double* var) {
  const std::int64_t m = static_cast<std::int64_t>(n) * hw;
#pragma omp parallel for schedule(static)
  for (int k = 0; k < c; ++k) {
    double s = 0.0;
    for (int b = 0; b < n; ++b) {
      const float* p = in + (static_cast<std::int64_t>(b) * c + k) * hw;
      for (std::int64_t i = 0; i < hw; ++i) s += p[i];
    }
    const double mu = s / static_cast<double>(m);
    double sq = 0.0;
    for (int b = 0; b < n; ++b) {
      const float* p = in + (static_cast<std::int64_t>(b) * c + k) * hw;
      for (std::int64_t i = 0; i < hw; ++i) {
        const double dv = p[i] - mu;
        sq += dv * dv;
      }
    }
    mean[k] = mu;
    var[k] = sq / static_cast<double>(m);
  }
}

void batchnorm_normalize(const float* in, const double* mean, const double* invstd,
                         const float* gamma, const float* beta, float* out, float* xhat, int n,
                         int c, std::int64_t hw) {
  const std::int64_t rows = static_cast<std::int64_t>(n) * c;
#pragma omp parallel for schedule(static)
  for (std::int64_t row = 0; row < rows; ++row) {
    const int k = static_cast<int>(row % c);
    const double mu = mean[k];
    const double is = invstd[k];
    const float g = gamma[k];
    const float bt = beta[k];
    const std::int64_t base = row * hw;
    for (std::int64_t i = 0; i < hw; ++i) {
      const float xh = static_cast<float>((in[base + i] - mu) * is);
      xhat[base + i] = xh;
      out[base + i] = g * xh + bt;
    }
  }
}

void batchnorm_backward(const float* xhat, const double* invstd, const float* gamma,
                        const float* gout, float* gin, float* ggamma, float* gbeta, int n, int c,
                        std::int64_t hw, bool train_mode) {
  const double m = static_cast<double>(n) * static_cast<double>(hw);
#pragma omp parallel for schedule(static)
  for (int k = 0; k < c; ++k) {
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (int b = 0; b < n; ++b) {
      const std::int64_t base = (static_cast<std::int64_t>(b) * c + k) * hw;
      for (std::int64_t i = 0; i < hw; ++i) {
        sum_g += gout[base + i];
        sum_gx += static_cast<double>(gout[base + i]) * static_cast<double>(xhat[base + i]);
      }
    }
    if (ggamma) ggamma[k] += static_cast<float>(sum_gx);
    if (gbeta) gbeta[k] += static_cast<float>(sum_g);
    const double gs = static_cast<double>(gamma[k]) * invstd[k];
    for (int b = 0; b < n; ++b) {
      const std::int64_t base = (static_cast<std::int64_t>(b) * c + k) * hw;
      for (std::int64_t i = 0; i < hw; ++i) {
        double t = gout[base + i];
        if (train_mode) t -= sum_g / m + static_cast<double>(xhat[base + i]) * (sum_gx / m);
        gin[base + i] += static_cast<float>(gs * t);
      }
    }
  }
}

void pn_points_forward(const float* normal, const float* pdist, const float* rays, float* points,
                       std::uint8_t* valid, std::int64_t hw, float eps) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < hw; ++i) {
    const double rx = rays[i], ry = rays[hw + i], rz = rays[2 * hw + i];
    const double nx = normal[i], ny = normal[hw + i], nz = normal[2 * hw + i];
    const double dot = rx * nx + ry * ny + rz * nz;
    if (std::abs(dot) < eps) {
      valid[i] = 0;
      points[i] = points[hw + i] = points[2 * hw + i] = 0.0f;
      continue;
    }
    valid[i] = 1;
    const double t = -static_cast<double>(pdist[i]) / dot;
    points[i] = static_cast<float>(t * rx);
    points[hw + i] = static_cast<float>(t * ry);
    points[2 * hw + i] = static_cast<float>(t * rz);
  }
}

void pn_points_backward(const float* normal, const float* pdist, const float* rays,
                        const std::uint8_t* valid, const float* gpoints, float* gnormal,
                        float* gpdist, std::int64_t hw) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < hw; ++i) {
    if (!valid[i]) continue;
    const double rx = rays[i], ry = rays[hw + i], rz = rays[2 * hw + i];
    const double nx = normal[i], ny = normal[hw + i], nz = normal[2 * hw + i];
    const double dot = rx * nx + ry * ny + rz * nz;
    const double gx = gpoints[i], gy = gpoints[hw + i], gz = gpoints[2 * hw + i];
    const double gdotr = gx * rx + gy * ry + gz * rz;
    gpdist[i] += static_cast<float>(-gdotr / dot);
    const double coef = static_cast<double>(pdist[i]) / (dot * dot) * gdotr;
    gnormal[i] += static_cast<float>(coef * rx);
    gnormal[hw + i] += static_cast<float>(coef * ry);
    gnormal[2 * hw + i] += static_cast<float>(coef * rz);
  }
}

void normalize3_forward(const float* in, float* out, std::int64_t hw, float eps) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < hw; ++i) {
    const double x = in[i], y = in[hw + i], z = in[2 * hw + i];
    const double norm = std::sqrt(x * x + y * y + z * z);
    const double inv = 1.0 / std::max(norm, static_cast<double>(eps));
    out[i] = static_cast<float>(x * inv);
    out[hw + i] = static_cast<float>(y * inv);
    out[2 * hw + i] = static_cast<float>(z * inv);
  }
}

void normalize3_backward(const float* in, const float* out, const float* gout, float* gin,
                         std::int64_t hw, float eps) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < hw; ++i) {
    const double x = in[i], y = in[hw + i], z = in[2 * hw + i];
    const double norm = std::sqrt(x * x + y * y + z * z);
    const double inv = 1.0 / std::max(norm, static_cast<double>(eps));
    const double gx = gout[i], gy = gout[hw + i], gz = gout[2 * hw + i];
    if (norm > eps) {
      const double ox = out[i], oy = out[hw + i], oz = out[2 * hw + i];
      const double gdoto = gx * ox + gy * oy + gz * oz;
      gin[i] += static_cast<float>((gx - ox * gdoto) * inv);
      gin[hw + i] += static_cast<float>((gy - oy * gdoto) * inv);
      gin[2 * hw + i] += static_cast<float>((gz - oz * gdoto) * inv);
    } else {
      gin[i] += static_cast<float>(gx * inv);
      gin[hw + i] += static_cast<float>(gy * inv);
      gin[2 * hw + i] += static_cast<float>(gz * inv);
    }
  }
}

double sum_all(const float* in, std::int64_t n) {
  const std::int64_t chunks = (n + kSumChunk - 1) / kSumChunk;
  std::vector<double> partial(static_cast<size_t>(chunks), 0.0);
#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < chunks; ++c) {
    const std::int64_t lo = c * kSumChunk;
    const std::int64_t hi = std::min(n, lo + kSumChunk);
    double s = 0.0;
    for (std::int64_t i = lo; i < hi; ++i) s += in[i];
    partial[static_cast<size_t>(c)] = s;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

void axpy(float a, const float* x, float* y, std::int64_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale(const float* in, float* out, float a, std::int64_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[i] = a * in[i];
}

}  // namespace pano::kernels::omp_impl
