#pragma once

#include <cstdint>

// Raw compute kernels. Every kernel has two implementations with identical
// bit-level results: a serial reference (kernels_serial.cpp) and an OpenMP
// version (kernels_omp.cpp). Per-output accumulation is done in double in a
// fixed order, so the parallel results match the serial ones exactly
// regardless of thread count. The active backend is a process-wide switch;
// tests pin it, the benchmark times both.

namespace pano::kernels {

enum class Backend { serial, parallel };

Backend backend();
void set_backend(Backend b);

struct ConvDims {
  int n = 1;
  int cin = 0, hin = 0, win = 0;
  int cout = 0, kh = 0, kw = 0;
  int stride = 1, pad = 0;
  int hout = 0, wout = 0;  // filled by conv_output_dims

  std::int64_t in_numel() const { return static_cast<std::int64_t>(n) * cin * hin * win; }
  std::int64_t out_numel() const { return static_cast<std::int64_t>(n) * cout * hout * wout; }
  std::int64_t w_numel() const { return static_cast<std::int64_t>(cout) * cin * kh * kw; }
};

// floor((in + 2 pad - k)/stride) + 1 per axis; throws on nonpositive result.
ConvDims conv_output_dims(int n, int cin, int hin, int win, int cout, int kh, int kw, int stride,
                          int pad);

// weights (cout, cin, kh, kw), bias (cout) or nullptr
void conv2d_forward(const float* in, const float* w, const float* b, float* out, const ConvDims& d);
void conv2d_backward_input(const float* gout, const float* w, float* gin, const ConvDims& d);
void conv2d_backward_weights(const float* gout, const float* in, float* gw, float* gb,
                             const ConvDims& d);

// Elementwise maps. n = element count.
enum class Unary { relu, leaky_relu, tanh_fn, sigmoid };
void unary_forward(Unary f, const float* in, float* out, std::int64_t n, float slope);
// gin += gout * f'(in); f' evaluated from the forward input (and output for tanh/sigmoid).
void unary_backward(Unary f, const float* in, const float* out, const float* gout, float* gin,
                    std::int64_t n, float slope);

// Dropout with inverted scaling. keep decision is splitmix64(seed ^ index).
void dropout_forward(const float* in, float* out, std::uint8_t* kept, std::int64_t n, float rate,
                     std::uint64_t seed);
void dropout_backward(const std::uint8_t* kept, const float* gout, float* gin, std::int64_t n,
                      float rate);

// Softmax across C at every (n,h,w) site. in/out are (N,C,H,W) row-major.
void softmax_channels_forward(const float* in, float* out, int n, int c, std::int64_t hw);
void softmax_channels_backward(const float* out, const float* gout, float* gin, int n, int c,
                               std::int64_t hw);

// Per-channel batch statistics over (N,H,W); mean/var length c, var is biased.
void channel_mean_var(const float* in, int n, int c, std::int64_t hw, double* mean, double* var);
void batchnorm_normalize(const float* in, const double* mean, const double* invstd,
                         const float* gamma, const float* beta, float* out, float* xhat, int n,
                         int c, std::int64_t hw);
void batchnorm_backward(const float* xhat, const double* invstd, const float* gamma,
                        const float* gout, float* gin, float* ggamma, float* gbeta, int n, int c,
                        std::int64_t hw, bool train_mode);

// Ray/plane intersection per pixel: point = -p/(ray.n) * ray, rays (3,HW) with
// unit-free scale (face z = 1 before yaw rotation). valid = |ray.n| >= eps.
void pn_points_forward(const float* normal, const float* pdist, const float* rays, float* points,
                       std::uint8_t* valid, std::int64_t hw, float eps);
void pn_points_backward(const float* normal, const float* pdist, const float* rays,
                        const std::uint8_t* valid, const float* gpoints, float* gnormal,
                        float* gpdist, std::int64_t hw);

// y = x / max(||x||, eps) over 3-vectors stored channel-planar (3,HW).
void normalize3_forward(const float* in, float* out, std::int64_t hw, float eps);
void normalize3_backward(const float* in, const float* out, const float* gout, float* gin,
                         std::int64_t hw, float eps);

// Deterministic full reduction: fixed-size chunks summed in double, chunk
// partials combined in index order.
double sum_all(const float* in, std::int64_t n);

void axpy(float a, const float* x, float* y, std::int64_t n);  // y += a*x
void scale(const float* in, float* out, float a, std::int64_t n);

int max_threads();

}  // namespace pano::kernels
