#pragma once

#include "panoscene/kernels.hpp"

// Backend entry points. Both namespaces implement the same set; kernels.cpp
// dispatches on the process-wide Backend switch.

#define PANO_KERNEL_DECLS                                                                        \
  void conv2d_forward(const float* in, const float* w, const float* b, float* out,              \
                      const ConvDims& d);                                                        \
  void conv2d_backward_input(const float* gout, const float* w, float* gin, const ConvDims& d); \
  void conv2d_backward_weights(const float* gout, const float* in, float* gw, float* gb,        \
                               const ConvDims& d);                                              \
  void unary_forward(Unary f, const float* in, float* out, std::int64_t n, float slope);        \
  void unary_backward(Unary f, const float* in, const float* out, const float* gout,            \
                      float* gin, std::int64_t n, float slope);                                 \
  void dropout_forward(const float* in, float* out, std::uint8_t* kept, std::int64_t n,         \
                       float rate, std::uint64_t seed);                                         \
  void dropout_backward(const std::uint8_t* kept, const float* gout, float* gin,                \
                        std::int64_t n, float rate);                                            \
  void softmax_channels_forward(const float* in, float* out, int n, int c, std::int64_t hw);    \
  void softmax_channels_backward(const float* out, const float* gout, float* gin, int n, int c, \
                                 std::int64_t hw);                                              \
  void channel_mean_var(const float* in, int n, int c, std::int64_t hw, double* mean,           \
                        double* var);                                                           \
  void batchnorm_normalize(const float* in, const double* mean, const double* invstd,           \
                           const float* gamma, const float* beta, float* out, float* xhat,      \
                           int n, int c, std::int64_t hw);                                      \
  void batchnorm_backward(const float* xhat, const double* invstd, const float* gamma,          \
                          const float* gout, float* gin, float* ggamma, float* gbeta, int n,    \
                          int c, std::int64_t hw, bool train_mode);                             \
  void pn_points_forward(const float* normal, const float* pdist, const float* rays,            \
                         float* points, std::uint8_t* valid, std::int64_t hw, float eps);       \
  void pn_points_backward(const float* normal, const float* pdist, const float* rays,           \
                          const std::uint8_t* valid, const float* gpoints, float* gnormal,      \
                          float* gpdist, std::int64_t hw);                                      \
  void normalize3_forward(const float* in, float* out, std::int64_t hw, float eps);             \
  void normalize3_backward(const float* in, const float* out, const float* gout, float* gin,    \
                           std::int64_t hw, float eps);                                         \
  double sum_all(const float* in, std::int64_t n);                                              \
  void axpy(float a, const float* x, float* y, std::int64_t n);                                 \
  void scale(const float* in, float* out, float a, std::int64_t n);

namespace pano::kernels::serial_impl {
PANO_KERNEL_DECLS
}

namespace pano::kernels::omp_impl {
PANO_KERNEL_DECLS
}

#undef PANO_KERNEL_DECLS
