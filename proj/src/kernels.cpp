#include "panoscene/kernels.hpp"

#include <sstream>
#include <stdexcept>

#include "kernels_backends.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pano::kernels {

namespace {
Backend g_backend = Backend::parallel;
}

Backend backend() { return g_backend; }
void set_backend(Backend b) { g_backend = b; }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

ConvDims conv_output_dims(int n, int cin, int hin, int win, int cout, int kh, int kw, int stride,
                          int pad) {
  ConvDims d;
  d.n = n;
  d.cin = cin;
  d.hin = hin;
  d.win = win;
  d.cout = cout;
  d.kh = kh;
  d.kw = kw;
  d.stride = stride;
  d.pad = pad;
  if (n <= 0 || cin <= 0 || hin <= 0 || win <= 0 || cout <= 0 || kh <= 0 || kw <= 0 ||
      stride <= 0 || pad < 0) {
    std::ostringstream os;
    os << "conv_output_dims: bad arguments n=" << n << " cin=" << cin << " hin=" << hin
       << " win=" << win << " cout=" << cout << " kh=" << kh << " kw=" << kw
       << " stride=" << stride << " pad=" << pad;
    throw std::invalid_argument(os.str());
  }
  d.hout = (hin + 2 * pad - kh) / stride + 1;
  d.wout = (win + 2 * pad - kw) / stride + 1;
  if (hin + 2 * pad < kh || win + 2 * pad < kw || d.hout <= 0 || d.wout <= 0) {
    std::ostringstream os;
    os << "conv_output_dims: empty output for input " << hin << "x" << win << " kernel " << kh
       << "x" << kw << " stride " << stride << " pad " << pad;
    throw std::invalid_argument(os.str());
  }
  return d;
}

#define PANO_DISPATCH(call)                  \
  if (g_backend == Backend::serial) {        \
    return serial_impl::call;                \
  }                                          \
  return omp_impl::call

void conv2d_forward(const float* in, const float* w, const float* b, float* out,
                    const ConvDims& d) {
  PANO_DISPATCH(conv2d_forward(in, w, b, out, d));
}

void conv2d_backward_input(const float* gout, const float* w, float* gin, const ConvDims& d) {
  PANO_DISPATCH(conv2d_backward_input(gout, w, gin, d));
}

void conv2d_backward_weights(const float* gout, const float* in, float* gw, float* gb,
                             const ConvDims& d) {
  PANO_DISPATCH(conv2d_backward_weights(gout, in, gw, gb, d));
}

void unary_forward(Unary f, const float* in, float* out, std::int64_t n, float slope) {
  PANO_DISPATCH(unary_forward(f, in, out, n, slope));
}

void unary_backward(Unary f, const float* in, const float* out, const float* gout, float* gin,
                    std::int64_t n, float slope) {
  PANO_DISPATCH(unary_backward(f, in, out, gout, gin, n, slope));
}

void dropout_forward(const float* in, float* out, std::uint8_t* kept, std::int64_t n, float rate,
                     std::uint64_t seed) {
  PANO_DISPATCH(dropout_forward(in, out, kept, n, rate, seed));
}

void dropout_backward(const std::uint8_t* kept, const float* gout, float* gin, std::int64_t n,
                      float rate) {
  PANO_DISPATCH(dropout_backward(kept, gout, gin, n, rate));
}

void softmax_channels_forward(const float* in, float* out, int n, int c, std::int64_t hw) {
  PANO_DISPATCH(softmax_channels_forward(in, out, n, c, hw));
}

void softmax_channels_backward(const float* out, const float* gout, float* gin, int n, int c,
                               std::int64_t hw) {
  PANO_DISPATCH(softmax_channels_backward(out, gout, gin, n, c, hw));
}

void channel_mean_var(const float* in, int n, int c, std::int64_t hw, double* mean, double* var) {
  PANO_DISPATCH(channel_mean_var(in, n, c, hw, mean, var));
}

void batchnorm_normalize(const float* in, const double* mean, const double* invstd,
                         const float* gamma, const float* beta, float* out, float* xhat, int n,
                         int c, std::int64_t hw) {
  PANO_DISPATCH(batchnorm_normalize(in, mean, invstd, gamma, beta, out, xhat, n, c, hw));
}

void batchnorm_backward(const float* xhat, const double* invstd, const float* gamma,
                        const float* gout, float* gin, float* ggamma, float* gbeta, int n, int c,
                        std::int64_t hw, bool train_mode) {
  PANO_DISPATCH(
      batchnorm_backward(xhat, invstd, gamma, gout, gin, ggamma, gbeta, n, c, hw, train_mode));
}

void pn_points_forward(const float* normal, const float* pdist, const float* rays, float* points,
                       std::uint8_t* valid, std::int64_t hw, float eps) {
  PANO_DISPATCH(pn_points_forward(normal, pdist, rays, points, valid, hw, eps));
}

void pn_points_backward(const float* normal, const float* pdist, const float* rays,
                        const std::uint8_t* valid, const float* gpoints, float* gnormal,
                        float* gpdist, std::int64_t hw) {
  PANO_DISPATCH(pn_points_backward(normal, pdist, rays, valid, gpoints, gnormal, gpdist, hw));
}

void normalize3_forward(const float* in, float* out, std::int64_t hw, float eps) {
  PANO_DISPATCH(normalize3_forward(in, out, hw, eps));
}

void normalize3_backward(const float* in, const float* out, const float* gout, float* gin,
                         std::int64_t hw, float eps) {
  PANO_DISPATCH(normalize3_backward(in, out, gout, gin, hw, eps));
}

double sum_all(const float* in, std::int64_t n) { PANO_DISPATCH(sum_all(in, n)); }

void axpy(float a, const float* x, float* y, std::int64_t n) { PANO_DISPATCH(axpy(a, x, y, n)); }

void scale(const float* in, float* out, float a, std::int64_t n) {
  PANO_DISPATCH(scale(in, out, a, n));
}

#undef PANO_DISPATCH

}  // namespace pano::kernels
