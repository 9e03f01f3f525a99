#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "panoscene/tensor.hpp"

// Tape-based reverse-mode autodiff over f32 tensors. Ops executed while a Tape
// is alive are recorded on it; Tape::backward replays them in exact reverse
// execution order. Gradients accumulate (+=), so a tensor feeding several ops
// receives the sum of its downstream gradients. Ops executed with no live tape
// still produce values (inference path) but cannot be differentiated.

namespace pano::ag {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // same shape as value; allocated iff requires_grad
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void()> backward_fn;  // empty for leaves

  void zero_grad();
};

class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Seeds d(loss)/d(loss) = 1 and runs every recorded op's backward in
  // reverse. loss must be scalar (numel 1); an empty tape is rejected.
  void backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }

  static Tape* current();
  static void record(const Var& node);

 private:
  std::vector<Var> nodes_;
  Tape* prev_ = nullptr;
};

// Leaves. param() tracks gradients; constant() never does.
Var param(Tensor value);
Var constant(Tensor value);

// Elementwise (shapes must match exactly; no broadcasting).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_scalar(const Var& a, float s);
Var mul_scalar(const Var& a, float s);
Var abs_val(const Var& a);
Var log_clamped(const Var& a, float eps);  // log(max(x, eps)); zero grad where clamped

// Activations.
Var relu(const Var& a);
Var leaky_relu(const Var& a, float slope);
Var tanh_act(const Var& a);
Var sigmoid_act(const Var& a);

// Inverted dropout (train-time rescale by 1/(1-rate)); eval mode is simply
// "don't insert the op". Keep mask is a pure function of (seed, index).
Var dropout(const Var& a, float rate, std::uint64_t seed);

// Softmax across the channel dim of (C,H,W) or (N,C,H,W).
Var softmax_channels(const Var& a);

// Batch norm state (running statistics, updated only in train mode).
struct BNState {
  Tensor running_mean;  // (C)
  Tensor running_var;   // (C), initialized to 1
  explicit BNState(int channels)
      : running_mean(Tensor::zeros({channels})), running_var(Tensor::full({channels}, 1.0f)) {}
};

Var batchnorm(const Var& a, const Var& gamma, const Var& beta, BNState& state, bool train,
              float momentum = 0.1f, float eps = 1e-5f);

// conv2d: input (N,Cin,H,W) or (Cin,H,W), weights (Cout,Cin,kh,kw), bias (Cout) or null Var.
Var conv2d(const Var& a, const Var& w, const Var& b, int stride, int pad);
// Adjoint of conv2d with the SAME weight tensor: input has Cout channels,
// output Cin channels, spatial size (in-1)*stride - 2*pad + k. Bias (Cin) or null.
Var conv2d_transpose(const Var& a, const Var& w, const Var& b, int stride, int pad);

Var concat_channels(const std::vector<Var>& parts);
Var slice_channels(const Var& a, int c0, int c1);  // [c0, c1)

// Mean over H,W per (n,c): (N,C,H,W) -> (N,C,1,1) (or (C,H,W) -> (C,1,1)).
Var spatial_mean(const Var& a);

Var sum_all(const Var& a);   // -> shape {1}
Var mean_all(const Var& a);  // -> shape {1}

// Unit-normalize 3-channel vectors per pixel: (3,H,W) or (N,3,H,W).
Var normalize3(const Var& a, float eps = 1e-12f);

// PN layer: point = -(p / (ray.n)) * ray per pixel. normal (3,H,W)/(N,3,H,W),
// pdist (1,H,W)/(N,1,H,W), rays (3,H,W) shared across the batch. Pixels with
// |ray.n| < eps are invalid: zero point, zero gradient. If valid_out is given
// it is filled with a 0/1 float mask shaped like pdist.
Var pn_points(const Var& normal, const Var& pdist, const Tensor& rays, float eps,
              Tensor* valid_out = nullptr);

// Max over elements of |analytic - numeric| / max(1e-2, |analytic| + |numeric|)
// using central differences with step h. fn must return a scalar. The
// denominator floor keeps f32 evaluation noise on vanishing gradients from
// dominating the relative metric; against a 1e-3 bound it acts as an
// absolute tolerance of 1e-5.
double grad_check(const std::function<Var(const Var&)>& fn, const Tensor& x, double h);

struct AdamConfig {
  float lr = 2e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

struct AdamState {
  Tensor m;
  Tensor v;
  std::int64_t t = 0;
  explicit AdamState(const std::vector<int>& shape)
      : m(Tensor::zeros(shape)), v(Tensor::zeros(shape)) {}
};

void adam_step(Tensor& parameter, const Tensor& grad, AdamState& state, const AdamConfig& cfg);

}  // namespace pano::ag
