#pragma once

// Finite-difference gradient suite shared by the unit tests and the acceptance
// gate. Inputs are drawn to keep gradients well-conditioned for f32 central
// differences (activations away from kinks/saturation, weights of bounded
// magnitude); elements whose |analytic - numeric| falls under a small absolute
// floor are counted as matching, since below the f32 FD noise floor the
// relative quotient is meaningless.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "panoscene/autograd.hpp"
#include "panoscene/losses.hpp"
#include "panoscene/model.hpp"
#include "panoscene/rng.hpp"
#include "panoscene/tensor.hpp"

namespace pano::gradsuite {

using ag::Var;

struct FDOutcome {
  double max_rel = 0.0;      // max over elements with |a-n| above the atol floor
  std::int64_t elements = 0;
  std::int64_t floored = 0;  // elements passing via the absolute floor
};

inline FDOutcome fd_compare(const std::function<Var(const Var&)>& fn, const Tensor& x, double h,
                            double atol) {
  Tensor analytic;
  {
    ag::Tape tape;
    Var vx = ag::param(x);
    Var y = fn(vx);
    tape.backward(y);
    analytic = vx->grad;
  }
  FDOutcome out;
  Tensor probe = x;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const float saved = probe.data[i];
    double fp, fm;
    {
      ag::Tape tape;
      probe.data[i] = saved + static_cast<float>(h);
      fp = fn(ag::constant(probe))->value.data[0];
    }
    {
      ag::Tape tape;
      probe.data[i] = saved - static_cast<float>(h);
      fm = fn(ag::constant(probe))->value.data[0];
    }
    probe.data[i] = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic.data[i];
    const double diff = std::abs(a - numeric);
    ++out.elements;
    if (diff <= atol) {
      ++out.floored;
      continue;
    }
    const double rel = diff / std::max(1e-8, std::abs(a) + std::abs(numeric));
    if (rel > out.max_rel) out.max_rel = rel;
  }
  return out;
}

struct CaseResult {
  std::string name;
  double max_rel = 0.0;
  bool pass = false;
};

namespace detail {

inline Tensor signed_uniform(const std::vector<int>& shape, Rng& rng, float lo, float hi) {
  Tensor t(shape);
  std::uniform_real_distribution<float> mag(lo, hi);
  std::uniform_int_distribution<int> sign(0, 1);
  for (auto& v : t.data) v = (sign(rng) ? 1.0f : -1.0f) * mag(rng);
  return t;
}

inline Tensor positive_uniform(const std::vector<int>& shape, Rng& rng, float lo, float hi) {
  Tensor t(shape);
  std::uniform_real_distribution<float> mag(lo, hi);
  for (auto& v : t.data) v = mag(rng);
  return t;
}

inline Var dot_const(const Var& v, const Tensor& c) {
  return ag::sum_all(ag::mul(v, ag::constant(c)));
}

}  // namespace detail

// Runs every op's FD check with one RNG seed. tol is the pass threshold on
// max_rel (acceptance: 1e-3).
inline std::vector<CaseResult> run_gradcheck_suite(std::uint64_t seed, double tol = 1e-3) {
  using detail::dot_const;
  using detail::positive_uniform;
  using detail::signed_uniform;

  std::vector<CaseResult> results;
  const double h = 0.02;
  const double atol = 5e-4;

  auto run = [&](const std::string& name, const Tensor& x,
                 const std::function<Var(const Var&)>& fn) {
    const FDOutcome o = fd_compare(fn, x, h, atol);
    results.push_back({name, o.max_rel, o.max_rel < tol});
  };

  Rng rng(seed * 7919 + 1);

  {
    Tensor x = signed_uniform({3, 4, 5}, rng, 0.2f, 1.2f);
    Tensor c = signed_uniform({3, 4, 5}, rng, 0.5f, 1.5f);
    run("linear", x, [c](const Var& v) { return dot_const(v, c); });
  }
  {
    Tensor x = signed_uniform({2, 4, 4}, rng, 0.2f, 1.2f);
    Tensor m = signed_uniform({2, 4, 4}, rng, 0.5f, 1.5f);
    Tensor c = signed_uniform({2, 4, 4}, rng, 0.5f, 1.5f);
    run("add_sub_mul", x, [m, c](const Var& v) {
      Var vm = ag::constant(m);
      return dot_const(ag::sub(ag::add(ag::mul(v, vm), v), ag::mul_scalar(v, 0.25f)), c);
    });
  }
  {
    Tensor x = signed_uniform({4, 5}, rng, 0.3f, 1.3f);  // away from the |.| kink
    Tensor c = positive_uniform({4, 5}, rng, 0.5f, 1.5f);
    run("abs", x, [c](const Var& v) { return dot_const(ag::abs_val(v), c); });
  }
  {
    Tensor x = positive_uniform({4, 5}, rng, 0.5f, 2.0f);
    Tensor c = signed_uniform({4, 5}, rng, 0.5f, 1.5f);
    run("log_clamped", x,
        [c](const Var& v) { return dot_const(ag::log_clamped(v, 1e-8f), c); });
  }
  {
    Tensor x = signed_uniform({3, 4, 4}, rng, 0.3f, 1.3f);  // away from the relu kink
    Tensor c = signed_uniform({3, 4, 4}, rng, 0.5f, 1.5f);
    run("relu", x, [c](const Var& v) { return dot_const(ag::relu(v), c); });
    run("leaky_relu", x,
        [c](const Var& v) { return dot_const(ag::leaky_relu(v, 0.2f), c); });
  }
  {
    Tensor x = signed_uniform({3, 4, 4}, rng, 0.0f, 1.2f);  // tanh' >= 0.18 here
    Tensor c = signed_uniform({3, 4, 4}, rng, 1.0f, 2.0f);
    run("tanh", x, [c](const Var& v) { return dot_const(ag::tanh_act(v), c); });
    run("sigmoid", x, [c](const Var& v) { return dot_const(ag::sigmoid_act(v), c); });
  }
  {
    Tensor x = signed_uniform({3, 4, 4}, rng, 0.2f, 1.2f);
    Tensor c = signed_uniform({3, 4, 4}, rng, 0.5f, 1.5f);
    run("dropout", x,
        [c, seed](const Var& v) { return dot_const(ag::dropout(v, 0.4f, seed ^ 0xd0u), c); });
  }
  {
    // linear anchor keeps every logit's gradient bounded away from zero:
    // |softmax jacobian row . c| <= 1.5 while the anchor contributes +-[3,4]
    Tensor x = signed_uniform({4, 3, 3}, rng, 0.0f, 1.0f);
    Tensor c = positive_uniform({4, 3, 3}, rng, 0.5f, 3.5f);
    Tensor d = signed_uniform({4, 3, 3}, rng, 3.0f, 4.0f);
    run("softmax_channels", x, [c, d](const Var& v) {
      return ag::add(dot_const(ag::softmax_channels(v), c), dot_const(v, d));
    });
  }
  {
    Tensor x = positive_uniform({2, 6, 6}, rng, 0.5f, 1.5f);
    Tensor w = positive_uniform({3, 2, 3, 3}, rng, 0.05f, 0.3f);
    Tensor b = positive_uniform({3}, rng, 0.0f, 0.1f);
    Tensor c = signed_uniform({3, 3, 3}, rng, 0.5f, 1.5f);
    run("conv2d_input", x, [w, b, c](const Var& v) {
      return dot_const(ag::conv2d(v, ag::constant(w), ag::constant(b), 2, 1), c);
    });
    Tensor xc = x;
    run("conv2d_weights", w, [xc, b, c](const Var& vw) {
      return dot_const(ag::conv2d(ag::constant(xc), vw, ag::constant(b), 2, 1), c);
    });
    run("conv2d_bias", b, [xc, w, c](const Var& vb) {
      return dot_const(ag::conv2d(ag::constant(xc), ag::constant(w), vb, 2, 1), c);
    });
  }
  {
    Tensor x = positive_uniform({3, 3, 3}, rng, 0.5f, 1.5f);
    Tensor w = positive_uniform({3, 2, 4, 4}, rng, 0.05f, 0.3f);
    Tensor b = positive_uniform({2}, rng, 0.0f, 0.1f);
    Tensor c = signed_uniform({2, 6, 6}, rng, 0.5f, 1.5f);
    run("conv2d_transpose_input", x, [w, b, c](const Var& v) {
      return dot_const(ag::conv2d_transpose(v, ag::constant(w), ag::constant(b), 2, 1), c);
    });
    Tensor xc = x;
    run("conv2d_transpose_weights", w, [xc, b, c](const Var& vw) {
      return dot_const(ag::conv2d_transpose(ag::constant(xc), vw, ag::constant(b), 2, 1), c);
    });
    run("conv2d_transpose_bias", b, [xc, w, c](const Var& vb) {
      return dot_const(ag::conv2d_transpose(ag::constant(xc), ag::constant(w), vb, 2, 1), c);
    });
  }
  {
    Tensor x = signed_uniform({3, 4, 4}, rng, 0.2f, 1.2f);
    Tensor m = signed_uniform({3, 4, 4}, rng, 0.5f, 1.5f);
    Tensor c = signed_uniform({4, 4, 4}, rng, 0.5f, 1.5f);
    run("concat_slice", x, [m, c](const Var& v) {
      Var cat = ag::concat_channels({v, ag::mul(v, ag::constant(m))});
      return dot_const(ag::slice_channels(cat, 1, 5), c);
    });
  }
  {
    Tensor x = signed_uniform({2, 3, 4, 4}, rng, 0.2f, 1.2f);
    Tensor c = signed_uniform({2, 3, 1, 1}, rng, 1.0f, 2.0f);
    run("spatial_mean", x, [c](const Var& v) { return dot_const(ag::spatial_mean(v), c); });
    run("mean_all", x, [](const Var& v) { return ag::mean_all(v); });
  }
  {
    // per-pixel 3-vectors with norms in [0.9, 2.6]; tangential projections can
    // still vanish for single elements, which the atol floor absorbs
    Tensor x = signed_uniform({3, 4, 4}, rng, 0.5f, 1.5f);
    Tensor c = signed_uniform({3, 4, 4}, rng, 0.5f, 1.5f);
    run("normalize3", x, [c](const Var& v) { return dot_const(ag::normalize3(v), c); });
  }
  {
    // rays z=1 fan, normals with dominant +z so |ray.n| >= ~0.3 everywhere
    const int hw = 12;
    Tensor rays({3, 3, 4});
    {
      std::uniform_real_distribution<float> xy(-0.5f, 0.5f);
      for (int i = 0; i < hw; ++i) {
        rays.data[i] = xy(rng);
        rays.data[hw + i] = xy(rng);
        rays.data[2 * hw + i] = 1.0f;
      }
    }
    Tensor n({3, 3, 4});
    {
      std::uniform_real_distribution<float> small(0.05f, 0.3f);
      std::uniform_real_distribution<float> big(0.6f, 1.0f);
      for (int i = 0; i < hw; ++i) {
        n.data[i] = small(rng);
        n.data[hw + i] = small(rng);
        n.data[2 * hw + i] = big(rng);
      }
    }
    Tensor p = positive_uniform({1, 3, 4}, rng, 1.0f, 2.5f);
    Tensor c = signed_uniform({3, 3, 4}, rng, 0.5f, 1.5f);
    run("pn_points_normal", n, [p, rays, c](const Var& vn) {
      return dot_const(ag::pn_points(vn, ag::constant(p), rays, 1e-4f), c);
    });
    Tensor nc = n;
    run("pn_points_pdist", p, [nc, rays, c](const Var& vp) {
      return dot_const(ag::pn_points(ag::constant(nc), vp, rays, 1e-4f), c);
    });
  }
  {
    Tensor x = signed_uniform({2, 3, 3, 4}, rng, 0.2f, 2.0f);
    Tensor gamma = positive_uniform({3}, rng, 0.8f, 1.4f);
    Tensor beta = signed_uniform({3}, rng, 0.0f, 0.3f);
    Tensor c = signed_uniform({2, 3, 3, 4}, rng, 2.0f, 3.0f);
    run("batchnorm_train_input", x, [gamma, beta, c](const Var& v) {
      ag::BNState st(3);
      return dot_const(
          ag::batchnorm(v, ag::constant(gamma), ag::constant(beta), st, true), c);
    });
    Tensor xc = x;
    run("batchnorm_gamma", gamma, [xc, beta, c](const Var& vg) {
      ag::BNState st(3);
      return dot_const(ag::batchnorm(ag::constant(xc), vg, ag::constant(beta), st, true), c);
    });
    run("batchnorm_beta", beta, [xc, gamma, c](const Var& vb) {
      ag::BNState st(3);
      return dot_const(ag::batchnorm(ag::constant(xc), ag::constant(gamma), vb, st, true), c);
    });
    ag::BNState eval_state(3);
    for (int i = 0; i < 3; ++i) {
      eval_state.running_mean.data[i] = 0.2f * static_cast<float>(i) - 0.1f;
      eval_state.running_var.data[i] = 1.0f + 0.3f * static_cast<float>(i);
    }
    run("batchnorm_eval_input", x, [gamma, beta, c, eval_state](const Var& v) mutable {
      return dot_const(
          ag::batchnorm(v, ag::constant(gamma), ag::constant(beta), eval_state, false), c);
    });
  }

  return results;
}

// End-to-end check: the full supervised loss of a tiny generator against
// finite differences, parameter tensors sampled across the depth of the net.
// BN runs in eval mode on fixed running stats and dropout is off, so the loss
// is a deterministic function of the probed parameter. Elements are sampled
// (stride over the tensor) to keep the two-forward-per-element cost bounded.
inline std::vector<CaseResult> run_generator_gradcheck(std::uint64_t seed, double tol = 1e-2) {
  using detail::positive_uniform;
  using detail::signed_uniform;

  model::GeneratorConfig cfg;
  cfg.face_w = 8;
  cfg.face_h = 8;
  cfg.stream_widths = {2, 2, 2};
  cfg.joint_widths = {4, 4, 4, 4, 4, 8};
  cfg.disc_widths = {2, 2, 2, 4};
  cfg.scene_hidden = 4;
  model::Generator gen(cfg, seed * 31 + 5);

  Rng rng(seed * 7919 + 2);
  const int h = cfg.pano_h(), w = cfg.pano_w();
  std::map<std::string, Tensor> inputs;
  inputs["p"] = signed_uniform({1, 2, h, w}, rng, 0.2f, 1.2f);
  inputs["n"] = signed_uniform({1, 4, h, w}, rng, 0.2f, 1.0f);
  inputs["s"] = positive_uniform({1, 14, h, w}, rng, 0.0f, 1.0f);
  for (auto& [name, t] : inputs) {  // mask channel: fully observed
    const int ch = t.shape[1] - 1;
    for (int i = 0; i < h * w; ++i) t.data[static_cast<std::size_t>(ch * h * w + i)] = 1.0f;
  }

  Tensor gt_p = signed_uniform({1, 1, h, w}, rng, 0.5f, 2.0f);
  Tensor gt_n = signed_uniform({1, 3, h, w}, rng, 0.3f, 1.0f);
  for (int i = 0; i < h * w; ++i) {  // normalize per pixel
    const std::size_t hw = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    double len = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double v = gt_n.data[static_cast<std::size_t>(c) * hw + static_cast<std::size_t>(i)];
      len += v * v;
    }
    len = std::sqrt(len);
    for (int c = 0; c < 3; ++c)
      gt_n.data[static_cast<std::size_t>(c) * hw + static_cast<std::size_t>(i)] =
          static_cast<float>(
              gt_n.data[static_cast<std::size_t>(c) * hw + static_cast<std::size_t>(i)] / len);
  }
  Tensor labels = Tensor::zeros({1, 1, h, w});
  for (int i = 0; i < h * w; ++i)
    labels.data[static_cast<std::size_t>(i)] = static_cast<float>(i % 13);
  Tensor mask = Tensor::full({1, 1, h, w}, 1.0f);

  // Warm the BN running stats once so eval mode sees nontrivial statistics.
  {
    ag::Tape tape;
    gen.forward(inputs, true, 7);
  }

  auto loss_value = [&](bool backward) -> double {
    ag::Tape tape;
    model::Generator::Out out = gen.forward(inputs, false, 0);
    ag::Var l = ag::add(loss::l1_masked(out.streams.at("p"), gt_p, mask),
                        ag::add(loss::cosine_loss(out.streams.at("n"), gt_n, mask),
                                loss::softmax_ce(out.streams.at("s"), labels, mask)));
    const double v = l->value.data[0];
    if (backward) tape.backward(l);
    return v;
  };

  auto& entries = gen.params().entries();
  const std::size_t n = entries.size();
  std::vector<std::size_t> picks = {0, n / 3, (2 * n) / 3, n - 1};
  std::sort(picks.begin(), picks.end());
  picks.erase(std::unique(picks.begin(), picks.end()), picks.end());

  gen.params().zero_grads();
  loss_value(true);  // fills entry.var->grad for every parameter

  std::vector<CaseResult> results;
  const double fd_h = 2e-3;
  const double atol = 5e-4;
  for (std::size_t pick : picks) {
    auto& entry = entries[pick];
    Tensor& value = entry.var->value;
    const Tensor analytic = entry.var->grad;
    const std::int64_t numel = value.numel();
    const std::int64_t stride = std::max<std::int64_t>(1, numel / 16);
    double max_rel = 0.0;
    for (std::int64_t i = 0; i < numel; i += stride) {
      const float saved = value.data[i];
      value.data[i] = saved + static_cast<float>(fd_h);
      const double fp = loss_value(false);
      value.data[i] = saved - static_cast<float>(fd_h);
      const double fm = loss_value(false);
      value.data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * fd_h);
      const double a = analytic.data[i];
      const double diff = std::abs(a - numeric);
      if (diff <= atol) continue;
      const double rel = diff / std::max(1e-8, std::abs(a) + std::abs(numeric));
      if (rel > max_rel) max_rel = rel;
    }
    results.push_back({"generator:" + entry.name, max_rel, max_rel < tol});
  }
  return results;
}

}  // namespace pano::gradsuite
