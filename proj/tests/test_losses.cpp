#include <doctest.h>

#include <cmath>
#include <random>

#include "panoscene/losses.hpp"
#include "panoscene/palette.hpp"
#include "panoscene/rng.hpp"

using namespace pano;
using doctest::Approx;

namespace {

Tensor random_probs(Rng& rng, int classes, int h, int w) {
  std::uniform_real_distribution<float> u(0.05f, 1.0f);
  Tensor t = Tensor::zeros({classes, h, w});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (std::int64_t i = 0; i < hw; ++i) {
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) {
      const float v = u(rng);
      t.data[static_cast<size_t>(c * hw + i)] = v;
      sum += v;
    }
    for (int c = 0; c < classes; ++c)
      t.data[static_cast<size_t>(c * hw + i)] /= static_cast<float>(sum);
  }
  return t;
}

Tensor random_units(Rng& rng, int h, int w) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  Tensor t = Tensor::zeros({3, h, w});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (std::int64_t i = 0; i < hw; ++i) {
    float v[3], n = 0.0f;
    do {
      n = 0.0f;
      for (float& x : v) {
        x = g(rng);
        n += x * x;
      }
    } while (n < 1e-4f);
    n = std::sqrt(n);
    for (int c = 0; c < 3; ++c) t.data[static_cast<size_t>(c * hw + i)] = v[c] / n;
  }
  return t;
}

}  // namespace

TEST_CASE("l1_masked matches a scalar reference and honours the mask") {
  Rng rng(3);
  std::uniform_real_distribution<float> u(-2.0f, 2.0f);
  const int h = 5, w = 7, c = 2;
  Tensor pred = Tensor::zeros({c, h, w}), gt = Tensor::zeros({c, h, w});
  Tensor mask = Tensor::zeros({1, h, w});
  for (float& v : pred.data) v = u(rng);
  for (float& v : gt.data) v = u(rng);
  for (float& v : mask.data) v = (u(rng) > 0.0f) ? 1.0f : 0.0f;

  double acc = 0.0, cnt = 0.0;
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h * w; ++i)
      if (mask.data[static_cast<size_t>(i)] != 0.0f) {
        acc += std::abs(static_cast<double>(pred.data[static_cast<size_t>(ch * h * w + i)]) -
                        gt.data[static_cast<size_t>(ch * h * w + i)]);
        cnt += 1.0;
      }

  ag::Var loss = loss::l1_masked(ag::constant(pred), gt, mask);
  CHECK(loss->value.data[0] == Approx(acc / cnt).epsilon(1e-6));

  ag::Var zero = loss::l1_masked(ag::constant(pred), pred, mask);
  CHECK(zero->value.data[0] == 0.0f);

  Tensor empty = Tensor::zeros({1, h, w});
  CHECK(loss::l1_masked(ag::constant(pred), gt, empty)->value.data[0] == 0.0f);
}

TEST_CASE("mask correctness: masked loss equals full-frame loss when pred==gt outside the mask") {
  Rng rng(11);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  const int h = 6, w = 9;
  Tensor gt = Tensor::zeros({3, h, w}), mask = Tensor::zeros({1, h, w});
  for (float& v : gt.data) v = u(rng);
  for (int i = 0; i < h * w; ++i) mask.data[static_cast<size_t>(i)] = (i % 3 == 0) ? 1.0f : 0.0f;
  Tensor pred = gt;
  for (int ch = 0; ch < 3; ++ch)
    for (int i = 0; i < h * w; ++i)
      if (mask.data[static_cast<size_t>(i)] != 0.0f)
        pred.data[static_cast<size_t>(ch * h * w + i)] += u(rng);

  const float masked = loss::l1_masked(ag::constant(pred), gt, mask)->value.data[0];
  Tensor full = Tensor::full({1, h, w}, 1.0f);
  const float fullframe = loss::l1_masked(ag::constant(pred), gt, full)->value.data[0];
  // same absolute-error mass, different divisor
  const double ratio = 3.0;  // |mask| is exactly a third of the pixels
  CHECK(fullframe == Approx(masked / ratio).epsilon(1e-5));
}

TEST_CASE("cosine loss: zero at equality, 2 at antipodes, reference on random units") {
  Rng rng(5);
  const int h = 4, w = 6;
  Tensor a = random_units(rng, h, w), b = random_units(rng, h, w);
  Tensor mask = Tensor::full({1, h, w}, 1.0f);

  CHECK(loss::cosine_loss(ag::constant(a), a, mask)->value.data[0] == Approx(0.0).scale(1.0));

  Tensor neg = a;
  for (float& v : neg.data) v = -v;
  CHECK(loss::cosine_loss(ag::constant(neg), a, mask)->value.data[0] == Approx(2.0));

  double acc = 0.0;
  for (int i = 0; i < h * w; ++i) {
    double dot = 0.0;
    for (int c = 0; c < 3; ++c)
      dot += static_cast<double>(a.data[static_cast<size_t>(c * h * w + i)]) *
             b.data[static_cast<size_t>(c * h * w + i)];
    acc += 1.0 - dot;
  }
  CHECK(loss::cosine_loss(ag::constant(a), b, mask)->value.data[0] ==
        Approx(acc / (h * w)).epsilon(1e-5));
}

TEST_CASE("softmax cross entropy: clamped log, one-hot zero, scalar reference") {
  Rng rng(7);
  const int h = 3, w = 5, classes = 13;
  Tensor probs = random_probs(rng, classes, h, w);
  Tensor labels = Tensor::zeros({1, h, w});
  std::uniform_int_distribution<int> pick(0, classes - 1);
  for (float& v : labels.data) v = static_cast<float>(pick(rng));
  Tensor mask = Tensor::full({1, h, w}, 1.0f);

  double acc = 0.0;
  for (int i = 0; i < h * w; ++i) {
    const int l = static_cast<int>(labels.data[static_cast<size_t>(i)]);
    acc -= std::log(static_cast<double>(probs.data[static_cast<size_t>(l * h * w + i)]));
  }
  CHECK(loss::softmax_ce(ag::constant(probs), labels, mask)->value.data[0] ==
        Approx(acc / (h * w)).epsilon(1e-5));

  // exact one-hot prediction of the truth: -log(1) = 0
  Tensor onehot = Tensor::zeros({classes, h, w});
  for (int i = 0; i < h * w; ++i) {
    const int l = static_cast<int>(labels.data[static_cast<size_t>(i)]);
    onehot.data[static_cast<size_t>(l * h * w + i)] = 1.0f;
  }
  CHECK(loss::softmax_ce(ag::constant(onehot), labels, mask)->value.data[0] == 0.0f);

  Tensor bad = labels;
  bad.data[0] = 99.0f;
  CHECK_THROWS_AS(loss::softmax_ce(ag::constant(probs), bad, mask), std::invalid_argument);
}

TEST_CASE("pixel loss gradients match finite differences") {
  Rng rng(23);
  std::uniform_real_distribution<float> u(0.5f, 1.5f);
  const int h = 4, w = 5;

  Tensor gt = Tensor::zeros({2, h, w});
  Tensor mask = Tensor::zeros({1, h, w});
  for (float& v : gt.data) v = u(rng) * ((rng() & 1) ? 1.0f : -1.0f);
  for (int i = 0; i < h * w; ++i) mask.data[static_cast<size_t>(i)] = (i % 4 != 3) ? 1.0f : 0.0f;
  Tensor x0 = Tensor::zeros({2, h, w});
  for (float& v : x0.data) v = u(rng) * 3.0f * ((rng() & 1) ? 1.0f : -1.0f);
  // |pred - gt| stays well clear of the kink for the FD step below
  const double err_l1 = ag::grad_check(
      [&](const ag::Var& v) { return loss::l1_masked(v, gt, mask); }, x0, 0.02);
  CHECK(err_l1 < 1e-3);

  Tensor gtn = random_units(rng, h, w);
  Tensor xn = Tensor::zeros({3, h, w});
  for (float& v : xn.data) v = u(rng) * ((rng() & 1) ? 1.0f : -1.0f);
  const double err_cos = ag::grad_check(
      [&](const ag::Var& v) { return loss::cosine_loss(ag::normalize3(v), gtn, mask); }, xn,
      0.02);
  CHECK(err_cos < 1e-3);

  Tensor labels = Tensor::zeros({1, h, w});
  for (int i = 0; i < h * w; ++i) labels.data[static_cast<size_t>(i)] = static_cast<float>(i % 13);
  Tensor xs = Tensor::zeros({13, h, w});
  for (float& v : xs.data) v = u(rng);
  const double err_ce = ag::grad_check(
      [&](const ag::Var& v) {
        return loss::softmax_ce(ag::softmax_channels(v), labels, mask);
      },
      xs, 0.02);
  CHECK(err_ce < 1e-3);
}

TEST_CASE("smooth_real_semantics follows the published formulas") {
  const int classes = sem::kClassCount;

  // s_il = 0.5, gamma = 0.8: floor engages, remaining mass scaled by 0.4
  Tensor s = Tensor::zeros({classes, 1, 1});
  s.data[0] = 0.5f;
  for (int c = 1; c < classes; ++c) s.data[static_cast<size_t>(c)] = 0.5f / 12.0f;
  Tensor label = Tensor::zeros({1, 1, 1});
  Tensor y = loss::smooth_real_semantics(label, s, 0.8f);
  CHECK(y.data[0] == Approx(0.8));
  for (int c = 1; c < classes; ++c)
    CHECK(y.data[static_cast<size_t>(c)] == Approx(0.5 / 12.0 * 0.4).epsilon(1e-6));

  // s_il = 0.9 >= gamma: distribution unchanged
  s.data[0] = 0.9f;
  for (int c = 1; c < classes; ++c) s.data[static_cast<size_t>(c)] = 0.1f / 12.0f;
  y = loss::smooth_real_semantics(label, s, 0.8f);
  for (int c = 0; c < classes; ++c)
    CHECK(y.data[static_cast<size_t>(c)] == Approx(s.data[static_cast<size_t>(c)]).epsilon(1e-6));

  // uniform s: y_il = 0.8, every other class 1/60
  for (int c = 0; c < classes; ++c) s.data[static_cast<size_t>(c)] = 1.0f / 13.0f;
  y = loss::smooth_real_semantics(label, s, 0.8f);
  CHECK(y.data[0] == Approx(0.8));
  for (int c = 1; c < classes; ++c)
    CHECK(y.data[static_cast<size_t>(c)] == Approx(1.0 / 60.0).epsilon(1e-6));

  // limit case: exactly one-hot stays one-hot
  s.fill(0.0f);
  s.data[0] = 1.0f;
  y = loss::smooth_real_semantics(label, s, 0.8f);
  CHECK(y.data[0] == 1.0f);
  for (int c = 1; c < classes; ++c) CHECK(y.data[static_cast<size_t>(c)] == 0.0f);

  CHECK_THROWS_AS(loss::smooth_real_semantics(label, s, 1.0f), std::invalid_argument);
}

TEST_CASE("smooth_real_semantics output is a valid distribution with the gamma floor") {
  Rng rng(41);
  const int h = 5, w = 20;
  std::uniform_int_distribution<int> pick(0, sem::kClassCount - 1);
  double worst_sum = 0.0;
  float min_yl = 1.0f;
  for (int trial = 0; trial < 200; ++trial) {
    Tensor s = random_probs(rng, sem::kClassCount, h, w);
    Tensor labels = Tensor::zeros({1, h, w});
    for (float& v : labels.data) v = static_cast<float>(pick(rng));
    Tensor y = loss::smooth_real_semantics(labels, s, 0.8f);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    for (std::int64_t i = 0; i < hw; ++i) {
      double sum = 0.0;
      for (int c = 0; c < sem::kClassCount; ++c)
        sum += y.data[static_cast<size_t>(c * hw + i)];
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
      const int l = static_cast<int>(labels.data[static_cast<size_t>(i)]);
      min_yl = std::min(min_yl, y.data[static_cast<size_t>(l * hw + i)]);
    }
  }
  INFO("worst |sum-1| " << worst_sum << ", min y_il " << min_yl);
  CHECK(worst_sum <= 1e-6);
  CHECK(min_yl >= 0.8f);
}

TEST_CASE("LSGAN losses: constant plug-ins and generator gradient") {
  Tensor half = Tensor::full({1, 4, 4}, 0.5f);
  CHECK(loss::adv_loss_g(ag::constant(half))->value.data[0] == Approx(0.25));
  CHECK(loss::adv_loss_d(ag::constant(half), ag::constant(half))->value.data[0] == Approx(0.25));

  Tensor ones = Tensor::full({1, 4, 4}, 1.0f), zeros = Tensor::zeros({1, 4, 4});
  CHECK(loss::adv_loss_d(ag::constant(ones), ag::constant(zeros))->value.data[0] == 0.0f);
  CHECK(loss::adv_loss_g(ag::constant(zeros))->value.data[0] == 1.0f);

  Rng rng(9);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Tensor x = Tensor::zeros({1, 5, 8});
  for (float& v : x.data) v = u(rng);
  const double err = ag::grad_check(
      [](const ag::Var& v) { return loss::adv_loss_g(v); }, x, 0.02);
  CHECK(err < 1e-3);
}

TEST_CASE("scene and distribution losses") {
  // confident correct logits drive the clamped CE to exactly zero
  Tensor logits = Tensor::zeros({2, sem::kSceneCount, 1, 1});
  logits.data[3] = 60.0f;
  logits.data[sem::kSceneCount + 5] = 60.0f;
  ag::Var sl = loss::scene_loss(ag::constant(logits), {3, 5});
  CHECK(sl->value.data[0] == 0.0f);

  CHECK_THROWS_AS(loss::scene_loss(ag::constant(logits), {3}), std::invalid_argument);
  CHECK_THROWS_AS(loss::scene_loss(ag::constant(logits), {3, 99}), std::invalid_argument);

  Tensor gt = Tensor::zeros({1, sem::kClassCount, 1, 1});
  gt.data[static_cast<size_t>(sem::kWall)] = 1.0f;
  Tensor uniform = Tensor::full({1, sem::kClassCount, 1, 1}, 1.0f / 13.0f);
  CHECK(loss::distribution_loss(ag::constant(gt), gt)->value.data[0] == 0.0f);
  CHECK(loss::distribution_loss(ag::constant(uniform), gt)->value.data[0] ==
        Approx(24.0 / 13.0).epsilon(1e-6));
}

TEST_CASE("combined losses follow the published weights and gate") {
  loss::LossConfig cfg;
  cfg.validate();

  loss::CombinedInput in;
  in.l1_p = 1.0;
  in.adv = 1.0;
  in.pn = 1.0;
  CHECK(loss::combined_losses(in, 0, cfg).plane == Approx(0.41).epsilon(1e-7));
  CHECK(loss::combined_losses(in, 1001, cfg).plane == Approx(0.411).epsilon(1e-7));

  // the gate difference is exactly the pn term (bitwise, in double)
  const double diff =
      loss::combined_losses(in, 1001, cfg).plane - loss::combined_losses(in, 1000, cfg).plane;
  CHECK(diff == static_cast<double>(cfg.lambda_pn) * in.pn);

  in.l1_p = 1.5;
  in.adv = 0.75;
  in.pn = 0.5;
  const double diff2 =
      loss::combined_losses(in, 1001, cfg).plane - loss::combined_losses(in, 1000, cfg).plane;
  CHECK(diff2 == static_cast<double>(cfg.lambda_pn) * in.pn);

  loss::CombinedInput zero;
  const loss::CombinedTotals z = loss::combined_losses(zero, 5000, cfg);
  CHECK(z.plane == 0.0);
  CHECK(z.normal == 0.0);
  CHECK(z.semantic == 0.0);
  CHECK(z.scene == 0.0);

  // dist term is ungated; pn weight switches strictly after the gate
  CHECK(loss::pn_weight_at(1000, cfg) == 0.0);
  CHECK(loss::pn_weight_at(1001, cfg) == Approx(0.001).epsilon(1e-7));
  loss::CombinedInput ds;
  ds.ce_s = 1.0;
  ds.dist = 1.0;
  CHECK(loss::combined_losses(ds, 0, cfg).semantic ==
        Approx(0.4 + 0.01).epsilon(1e-6));

  // near-exact schedule difference on random components
  Rng rng(77);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int k = 0; k < 100; ++k) {
    loss::CombinedInput r;
    r.l1_p = u(rng);
    r.adv = u(rng);
    r.pn = u(rng);
    const double d =
        loss::combined_losses(r, 1001, cfg).plane - loss::combined_losses(r, 1000, cfg).plane;
    CHECK(std::abs(d - static_cast<double>(cfg.lambda_pn) * r.pn) < 1e-12);
  }

  loss::LossConfig bad = cfg;
  bad.gamma = 1.5f;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.lambda_pixel = -1.0f;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
