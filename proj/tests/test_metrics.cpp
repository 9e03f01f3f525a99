#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "panoscene/metrics.hpp"
#include "panoscene/scenegen.hpp"

using namespace pano;
using doctest::Approx;

namespace {

constexpr int kC = sem::kClassCount;

Tensor onehot_map(const std::vector<int>& labels, int h, int w) {
  Tensor s = Tensor::zeros({kC, h, w});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (std::int64_t i = 0; i < hw; ++i)
    s.data[static_cast<size_t>(labels[static_cast<size_t>(i)] * hw + i)] = 1.0f;
  return s;
}

bool bits_equal(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

bool bits_equal(const std::optional<double>& a, const std::optional<double>& b) {
  if (a.has_value() != b.has_value()) return false;
  return !a || bits_equal(*a, *b);
}

template <size_t N>
bool bits_equal(const std::array<std::optional<double>, N>& a,
                const std::array<std::optional<double>, N>& b) {
  for (size_t i = 0; i < N; ++i)
    if (!bits_equal(a[i], b[i])) return false;
  return true;
}

bool reports_identical(const metrics::MetricReport& a, const metrics::MetricReport& b) {
  if (!bits_equal(a.pog, b.pog) || !bits_equal(a.iou, b.iou) ||
      !bits_equal(a.size_error, b.size_error) || !bits_equal(a.emd, b.emd))
    return false;
  if (a.gt_exists != b.gt_exists || a.pred_exists != b.pred_exists) return false;
  if (!bits_equal(a.pog_mean, b.pog_mean) || !bits_equal(a.iou_mean, b.iou_mean) ||
      !bits_equal(a.size_mean, b.size_mean) || !bits_equal(a.emd_mean, b.emd_mean))
    return false;
  if (!bits_equal(a.exist_f1, b.exist_f1) || !bits_equal(a.accuracy, b.accuracy)) return false;
  if (a.normal.has_value() != b.normal.has_value() ||
      a.surface.has_value() != b.surface.has_value())
    return false;
  if (a.normal) {
    if (!bits_equal(a.normal->mean_deg, b.normal->mean_deg) ||
        !bits_equal(a.normal->median_deg, b.normal->median_deg) ||
        !bits_equal(a.normal->pct_11_25, b.normal->pct_11_25) ||
        !bits_equal(a.normal->pct_22_5, b.normal->pct_22_5) ||
        !bits_equal(a.normal->pct_30, b.normal->pct_30))
      return false;
  }
  if (a.surface) {
    if (!bits_equal(a.surface->mean_m, b.surface->mean_m) ||
        !bits_equal(a.surface->median_m, b.surface->median_m) ||
        !bits_equal(a.surface->pct_0_2, b.surface->pct_0_2) ||
        !bits_equal(a.surface->pct_0_5, b.surface->pct_0_5) ||
        !bits_equal(a.surface->pct_1_0, b.surface->pct_1_0))
      return false;
  }
  return a.eval_pixels == b.eval_pixels;
}

geom::Vec3 yaw90(const geom::Vec3& p) { return {p.z, p.y, -p.x}; }

}  // namespace

TEST_CASE("stable_sum and sorted reductions are permutation-invariant") {
  Rng rng(3);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::vector<double> v(257);
  for (double& x : v) x = u(rng);
  std::vector<double> shuffled = v;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(bits_equal(metrics::stable_sum(v), metrics::stable_sum(shuffled)));

  const double a = u(rng), b = u(rng), c = u(rng);
  CHECK(bits_equal(metrics::sorted_norm(a, b, c), metrics::sorted_norm(c, b, -a)));
  CHECK(bits_equal(metrics::sorted_norm(a, b, c), metrics::sorted_norm(-b, a, c)));
  const double d = u(rng), e = u(rng), f = u(rng);
  // jointly permuted and sign-flipped pairs keep the same product multiset
  CHECK(bits_equal(metrics::sorted_dot(a, b, c, d, e, f),
                   metrics::sorted_dot(c, b, -a, f, e, -d)));
}

TEST_CASE("argmax ties break toward the lower class id") {
  Tensor s = Tensor::zeros({kC, 1, 2});
  s.data[0 * 2 + 0] = 0.5f;
  s.data[4 * 2 + 0] = 0.5f;  // tie between 0 and 4
  s.data[7 * 2 + 1] = 0.9f;
  const auto labels = metrics::argmax_labels(s);
  CHECK(labels[0] == 0);
  CHECK(labels[1] == 7);
}

TEST_CASE("PoG: trivial and spreadsheet cases") {
  const int h = 2, w = 2;
  const std::vector<int> gt = {0, 0, 1, 2};
  const std::vector<std::uint8_t> mask(4, 1);

  // one-hot correct prediction
  auto pg = metrics::pog(onehot_map(gt, h, w), gt, mask);
  CHECK(*pg.per_class[0] == 1.0);
  CHECK(*pg.per_class[1] == 1.0);
  CHECK(*pg.per_class[2] == 1.0);
  CHECK_FALSE(pg.per_class[3].has_value());
  CHECK(*pg.mean == 1.0);

  // uniform prediction
  Tensor uni = Tensor::full({kC, h, w}, 1.0f / 13.0f);
  pg = metrics::pog(uni, gt, mask);
  CHECK(*pg.per_class[0] == Approx(1.0 / 13.0).epsilon(1e-7));
  CHECK(*pg.mean == Approx(1.0 / 13.0).epsilon(1e-7));

  // hand case with exact binary fractions
  Tensor s = Tensor::zeros({kC, h, w});
  const std::int64_t hw = 4;
  s.data[static_cast<size_t>(0 * hw + 0)] = 0.25f;
  s.data[static_cast<size_t>(0 * hw + 1)] = 0.75f;
  s.data[static_cast<size_t>(1 * hw + 2)] = 0.5f;
  s.data[static_cast<size_t>(2 * hw + 3)] = 1.0f;
  pg = metrics::pog(s, gt, mask);
  CHECK(*pg.per_class[0] == 0.5);   // (0.25 + 0.75) / 2
  CHECK(*pg.per_class[1] == 0.5);
  CHECK(*pg.per_class[2] == 1.0);
  CHECK(*pg.mean == 2.0 / 3.0);

  // mask excludes pixel 3: class 2 becomes absent
  std::vector<std::uint8_t> partial = {1, 1, 1, 0};
  pg = metrics::pog(s, gt, partial);
  CHECK_FALSE(pg.per_class[2].has_value());
  CHECK(*pg.mean == 0.5);
}

TEST_CASE("existence F1: trivial and confusion-matrix cases") {
  const int h = 4, w = 4;
  std::vector<int> gt(16, 0);
  for (int i = 8; i < 12; ++i) gt[static_cast<size_t>(i)] = 1;
  for (int i = 12; i < 16; ++i) gt[static_cast<size_t>(i)] = 2;
  const std::vector<std::uint8_t> mask(16, 1);

  auto ex = metrics::exist_f1(onehot_map(gt, h, w), gt, mask);
  CHECK(ex.f1 == 1.0);
  CHECK(ex.tp == 3);

  // prediction concentrates everything on class 5: classes 0..2 all missed
  std::vector<int> pred(16, 5);
  ex = metrics::exist_f1(onehot_map(pred, h, w), gt, mask);
  CHECK(ex.tp == 0);
  CHECK(ex.fp == 1);
  CHECK(ex.fn == 3);
  CHECK(ex.f1 == 0.0);

  // 2 TP (classes 0,1), 1 FN (class 2), 1 FP (class 3)
  std::vector<int> pred2 = gt;
  for (int i = 12; i < 16; ++i) pred2[static_cast<size_t>(i)] = 3;
  ex = metrics::exist_f1(onehot_map(pred2, h, w), gt, mask);
  CHECK(ex.tp == 2);
  CHECK(ex.fp == 1);
  CHECK(ex.fn == 1);
  CHECK(ex.f1 == 2.0 * 2 / (2 * 2 + 1 + 1));

  // high threshold: nothing ever exists, vacuous F1 = 1
  ex = metrics::exist_f1(onehot_map(pred2, h, w), gt, mask, 0.9);
  CHECK(ex.tp + ex.fp + ex.fn == 0);
  CHECK(ex.f1 == 1.0);
}

TEST_CASE("class size error") {
  const int h = 1, w = 12;
  // gt: class 0 on 4 pixels, class 1 on 8
  std::vector<int> gt(12, 1);
  for (int i = 0; i < 4; ++i) gt[static_cast<size_t>(i)] = 0;
  const std::vector<std::uint8_t> mask(12, 1);

  auto sz = metrics::class_size(onehot_map(gt, h, w), gt, mask);
  CHECK(*sz.per_class[0] == 0.0);
  CHECK(*sz.per_class[1] == 0.0);
  CHECK(*sz.mean == 0.0);

  // prediction doubles class 0 (8 pixels) at class 1's expense
  std::vector<int> pred(12, 1);
  for (int i = 0; i < 8; ++i) pred[static_cast<size_t>(i)] = 0;
  sz = metrics::class_size(onehot_map(pred, h, w), gt, mask);
  CHECK(*sz.per_class[0] == 1.0);   // |4-8|/4
  CHECK(*sz.per_class[1] == 0.5);   // |8-4|/8

  // class absent from prediction: skipped
  std::vector<int> pred2(12, 1);
  sz = metrics::class_size(onehot_map(pred2, h, w), gt, mask);
  CHECK_FALSE(sz.per_class[0].has_value());
  CHECK(*sz.per_class[1] == 0.5);
}

TEST_CASE("kcenter: identity, blobs, determinism, rotation equivariance") {
  std::vector<geom::Vec3> tri = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  std::vector<double> w3 = {2.0, 1.0, 1.0};
  auto c = metrics::kcenter(tri, w3, 3);
  CHECK(c.centers.size() == 3);
  CHECK(metrics::stable_sum(c.weights) == Approx(1.0).epsilon(1e-12));
  for (size_t i = 0; i < 3; ++i) {
    double best = 1e9;
    for (const auto& q : c.centers)
      best = std::min(best, metrics::sorted_norm(tri[i].x - q.x, tri[i].y - q.y, tri[i].z - q.z));
    CHECK(best == 0.0);  // every point is its own cluster
  }

  // two separated blobs, k = 2: greedy radius within 2x of the exhaustive optimum
  Rng rng(11);
  std::uniform_real_distribution<double> jit(-0.2, 0.2);
  std::vector<geom::Vec3> pts;
  for (int i = 0; i < 6; ++i) pts.push_back({jit(rng), jit(rng), jit(rng)});
  for (int i = 0; i < 6; ++i) pts.push_back({10.0 + jit(rng), jit(rng), jit(rng)});
  std::vector<double> wu(pts.size(), 1.0);
  auto two = metrics::kcenter(pts, wu, 2);
  auto radius_for = [&](const geom::Vec3& a, const geom::Vec3& b) {
    double r = 0.0;
    for (const auto& p : pts) {
      const double da = metrics::sorted_norm(p.x - a.x, p.y - a.y, p.z - a.z);
      const double db = metrics::sorted_norm(p.x - b.x, p.y - b.y, p.z - b.z);
      r = std::max(r, std::min(da, db));
    }
    return r;
  };
  double best_r = 1e18;
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t j = i + 1; j < pts.size(); ++j) best_r = std::min(best_r, radius_for(pts[i], pts[j]));
  const double greedy_r = radius_for(two.centers[0], two.centers[1]);
  CHECK(greedy_r <= 2.0 * best_r + 1e-12);
  CHECK(std::abs(two.centers[0].x - two.centers[1].x) > 5.0);  // one per blob
  CHECK(*std::min_element(two.weights.begin(), two.weights.end()) == 0.5);

  // determinism
  auto again = metrics::kcenter(pts, wu, 2);
  CHECK(bits_equal(two.centers[0].x, again.centers[0].x));
  CHECK(bits_equal(two.weights[1], again.weights[1]));

  // exact 90-degree yaw equivariance (the shift-invariance building block)
  std::vector<geom::Vec3> rot;
  for (const auto& p : pts) rot.push_back(yaw90(p));
  auto crot = metrics::kcenter(rot, wu, 4);
  auto corig = metrics::kcenter(pts, wu, 4);
  REQUIRE(crot.centers.size() == corig.centers.size());
  for (size_t i = 0; i < corig.centers.size(); ++i) {
    const geom::Vec3 expect = yaw90(corig.centers[i]);
    CHECK(bits_equal(expect.x, crot.centers[i].x));
    CHECK(bits_equal(expect.y, crot.centers[i].y));
    CHECK(bits_equal(expect.z, crot.centers[i].z));
    CHECK(bits_equal(corig.weights[i], crot.weights[i]));
  }

  CHECK_THROWS_AS(metrics::kcenter({}, {}, 2), std::invalid_argument);
  CHECK_THROWS_AS(metrics::kcenter(tri, w3, 0), std::invalid_argument);
}

TEST_CASE("EMD: trivial values, exactness against assignment oracle, axioms") {
  metrics::WeightedClusters a;
  a.centers = {{0, 0, 0}, {1, 1, 1}};
  a.weights = {0.5, 0.5};
  CHECK(metrics::emd(a, a) == 0.0);

  metrics::WeightedClusters s1, s2;
  s1.centers = {{0, 0, 0}};
  s1.weights = {1.0};
  s2.centers = {{1, 0, 0}};
  s2.weights = {1.0};
  CHECK(metrics::emd(s1, s2) == 1.0);

  metrics::WeightedClusters bad = s1;
  bad.weights = {0.5};
  CHECK_THROWS_AS(metrics::emd(bad, s2), std::invalid_argument);
  CHECK_THROWS_AS(metrics::emd(metrics::WeightedClusters{}, s2), std::invalid_argument);

  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = oracle::random_emd_instance(rng, 5, 24);
    const double solver = metrics::emd(inst.a, inst.b);
    const double ref = oracle::emd_by_assignment(inst.a, inst.b, inst.units, inst.a_units,
                                                 inst.b_units);
    INFO("trial " << trial << " solver " << solver << " oracle " << ref);
    CHECK(std::abs(solver - ref) <= 1e-9);
  }

  for (int trial = 0; trial < 100; ++trial) {
    const auto x = oracle::random_equal_clusters(rng, 5);
    const auto y = oracle::random_equal_clusters(rng, 5);
    const auto z = oracle::random_equal_clusters(rng, 5);
    CHECK(metrics::emd(x, x) <= 1e-9);
    CHECK(std::abs(metrics::emd(x, y) - metrics::emd(y, x)) <= 1e-9);
    CHECK(metrics::emd(x, z) <= metrics::emd(x, y) + metrics::emd(y, z) + 1e-9);
  }
}

TEST_CASE("IoU and accuracy: trivial, half-overlap, hand case") {
  const std::vector<std::uint8_t> mask8(8, 1);
  std::vector<int> gt8 = {0, 0, 0, 0, 1, 1, 1, 1};
  auto ia = metrics::iou_acc(onehot_map(gt8, 1, 8), gt8, mask8);
  CHECK(*ia.iou[0] == 1.0);
  CHECK(*ia.mean_iou == 1.0);
  CHECK(ia.accuracy == 1.0);
  CHECK_FALSE(ia.iou[5].has_value());

  // equal-size regions shifted by half: IoU = 1/3 for both classes
  std::vector<int> pred8 = {1, 1, 0, 0, 0, 0, 1, 1};
  ia = metrics::iou_acc(onehot_map(pred8, 1, 8), gt8, mask8);
  CHECK(*ia.iou[0] == Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(*ia.iou[1] == Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(ia.accuracy == 0.5);

  // 3-class 4x4 hand case
  const int h = 4, w = 4;
  std::vector<int> gt(16);
  for (int i = 0; i < 8; ++i) gt[static_cast<size_t>(i)] = 0;
  for (int i = 8; i < 12; ++i) gt[static_cast<size_t>(i)] = 1;
  for (int i = 12; i < 16; ++i) gt[static_cast<size_t>(i)] = 2;
  std::vector<int> pred = gt;
  pred[6] = 1;
  pred[7] = 1;  // steal 2 pixels of class 0
  const std::vector<std::uint8_t> mask(16, 1);
  ia = metrics::iou_acc(onehot_map(pred, h, w), gt, mask);
  CHECK(*ia.iou[0] == 6.0 / 8.0);
  CHECK(*ia.iou[1] == 4.0 / 6.0);
  CHECK(*ia.iou[2] == 1.0);
  CHECK(*ia.mean_iou == ((6.0 / 8.0 + 4.0 / 6.0) + 1.0) / 3.0);
  CHECK(ia.accuracy == 14.0 / 16.0);
}

TEST_CASE("geometry stats: exact zeros, orthogonal normals, perturbation buckets") {
  const int h = 2, w = 2;
  const std::int64_t hw = 4;
  Tensor n = Tensor::zeros({3, h, w});
  for (int i = 0; i < 4; ++i) n.data[static_cast<size_t>(0 * hw + i)] = 1.0f;  // +x normals
  Tensor P = Tensor::zeros({3, h, w});
  for (int i = 0; i < 4; ++i) {
    P.data[static_cast<size_t>(0 * hw + i)] = 2.0f;
    P.data[static_cast<size_t>(1 * hw + i)] = static_cast<float>(i);
  }
  const std::vector<std::uint8_t> mask(4, 1), valid(4, 1);

  auto gs = metrics::geom_stats(n, P, valid, n, P, mask);
  REQUIRE(gs.normal);
  REQUIRE(gs.surface);
  CHECK(gs.normal->mean_deg == 0.0);
  CHECK(gs.normal->median_deg == 0.0);
  CHECK(gs.normal->pct_11_25 == 100.0);
  CHECK(gs.normal->pct_30 == 100.0);
  CHECK(gs.surface->mean_m == 0.0);
  CHECK(gs.surface->median_m == 0.0);
  CHECK(gs.surface->pct_0_2 == 100.0);
  CHECK(gs.pixels == 4);

  // orthogonal normals
  Tensor ny = Tensor::zeros({3, h, w});
  for (int i = 0; i < 4; ++i) ny.data[static_cast<size_t>(1 * hw + i)] = 1.0f;
  gs = metrics::geom_stats(ny, P, valid, n, P, mask);
  CHECK(std::abs(gs.normal->mean_deg - 90.0) <= 1e-9);
  CHECK(gs.normal->pct_30 == 0.0);

  // +0.3 m perturbation lands between the 0.2 and 0.5 buckets
  Tensor Pp = P;
  for (int i = 0; i < 4; ++i) Pp.data[static_cast<size_t>(0 * hw + i)] += 0.3f;
  gs = metrics::geom_stats(n, Pp, valid, n, P, mask);
  CHECK(gs.surface->pct_0_2 == 0.0);
  CHECK(gs.surface->pct_0_5 == 100.0);
  CHECK(gs.surface->pct_1_0 == 100.0);
  // brute-force recomputation
  double ref_mean = 0.0;
  for (int i = 0; i < 4; ++i) {
    double dx = static_cast<double>(Pp.data[static_cast<size_t>(i)]) - P.data[static_cast<size_t>(i)];
    ref_mean += std::sqrt(dx * dx) / 4.0;
  }
  CHECK(gs.surface->mean_m == Approx(ref_mean).epsilon(1e-12));

  // invalid prediction pixels count as maximal error
  std::vector<std::uint8_t> partial_valid = {1, 0, 1, 0};
  gs = metrics::geom_stats(n, P, partial_valid, n, P, mask);
  CHECK(gs.normal->median_deg == 90.0);  // {0,0,180,180} -> (0+180)/2
  CHECK(gs.normal->pct_11_25 == 50.0);
  CHECK(gs.surface->mean_m == 5.0);      // {0,0,10,10}
  CHECK(gs.surface->pct_1_0 == 50.0);
}

TEST_CASE("per-class EMD: identical points and rigid translation") {
  const int h = 3, w = 3;
  const std::int64_t hw = 9;
  std::vector<int> gt(9, sem::kWall);
  gt[4] = sem::kFloor;
  const std::vector<std::uint8_t> mask(9, 1), valid(9, 1);
  Tensor s = onehot_map(gt, h, w);
  Tensor P = Tensor::zeros({3, h, w});
  Rng rng(5);
  std::uniform_real_distribution<float> u(-2.0f, 2.0f);
  for (float& v : P.data) v = u(rng);

  auto em = metrics::emd_per_class(s, P, valid, gt, P, mask);
  CHECK(*em.per_class[sem::kWall] == 0.0);
  CHECK(*em.per_class[sem::kFloor] == 0.0);
  CHECK(*em.mean == 0.0);

  // prediction translated +0.5 m in x, same shape and probabilities;
  // k >= pixel count makes clustering exact, so EMD is exactly the shift
  Tensor Pt = P;
  for (std::int64_t i = 0; i < hw; ++i) Pt.data[static_cast<size_t>(i)] += 0.5f;
  em = metrics::emd_per_class(s, Pt, valid, gt, P, mask);
  CHECK(*em.per_class[sem::kWall] == Approx(0.5).epsilon(1e-9));
  CHECK(*em.per_class[sem::kFloor] == Approx(0.5).epsilon(1e-9));

  // flooring can empty the prediction side: class skipped
  Tensor weak = s;
  for (std::int64_t i = 0; i < hw; ++i) {
    weak.data[static_cast<size_t>(sem::kFloor * hw + i)] = 0.005f;  // below floor everywhere
  }
  // keep argmax existence for kFloor by zeroing the wall channel at pixel 4
  weak.data[static_cast<size_t>(sem::kWall * hw + 4)] = 0.0f;
  em = metrics::emd_per_class(weak, P, valid, gt, P, mask);
  CHECK_FALSE(em.per_class[sem::kFloor].has_value());
}

TEST_CASE("wraparound distance transform") {
  // 8-column toy, left half observed: the right edge is 1 px away through the seam
  std::vector<std::uint8_t> obs = {1, 1, 1, 1, 0, 0, 0, 0};
  auto d = metrics::wrap_distance(obs, 8, 1);
  const std::vector<double> expect = {0, 0, 0, 0, 1, 2, 2, 1};
  for (int x = 0; x < 8; ++x) CHECK(d[static_cast<size_t>(x)] == expect[static_cast<size_t>(x)]);

  // fully observed
  std::vector<std::uint8_t> full(8, 1);
  d = metrics::wrap_distance(full, 8, 1);
  for (double v : d) CHECK(v == 0.0);

  // single observed pixel on an 8x4 grid: exact Euclidean with x wraparound
  std::vector<std::uint8_t> one(32, 0);
  one[0] = 1;
  d = metrics::wrap_distance(one, 8, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 8; ++x) {
      const int dx = std::min(x, 8 - x);
      const double expect_d = std::sqrt(static_cast<double>(dx * dx + y * y));
      CHECK(d[static_cast<size_t>(y * 8 + x)] == expect_d);
    }

  // nothing observed: infinite everywhere
  std::vector<std::uint8_t> none(8, 0);
  d = metrics::wrap_distance(none, 8, 1);
  for (double v : d) CHECK(v == std::numeric_limits<double>::infinity());
}

TEST_CASE("IoU vs distance binning") {
  const int h = 2, w = 8;
  std::vector<int> gt(16, 0);
  for (int i = 8; i < 16; ++i) gt[static_cast<size_t>(i)] = 1;
  const std::vector<std::uint8_t> eval(16, 1);

  // fully observed: everything lands in the first bin at distance 0
  std::vector<std::uint8_t> obs(16, 1);
  auto bins = metrics::iou_vs_distance(onehot_map(gt, h, w), gt, obs, eval, w, h, {0.0, 1.0, 2.0});
  REQUIRE(bins.size() == 1);
  CHECK(bins[0].pixels == 16);
  CHECK(*bins[0].mean_iou == 1.0);
  CHECK(bins[0].lo_deg == 0.0);
  CHECK(bins[0].hi_deg == 45.0);  // 1 px * 360/8

  // left half observed: distances 1 and 2 (wrapping), eval on unobserved only
  std::vector<std::uint8_t> half(16, 0);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 4; ++x) half[static_cast<size_t>(y * 8 + x)] = 1;
  std::vector<std::uint8_t> uneval(16, 0);
  for (size_t i = 0; i < 16; ++i) uneval[i] = half[i] ? 0 : 1;
  bins = metrics::iou_vs_distance(onehot_map(gt, h, w), gt, half, uneval, w, h,
                                  {0.5, 1.5, 2.5, 9.0});
  REQUIRE(bins.size() == 2);
  CHECK(bins[0].pixels == 4);  // distance-1 columns 4 and 7
  CHECK(bins[1].pixels == 4);  // distance-2 columns 5 and 6
  CHECK(*bins[0].mean_iou == 1.0);

  CHECK_THROWS_AS(metrics::iou_vs_distance(onehot_map(gt, h, w), gt, half, uneval, w, h, {1.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      metrics::iou_vs_distance(onehot_map(gt, h, w), gt, half, uneval, w, h, {2.0, 1.0}),
      std::invalid_argument);
}

TEST_CASE("full report is bit-exact under joint face shifts") {
  const int fw = 16, fh = 8;
  const cam::CameraRig rig = cam::make_rig(fw, fh, 90.0, 116.0);
  const Panorama gt = sg::render_panorama(sg::sample_scene(41, 2), rig);
  Panorama pred = sg::render_panorama(sg::sample_scene(99, 5), rig);
  // a few invalid prediction pixels exercise the maximal-error path
  for (int i = 0; i < 40; i += 7) pred.depth.data[static_cast<size_t>(i)] = 0.0f;

  const int w = rig.width();
  const std::vector<std::uint8_t> observed = fov_mask(rig, 180.0, 30.0);
  std::vector<std::uint8_t> eval(observed.size());
  for (size_t i = 0; i < observed.size(); ++i) eval[i] = observed[i] ? 0 : 1;

  metrics::ReportOptions opt;
  opt.k = 20;
  const metrics::MetricReport base = metrics::compute_report(pred, gt, eval, rig, opt);
  CHECK(base.eval_pixels > 0);
  CHECK(base.pog_mean.has_value());
  CHECK(base.emd_mean.has_value());
  REQUIRE(base.normal);
  REQUIRE(base.surface);

  for (int faces = 1; faces <= 3; ++faces) {
    const Panorama gts = circular_shift(gt, faces);
    const Panorama preds = circular_shift(pred, faces);
    std::vector<std::uint8_t> evals(eval.size());
    const int cols = faces * fw;
    for (int y = 0; y < fh; ++y)
      for (int x = 0; x < w; ++x)
        evals[static_cast<size_t>(y) * w + x] =
            eval[static_cast<size_t>(y) * w + (x + cols) % w];
    const metrics::MetricReport shifted = metrics::compute_report(preds, gts, evals, rig, opt);
    INFO("shift by " << faces << " faces");
    CHECK(reports_identical(base, shifted));
  }
}

TEST_CASE("perfect prediction: PoG = IoU = accuracy = 1 and zero errors") {
  const int fw = 16, fh = 8;
  const cam::CameraRig rig = cam::make_rig(fw, fh, 90.0, 116.0);
  const Panorama gt = sg::render_panorama(sg::sample_scene(7, 1), rig);
  const std::vector<std::uint8_t> eval(static_cast<size_t>(gt.pixel_count()), 1);

  const metrics::MetricReport rep = metrics::compute_report(gt, gt, eval, rig);
  CHECK(*rep.pog_mean == 1.0);
  CHECK(*rep.iou_mean == 1.0);
  CHECK(rep.accuracy == 1.0);
  CHECK(rep.exist_f1 == 1.0);
  CHECK(*rep.size_mean == 0.0);
  CHECK(*rep.emd_mean == 0.0);
  CHECK(rep.normal->mean_deg == 0.0);
  CHECK(rep.normal->pct_11_25 == 100.0);
  CHECK(rep.surface->mean_m == 0.0);
  CHECK(rep.surface->pct_0_2 == 100.0);
}
