#include "panoscene/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace pano::baseline {

namespace {

void require_same_dims(const std::vector<const Panorama*>& set) {
  const Panorama& first = *set.front();
  for (const Panorama* p : set)
    if (p->face_w != first.face_w || p->face_h != first.face_h)
      throw std::invalid_argument("fit_avg: training panoramas disagree in size");
}

// Per-element mean in double, accumulated in training order.  Parallelism is
// across elements so every accumulator sees the same addition sequence as a
// sequential mean.
Tensor mean_of(const std::vector<const Panorama*>& set, Tensor Panorama::*field) {
  const Tensor& first = set.front()->*field;
  Tensor out = Tensor::zeros(first.shape);
  const std::int64_t n = out.numel();
  const double inv = 1.0 / static_cast<double>(set.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t e = 0; e < n; ++e) {
    double acc = 0.0;
    for (const Panorama* p : set) acc += static_cast<double>((p->*field).data[static_cast<size_t>(e)]);
    out.data[static_cast<size_t>(e)] = static_cast<float>(acc * inv);
  }
  return out;
}

void renormalize_normals(Tensor& normal) {
  const std::int64_t hw = normal.numel() / 3;
  for (std::int64_t i = 0; i < hw; ++i) {
    const double x = normal.data[static_cast<size_t>(i)];
    const double y = normal.data[static_cast<size_t>(hw + i)];
    const double z = normal.data[static_cast<size_t>(2 * hw + i)];
    const double len = std::sqrt(x * x + y * y + z * z);
    if (len > 0.0) {
      normal.data[static_cast<size_t>(i)] = static_cast<float>(x / len);
      normal.data[static_cast<size_t>(hw + i)] = static_cast<float>(y / len);
      normal.data[static_cast<size_t>(2 * hw + i)] = static_cast<float>(z / len);
    }
  }
}

AvgModel fit_avg_ptrs(const std::vector<const Panorama*>& set) {
  require_same_dims(set);
  AvgModel m;
  m.count = static_cast<std::int64_t>(set.size());
  m.color = mean_of(set, &Panorama::color);
  m.depth = mean_of(set, &Panorama::depth);
  m.normal = mean_of(set, &Panorama::normal);
  m.pdist = mean_of(set, &Panorama::pdist);
  m.semantics = mean_of(set, &Panorama::semantics);
  renormalize_normals(m.normal);
  for (const Panorama* p : set) {
    if (p->scene_category < 0 || p->scene_category >= sem::kSceneCount)
      throw std::invalid_argument("fit_avg: scene category out of range");
    ++m.hist[static_cast<size_t>(p->scene_category)];
  }
  return m;
}

}  // namespace

Panorama AvgModel::to_panorama() const {
  if (count < 1) throw std::logic_error("AvgModel::to_panorama: model was never fitted");
  Panorama p;
  p.face_w = static_cast<int>(color.shape[2]) / 4;
  p.face_h = static_cast<int>(color.shape[1]);
  p.color = color;
  p.depth = depth;
  p.normal = normal;
  p.pdist = pdist;
  p.semantics = semantics;
  p.mask.assign(static_cast<size_t>(p.pixel_count()), 1);
  int best = 0;
  for (int c = 1; c < sem::kSceneCount; ++c)
    if (hist[static_cast<size_t>(c)] > hist[static_cast<size_t>(best)]) best = c;
  p.scene_category = best;
  return p;
}

AvgModel fit_avg(const std::vector<Panorama>& train) {
  if (train.empty()) throw std::invalid_argument("fit_avg: empty training set");
  std::vector<const Panorama*> ptrs;
  ptrs.reserve(train.size());
  for (const Panorama& p : train) ptrs.push_back(&p);
  return fit_avg_ptrs(ptrs);
}

const AvgModel& AvgTypeModel::for_category(int category) const {
  if (category < 0 || category >= sem::kSceneCount)
    throw std::out_of_range("AvgTypeModel: category out of range");
  return per_category[static_cast<size_t>(category)];
}

AvgTypeModel fit_avg_type(const std::vector<Panorama>& train) {
  if (train.empty()) throw std::invalid_argument("fit_avg_type: empty training set");
  std::array<std::vector<const Panorama*>, sem::kSceneCount> buckets;
  for (const Panorama& p : train) {
    if (p.scene_category < 0 || p.scene_category >= sem::kSceneCount)
      throw std::invalid_argument("fit_avg_type: scene category out of range");
    buckets[static_cast<size_t>(p.scene_category)].push_back(&p);
  }
  AvgTypeModel out;
  AvgModel global;
  bool have_global = false;
  for (int c = 0; c < sem::kSceneCount; ++c) {
    if (buckets[static_cast<size_t>(c)].empty()) {
      if (!have_global) {
        std::vector<const Panorama*> all;
        all.reserve(train.size());
        for (const Panorama& p : train) all.push_back(&p);
        global = fit_avg_ptrs(all);
        have_global = true;
      }
      std::fprintf(stderr, "fit_avg_type: no training images for category %s, using global mean\n",
                   sem::kSceneNames[static_cast<size_t>(c)]);
      out.per_category[static_cast<size_t>(c)] = global;
      out.fallback[static_cast<size_t>(c)] = true;
    } else {
      out.per_category[static_cast<size_t>(c)] = fit_avg_ptrs(buckets[static_cast<size_t>(c)]);
    }
  }
  return out;
}

std::vector<float> pooled_features(const Panorama& pano,
                                   const std::vector<std::uint8_t>& observed) {
  constexpr int kGX = 16, kGY = 10, kCh = 4;
  const int w = pano.width(), h = pano.height();
  if (w <= 0 || w % 4 != 0) throw std::invalid_argument("pooled_features: bad panorama width");
  if (observed.size() != static_cast<size_t>(pano.pixel_count()))
    throw std::invalid_argument("pooled_features: mask size mismatch");
  const int fw = pano.face_w;
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;

  auto channel_at = [&](int c, std::int64_t px) -> double {
    if (c < 3) return pano.color.data[static_cast<size_t>(c * hw + px)];
    return pano.depth.data[static_cast<size_t>(px)];
  };

  double gsum[kCh] = {0, 0, 0, 0};
  std::int64_t gcnt = 0;
  for (std::int64_t px = 0; px < hw; ++px) {
    if (!observed[static_cast<size_t>(px)]) continue;
    ++gcnt;
    for (int c = 0; c < kCh; ++c) gsum[c] += channel_at(c, px);
  }
  double gmean[kCh] = {0, 0, 0, 0};
  if (gcnt > 0)
    for (int c = 0; c < kCh; ++c) gmean[c] = gsum[c] / static_cast<double>(gcnt);

  std::vector<float> out;
  out.reserve(4 * kGY * kGX * kCh);
  for (int f = 0; f < 4; ++f)
    for (int gy = 0; gy < kGY; ++gy) {
      const int y0 = gy * h / kGY, y1 = (gy + 1) * h / kGY;
      for (int gx = 0; gx < kGX; ++gx) {
        const int x0 = f * fw + gx * fw / kGX, x1 = f * fw + (gx + 1) * fw / kGX;
        double sum[kCh] = {0, 0, 0, 0};
        std::int64_t cnt = 0;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) {
            const std::int64_t px = static_cast<std::int64_t>(y) * w + x;
            if (!observed[static_cast<size_t>(px)]) continue;
            ++cnt;
            for (int c = 0; c < kCh; ++c) sum[c] += channel_at(c, px);
          }
        for (int c = 0; c < kCh; ++c)
          out.push_back(static_cast<float>(cnt > 0 ? sum[c] / static_cast<double>(cnt)
                                                   : gmean[c]));
      }
    }
  return out;
}

std::size_t nn_index(const Panorama& query, const std::vector<std::uint8_t>& observed,
                     const std::vector<Panorama>& train, const FeatureFn& fn) {
  if (train.empty()) throw std::invalid_argument("nn_index: empty training set");
  const std::vector<float> qf = fn(query, observed);

  // featurization dominates; exceptions must not escape the parallel region,
  // so a mismatch is flagged and rethrown serially
  std::vector<std::vector<float>> feats(train.size());
  bool mismatch = false;
#pragma omp parallel for schedule(static) reduction(|| : mismatch)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(train.size()); ++i) {
    feats[static_cast<size_t>(i)] = fn(train[static_cast<size_t>(i)], observed);
    mismatch = mismatch || feats[static_cast<size_t>(i)].size() != qf.size();
  }
  if (mismatch) throw std::invalid_argument("nn_index: feature length differs across panoramas");

  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < feats.size(); ++i) {
    double d = 0.0;
    for (size_t j = 0; j < qf.size(); ++j) {
      const double diff = static_cast<double>(qf[j]) - static_cast<double>(feats[i][j]);
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

Panorama predict_nn(const Panorama& query, const std::vector<std::uint8_t>& observed,
                    const std::vector<Panorama>& train, const FeatureFn& fn) {
  return train[nn_index(query, observed, train, fn)];
}

}  // namespace pano::baseline
