#include "panoscene/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace pano::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kC = sem::kClassCount;

struct Dims {
  int c = 0, h = 0, w = 0;
  std::int64_t hw = 0;
};

Dims map_dims(const Tensor& t, int want_c, const char* who) {
  Dims d;
  if (t.shape.size() == 3) {
    d.c = t.shape[0];
    d.h = t.shape[1];
    d.w = t.shape[2];
  } else if (t.shape.size() == 4 && t.shape[0] == 1) {
    d.c = t.shape[1];
    d.h = t.shape[2];
    d.w = t.shape[3];
  } else {
    std::ostringstream os;
    os << who << ": expected (C,H,W) or (1,C,H,W), got " << t.shape_str();
    throw std::invalid_argument(os.str());
  }
  if (want_c > 0 && d.c != want_c) {
    std::ostringstream os;
    os << who << ": expected " << want_c << " channels, got " << t.shape_str();
    throw std::invalid_argument(os.str());
  }
  d.hw = static_cast<std::int64_t>(d.h) * d.w;
  return d;
}

void require_mask(const std::vector<std::uint8_t>& mask, std::int64_t hw, const char* who) {
  if (static_cast<std::int64_t>(mask.size()) != hw) {
    std::ostringstream os;
    os << who << ": mask covers " << mask.size() << " pixels, expected " << hw;
    throw std::invalid_argument(os.str());
  }
}

void require_labels(const std::vector<int>& labels, std::int64_t hw, const char* who) {
  if (static_cast<std::int64_t>(labels.size()) != hw) {
    std::ostringstream os;
    os << who << ": labels cover " << labels.size() << " pixels, expected " << hw;
    throw std::invalid_argument(os.str());
  }
  for (std::int64_t i = 0; i < hw; ++i) {
    if (labels[static_cast<size_t>(i)] < 0 || labels[static_cast<size_t>(i)] >= kC) {
      std::ostringstream os;
      os << who << ": label " << labels[static_cast<size_t>(i)] << " at pixel " << i
         << " outside [0," << kC << ")";
      throw std::invalid_argument(os.str());
    }
  }
}

double mean_of_present(const std::array<std::optional<double>, kC>& v,
                       std::optional<double>& out) {
  double sum = 0.0;
  int n = 0;
  for (const auto& x : v)
    if (x) {
      sum += *x;
      ++n;
    }
  if (n > 0) out = sum / n;
  return sum;
}

}  // namespace

double stable_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

double sorted_norm(double dx, double dy, double dz) {
  double q[3] = {dx * dx, dy * dy, dz * dz};
  std::sort(q, q + 3);
  return std::sqrt(q[0] + q[1] + q[2]);
}

double sorted_dot(double ax, double ay, double az, double bx, double by, double bz) {
  double p[3] = {ax * bx, ay * by, az * bz};
  std::sort(p, p + 3);
  return p[0] + p[1] + p[2];
}

std::vector<int> argmax_labels(const Tensor& s) {
  const Dims d = map_dims(s, kC, "argmax_labels");
  std::vector<int> out(static_cast<size_t>(d.hw));
  for (std::int64_t i = 0; i < d.hw; ++i) {
    int best = 0;
    float bv = s.data[static_cast<size_t>(i)];
    for (int c = 1; c < kC; ++c) {
      const float v = s.data[static_cast<size_t>(c * d.hw + i)];
      if (v > bv) {
        bv = v;
        best = c;
      }
    }
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

PerClass pog(const Tensor& pred_s, const std::vector<int>& gt_labels,
             const std::vector<std::uint8_t>& eval_mask) {
  const Dims d = map_dims(pred_s, kC, "pog");
  require_labels(gt_labels, d.hw, "pog");
  require_mask(eval_mask, d.hw, "pog");
  std::array<std::vector<double>, kC> probs;
  for (std::int64_t i = 0; i < d.hw; ++i) {
    if (!eval_mask[static_cast<size_t>(i)]) continue;
    const int c = gt_labels[static_cast<size_t>(i)];
    probs[static_cast<size_t>(c)].push_back(
        static_cast<double>(pred_s.data[static_cast<size_t>(c * d.hw + i)]));
  }
  PerClass out;
  for (int c = 0; c < kC; ++c) {
    auto& v = probs[static_cast<size_t>(c)];
    if (v.empty()) continue;
    const double n = static_cast<double>(v.size());
    out.per_class[static_cast<size_t>(c)] = stable_sum(std::move(v)) / n;
  }
  mean_of_present(out.per_class, out.mean);
  return out;
}

ExistReport exist_f1(const Tensor& pred_s, const std::vector<int>& gt_labels,
                     const std::vector<std::uint8_t>& eval_mask, double threshold_frac) {
  const Dims d = map_dims(pred_s, kC, "exist_f1");
  require_labels(gt_labels, d.hw, "exist_f1");
  require_mask(eval_mask, d.hw, "exist_f1");
  if (!(threshold_frac >= 0.0))
    throw std::invalid_argument("exist_f1: threshold_frac must be nonnegative");

  const std::vector<int> pred_labels = argmax_labels(pred_s);
  std::array<std::int64_t, kC> gt_cnt{}, pred_cnt{};
  for (std::int64_t i = 0; i < d.hw; ++i) {
    if (!eval_mask[static_cast<size_t>(i)]) continue;
    ++gt_cnt[static_cast<size_t>(gt_labels[static_cast<size_t>(i)])];
    ++pred_cnt[static_cast<size_t>(pred_labels[static_cast<size_t>(i)])];
  }
  ExistReport out;
  out.threshold_px = threshold_frac * static_cast<double>(d.hw);
  for (int c = 0; c < kC; ++c) {
    out.gt[static_cast<size_t>(c)] =
        static_cast<double>(gt_cnt[static_cast<size_t>(c)]) >= out.threshold_px;
    out.pred[static_cast<size_t>(c)] =
        static_cast<double>(pred_cnt[static_cast<size_t>(c)]) >= out.threshold_px;
    if (out.gt[static_cast<size_t>(c)] && out.pred[static_cast<size_t>(c)])
      ++out.tp;
    else if (out.pred[static_cast<size_t>(c)])
      ++out.fp;
    else if (out.gt[static_cast<size_t>(c)])
      ++out.fn;
  }
  const int denom = 2 * out.tp + out.fp + out.fn;
  out.f1 = denom > 0 ? 2.0 * out.tp / denom : 1.0;
  return out;
}

PerClass class_size(const Tensor& pred_s, const std::vector<int>& gt_labels,
                    const std::vector<std::uint8_t>& eval_mask, double threshold_frac) {
  const Dims d = map_dims(pred_s, kC, "class_size");
  const ExistReport ex = exist_f1(pred_s, gt_labels, eval_mask, threshold_frac);
  const std::vector<int> pred_labels = argmax_labels(pred_s);
  std::array<std::int64_t, kC> gt_cnt{}, pred_cnt{};
  for (std::int64_t i = 0; i < d.hw; ++i) {
    if (!eval_mask[static_cast<size_t>(i)]) continue;
    ++gt_cnt[static_cast<size_t>(gt_labels[static_cast<size_t>(i)])];
    ++pred_cnt[static_cast<size_t>(pred_labels[static_cast<size_t>(i)])];
  }
  PerClass out;
  for (int c = 0; c < kC; ++c) {
    if (!(ex.gt[static_cast<size_t>(c)] && ex.pred[static_cast<size_t>(c)])) continue;
    const double ng = static_cast<double>(gt_cnt[static_cast<size_t>(c)]);
    const double np = static_cast<double>(pred_cnt[static_cast<size_t>(c)]);
    out.per_class[static_cast<size_t>(c)] = std::abs(ng - np) / ng;
  }
  mean_of_present(out.per_class, out.mean);
  return out;
}

namespace {

// Exact 90-degree yaw applied r times: pure swap/negate of (x,z).
geom::Vec3 yaw_pow(const geom::Vec3& p, int r) {
  switch (r & 3) {
    case 1:
      return {p.z, p.y, -p.x};
    case 2:
      return {-p.x, p.y, -p.z};
    case 3:
      return {-p.z, p.y, p.x};
    default:
      return p;
  }
}

struct OrderKey {
  double y, x, z, w;
  bool operator<(const OrderKey& o) const {
    if (y != o.y) return y < o.y;
    if (x != o.x) return x < o.x;
    if (z != o.z) return z < o.z;
    return w < o.w;
  }
};

// Canonical processing order of a weighted cloud: sort it under each of the
// four exact yaw rotations and keep the lexicographically smallest list.
// Jointly rotated clouds then share one canonical list, so order-dependent
// decisions downstream (greedy seed, tie breaks, weight accumulation) land on
// rotated images of the same points. Per-point keys would not be enough: a
// cloud can contain distinct points that are exact rotations of each other,
// and their relative order must not depend on the input frame. Only clouds
// that are exactly rotation-symmetric as multisets still tie, and for those
// every minimizing rotation yields identical downstream values.
std::vector<size_t> canonical_order(const std::vector<geom::Vec3>& points,
                                    const std::vector<double>& weights) {
  const size_t n = points.size();
  std::vector<size_t> best_order;
  std::vector<OrderKey> best_keys;
  for (int r = 0; r < 4; ++r) {
    std::vector<OrderKey> keys(n);
    for (size_t i = 0; i < n; ++i) {
      const geom::Vec3 q = yaw_pow(points[i], r);
      keys[i] = {q.y, q.x, q.z, weights[i]};
    }
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return keys[a] < keys[b]; });
    std::vector<OrderKey> sorted(n);
    for (size_t i = 0; i < n; ++i) sorted[i] = keys[order[i]];
    if (r == 0 || std::lexicographical_compare(sorted.begin(), sorted.end(), best_keys.begin(),
                                               best_keys.end())) {
      best_order = std::move(order);
      best_keys = std::move(sorted);
    }
  }
  return best_order;
}

double point_dist(const geom::Vec3& a, const geom::Vec3& b) {
  return sorted_norm(a.x - b.x, a.y - b.y, a.z - b.z);
}

}  // namespace

WeightedClusters kcenter(const std::vector<geom::Vec3>& points, const std::vector<double>& weights,
                         int k) {
  if (points.empty()) throw std::invalid_argument("kcenter: empty point set");
  if (points.size() != weights.size())
    throw std::invalid_argument("kcenter: points and weights disagree in size");
  if (k < 1) throw std::invalid_argument("kcenter: k must be positive");
  for (double w : weights)
    if (!(w >= 0.0)) throw std::invalid_argument("kcenter: weights must be nonnegative");

  const size_t n = points.size();
  const std::vector<size_t> order = canonical_order(points, weights);

  const size_t kk = std::min<size_t>(static_cast<size_t>(k), n);
  std::vector<size_t> centers;
  centers.reserve(kk);
  std::vector<double> dist(n, kInf);
  centers.push_back(order[0]);
  for (size_t i = 0; i < n; ++i) dist[i] = point_dist(points[order[i]], points[centers[0]]);
  while (centers.size() < kk) {
    size_t far = 0;
    for (size_t i = 1; i < n; ++i)
      if (dist[i] > dist[far]) far = i;
    centers.push_back(order[far]);
    for (size_t i = 0; i < n; ++i)
      dist[i] = std::min(dist[i], point_dist(points[order[i]], points[centers.back()]));
  }

  WeightedClusters out;
  out.centers.reserve(kk);
  out.weights.assign(kk, 0.0);
  for (size_t c = 0; c < kk; ++c) out.centers.push_back(points[centers[c]]);
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    size_t best = 0;
    double bd = point_dist(points[order[i]], out.centers[0]);
    for (size_t c = 1; c < kk; ++c) {
      const double dd = point_dist(points[order[i]], out.centers[c]);
      if (dd < bd) {
        bd = dd;
        best = c;
      }
    }
    out.weights[best] += weights[order[i]];
    total += weights[order[i]];
  }
  if (!(total > 0.0)) throw std::invalid_argument("kcenter: total weight must be positive");
  for (double& w : out.weights) w /= total;
  return out;
}

namespace {

// Transportation simplex state: basis cells form a spanning tree over the
// bipartite row/column node graph. Bland's least-index rule on entering and
// leaving cells guarantees termination under degeneracy.
struct Transport {
  int m, n;
  const std::vector<double>& cost;  // m*n row-major
  std::vector<double> flow;         // per basis slot
  std::vector<int> bi, bj;          // basis cell coordinates
  std::vector<std::vector<int>> adj;  // node -> basis slot ids; cols offset by m

  Transport(int m_, int n_, const std::vector<double>& c) : m(m_), n(n_), cost(c) {
    adj.assign(static_cast<size_t>(m + n), {});
  }

  void add_basis(int i, int j, double f) {
    const int slot = static_cast<int>(bi.size());
    bi.push_back(i);
    bj.push_back(j);
    flow.push_back(f);
    adj[static_cast<size_t>(i)].push_back(slot);
    adj[static_cast<size_t>(m + j)].push_back(slot);
  }

  void replace_basis(int slot, int i, int j, double f) {
    auto drop = [&](int node) {
      auto& v = adj[static_cast<size_t>(node)];
      v.erase(std::find(v.begin(), v.end(), slot));
    };
    drop(bi[static_cast<size_t>(slot)]);
    drop(m + bj[static_cast<size_t>(slot)]);
    bi[static_cast<size_t>(slot)] = i;
    bj[static_cast<size_t>(slot)] = j;
    flow[static_cast<size_t>(slot)] = f;
    adj[static_cast<size_t>(i)].push_back(slot);
    adj[static_cast<size_t>(m + j)].push_back(slot);
  }

  // tree path from row node i to column node m+j as a list of basis slots
  std::vector<int> tree_path(int i, int j) const {
    const int nn = m + n;
    std::vector<int> via(static_cast<size_t>(nn), -1), from(static_cast<size_t>(nn), -1);
    std::vector<char> seen(static_cast<size_t>(nn), 0);
    std::queue<int> q;
    q.push(i);
    seen[static_cast<size_t>(i)] = 1;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      if (u == m + j) break;
      for (int slot : adj[static_cast<size_t>(u)]) {
        const int other =
            u < m ? m + bj[static_cast<size_t>(slot)] : bi[static_cast<size_t>(slot)];
        if (seen[static_cast<size_t>(other)]) continue;
        seen[static_cast<size_t>(other)] = 1;
        via[static_cast<size_t>(other)] = slot;
        from[static_cast<size_t>(other)] = u;
        q.push(other);
      }
    }
    std::vector<int> path;
    int node = m + j;
    while (node != i) {
      const int slot = via[static_cast<size_t>(node)];
      if (slot < 0) throw std::logic_error("emd: basis tree disconnected");
      path.push_back(slot);
      node = from[static_cast<size_t>(node)];
    }
    return path;  // ordered from the column end back to row i
  }
};

}  // namespace

double emd(const WeightedClusters& a, const WeightedClusters& b) {
  const int m = static_cast<int>(a.centers.size());
  const int n = static_cast<int>(b.centers.size());
  if (m == 0 || n == 0) throw std::invalid_argument("emd: empty cluster set");
  if (a.centers.size() != a.weights.size() || b.centers.size() != b.weights.size())
    throw std::invalid_argument("emd: centers and weights disagree in size");
  for (double w : a.weights)
    if (!(w >= 0.0)) throw std::invalid_argument("emd: negative weight");
  for (double w : b.weights)
    if (!(w >= 0.0)) throw std::invalid_argument("emd: negative weight");
  const double sa = stable_sum(a.weights), sb = stable_sum(b.weights);
  if (std::abs(sa - 1.0) > 1e-9 || std::abs(sb - 1.0) > 1e-9) {
    std::ostringstream os;
    os << "emd: weights must each sum to 1 (got " << sa << " and " << sb
       << "); normalize before calling";
    throw std::invalid_argument(os.str());
  }

  std::vector<double> cost(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      cost[static_cast<size_t>(i) * n + j] = point_dist(a.centers[static_cast<size_t>(i)],
                                                        b.centers[static_cast<size_t>(j)]);

  // northwest-corner initial basis: exactly m+n-1 cells
  Transport t(m, n, cost);
  {
    std::vector<double> ra = a.weights, rb = b.weights;
    int i = 0, j = 0;
    while (true) {
      const double f = std::min(ra[static_cast<size_t>(i)], rb[static_cast<size_t>(j)]);
      t.add_basis(i, j, f);
      ra[static_cast<size_t>(i)] -= f;
      rb[static_cast<size_t>(j)] -= f;
      if (i == m - 1 && j == n - 1) break;
      if (ra[static_cast<size_t>(i)] <= rb[static_cast<size_t>(j)] && i + 1 < m)
        ++i;
      else if (j + 1 < n)
        ++j;
      else
        ++i;
    }
  }

  constexpr double kPivotEps = 1e-12;
  const long max_pivots = 10000L * (m + n);
  for (long pivot = 0;; ++pivot) {
    if (pivot > max_pivots) throw std::logic_error("emd: pivot limit exceeded");
    // potentials from the basis tree (u[0] = 0)
    std::vector<double> u(static_cast<size_t>(m)), v(static_cast<size_t>(n));
    {
      std::vector<char> seen(static_cast<size_t>(m + n), 0);
      std::queue<int> q;
      q.push(0);
      seen[0] = 1;
      u[0] = 0.0;
      while (!q.empty()) {
        const int node = q.front();
        q.pop();
        for (int slot : t.adj[static_cast<size_t>(node)]) {
          const int ii = t.bi[static_cast<size_t>(slot)], jj = t.bj[static_cast<size_t>(slot)];
          const double c = cost[static_cast<size_t>(ii) * n + jj];
          if (node < m) {
            if (seen[static_cast<size_t>(m + jj)]) continue;
            v[static_cast<size_t>(jj)] = c - u[static_cast<size_t>(ii)];
            seen[static_cast<size_t>(m + jj)] = 1;
            q.push(m + jj);
          } else {
            if (seen[static_cast<size_t>(ii)]) continue;
            u[static_cast<size_t>(ii)] = c - v[static_cast<size_t>(jj)];
            seen[static_cast<size_t>(ii)] = 1;
            q.push(ii);
          }
        }
      }
    }

    // entering cell: least row-major index with negative reduced cost
    int ei = -1, ej = -1;
    for (int i = 0; i < m && ei < 0; ++i)
      for (int j = 0; j < n; ++j) {
        const double red =
            cost[static_cast<size_t>(i) * n + j] - u[static_cast<size_t>(i)] - v[static_cast<size_t>(j)];
        if (red < -kPivotEps) {
          ei = i;
          ej = j;
          break;
        }
      }
    if (ei < 0) break;

    // cycle: entering cell plus the tree path; flows on path cells alternate
    // -θ starting from the cell sharing column ej
    const std::vector<int> path = t.tree_path(ei, ej);
    double theta = kInf;
    int leave = -1;
    for (size_t p = 0; p < path.size(); p += 2) {
      const int slot = path[p];
      const double f = t.flow[static_cast<size_t>(slot)];
      const int cell_index = t.bi[static_cast<size_t>(slot)] * n + t.bj[static_cast<size_t>(slot)];
      const int leave_index =
          leave < 0 ? std::numeric_limits<int>::max()
                    : t.bi[static_cast<size_t>(leave)] * n + t.bj[static_cast<size_t>(leave)];
      if (f < theta || (f == theta && cell_index < leave_index)) {
        theta = f;
        leave = slot;
      }
    }
    if (leave < 0) throw std::logic_error("emd: degenerate cycle without leaving cell");
    for (size_t p = 0; p < path.size(); ++p) {
      double& f = t.flow[static_cast<size_t>(path[p])];
      f += (p % 2 == 0) ? -theta : theta;
    }
    t.replace_basis(leave, ei, ej, theta);
  }

  // cost accumulated over basis cells in row-major order for determinism
  std::vector<int> slots(t.bi.size());
  for (size_t s = 0; s < slots.size(); ++s) slots[s] = static_cast<int>(s);
  std::sort(slots.begin(), slots.end(), [&](int x, int y) {
    return t.bi[static_cast<size_t>(x)] * n + t.bj[static_cast<size_t>(x)] <
           t.bi[static_cast<size_t>(y)] * n + t.bj[static_cast<size_t>(y)];
  });
  double total = 0.0;
  for (int s : slots)
    total += t.flow[static_cast<size_t>(s)] *
             cost[static_cast<size_t>(t.bi[static_cast<size_t>(s)]) * n + t.bj[static_cast<size_t>(s)]];
  return total;
}

IouAcc iou_acc(const Tensor& pred_s, const std::vector<int>& gt_labels,
               const std::vector<std::uint8_t>& eval_mask) {
  const Dims d = map_dims(pred_s, kC, "iou_acc");
  require_labels(gt_labels, d.hw, "iou_acc");
  require_mask(eval_mask, d.hw, "iou_acc");
  const std::vector<int> pred_labels = argmax_labels(pred_s);
  std::array<std::int64_t, kC> inter{}, pred_cnt{}, gt_cnt{};
  std::int64_t correct = 0, total = 0;
  for (std::int64_t i = 0; i < d.hw; ++i) {
    if (!eval_mask[static_cast<size_t>(i)]) continue;
    const int g = gt_labels[static_cast<size_t>(i)], p = pred_labels[static_cast<size_t>(i)];
    ++gt_cnt[static_cast<size_t>(g)];
    ++pred_cnt[static_cast<size_t>(p)];
    if (g == p) {
      ++inter[static_cast<size_t>(g)];
      ++correct;
    }
    ++total;
  }
  IouAcc out;
  for (int c = 0; c < kC; ++c) {
    const std::int64_t uni = gt_cnt[static_cast<size_t>(c)] + pred_cnt[static_cast<size_t>(c)] -
                             inter[static_cast<size_t>(c)];
    if (uni > 0)
      out.iou[static_cast<size_t>(c)] =
          static_cast<double>(inter[static_cast<size_t>(c)]) / static_cast<double>(uni);
  }
  mean_of_present(out.iou, out.mean_iou);
  out.accuracy = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  return out;
}

namespace {

// angle via the chord: exactly 0 for bit-identical unit vectors, and the
// three difference components may be jointly permuted without changing bits
double normal_angle_deg(double ax, double ay, double az, double bx, double by, double bz) {
  const double half_chord = sorted_norm(ax - bx, ay - by, az - bz) / 2.0;
  return geom::rad_to_deg(2.0 * std::asin(std::min(1.0, half_chord)));
}

struct SummaryStats {
  double mean = 0.0, median = 0.0;
  double pct[3] = {0.0, 0.0, 0.0};
};

SummaryStats summarize(std::vector<double> values, const double (&thresholds)[3]) {
  SummaryStats s;
  const double n = static_cast<double>(values.size());
  std::int64_t cnt[3] = {0, 0, 0};
  for (double x : values)
    for (int t = 0; t < 3; ++t)
      if (x < thresholds[t]) ++cnt[t];
  for (int t = 0; t < 3; ++t) s.pct[t] = 100.0 * static_cast<double>(cnt[t]) / n;
  std::sort(values.begin(), values.end());
  const size_t mid = values.size() / 2;
  s.median = values.size() % 2 == 1 ? values[mid] : (values[mid - 1] + values[mid]) / 2.0;
  double acc = 0.0;
  for (double x : values) acc += x;  // already sorted: order-canonical
  s.mean = acc / n;
  return s;
}

}  // namespace

GeomStats geom_stats(const Tensor& pred_n, const Tensor& pred_P,
                     const std::vector<std::uint8_t>& pred_valid, const Tensor& gt_n,
                     const Tensor& gt_P, const std::vector<std::uint8_t>& eval_mask,
                     bool has_normals, bool has_points) {
  GeomStats out;
  if (!has_normals && !has_points) return out;
  const Dims d = has_points ? map_dims(gt_P, 3, "geom_stats") : map_dims(gt_n, 3, "geom_stats");
  require_mask(eval_mask, d.hw, "geom_stats");
  require_mask(pred_valid, d.hw, "geom_stats");
  if (has_normals) {
    map_dims(pred_n, 3, "geom_stats");
    map_dims(gt_n, 3, "geom_stats");
  }
  if (has_points) {
    map_dims(pred_P, 3, "geom_stats");
    map_dims(gt_P, 3, "geom_stats");
  }

  std::vector<double> angles, dists;
  for (std::int64_t i = 0; i < d.hw; ++i) {
    if (!eval_mask[static_cast<size_t>(i)]) continue;
    ++out.pixels;
    const bool ok = pred_valid[static_cast<size_t>(i)] != 0;
    if (has_normals) {
      if (ok)
        angles.push_back(normal_angle_deg(pred_n.data[static_cast<size_t>(i)],
                                          pred_n.data[static_cast<size_t>(d.hw + i)],
                                          pred_n.data[static_cast<size_t>(2 * d.hw + i)],
                                          gt_n.data[static_cast<size_t>(i)],
                                          gt_n.data[static_cast<size_t>(d.hw + i)],
                                          gt_n.data[static_cast<size_t>(2 * d.hw + i)]));
      else
        angles.push_back(kInvalidAngleDeg);
    }
    if (has_points) {
      if (ok)
        dists.push_back(sorted_norm(
            static_cast<double>(pred_P.data[static_cast<size_t>(i)]) -
                gt_P.data[static_cast<size_t>(i)],
            static_cast<double>(pred_P.data[static_cast<size_t>(d.hw + i)]) -
                gt_P.data[static_cast<size_t>(d.hw + i)],
            static_cast<double>(pred_P.data[static_cast<size_t>(2 * d.hw + i)]) -
                gt_P.data[static_cast<size_t>(2 * d.hw + i)]));
      else
        dists.push_back(kInvalidSurfaceM);
    }
  }
  if (has_normals && !angles.empty()) {
    const double th[3] = {11.25, 22.5, 30.0};
    const SummaryStats s = summarize(std::move(angles), th);
    out.normal = NormalStats{s.mean, s.median, s.pct[0], s.pct[1], s.pct[2]};
  }
  if (has_points && !dists.empty()) {
    const double th[3] = {0.2, 0.5, 1.0};
    const SummaryStats s = summarize(std::move(dists), th);
    out.surface = SurfaceStats{s.mean, s.median, s.pct[0], s.pct[1], s.pct[2]};
  }
  return out;
}

PerClass emd_per_class(const Tensor& pred_s, const Tensor& pred_P,
                       const std::vector<std::uint8_t>& pred_valid,
                       const std::vector<int>& gt_labels, const Tensor& gt_P,
                       const std::vector<std::uint8_t>& eval_mask, const EmdOptions& opt) {
  const Dims d = map_dims(pred_s, kC, "emd_per_class");
  map_dims(pred_P, 3, "emd_per_class");
  map_dims(gt_P, 3, "emd_per_class");
  require_labels(gt_labels, d.hw, "emd_per_class");
  require_mask(eval_mask, d.hw, "emd_per_class");
  require_mask(pred_valid, d.hw, "emd_per_class");
  const ExistReport ex = exist_f1(pred_s, gt_labels, eval_mask, opt.threshold_frac);

  auto point_at = [&](const Tensor& P, std::int64_t i) {
    return geom::Vec3{P.data[static_cast<size_t>(i)], P.data[static_cast<size_t>(d.hw + i)],
                      P.data[static_cast<size_t>(2 * d.hw + i)]};
  };

  PerClass out;
  for (int c = 0; c < kC; ++c) {
    if (!(ex.gt[static_cast<size_t>(c)] && ex.pred[static_cast<size_t>(c)])) continue;
    std::vector<geom::Vec3> gt_pts, pr_pts;
    std::vector<double> gt_w, pr_w;
    for (std::int64_t i = 0; i < d.hw; ++i) {
      if (!eval_mask[static_cast<size_t>(i)]) continue;
      if (gt_labels[static_cast<size_t>(i)] == c) {
        gt_pts.push_back(point_at(gt_P, i));
        gt_w.push_back(1.0);
      }
      const float p = pred_s.data[static_cast<size_t>(c * d.hw + i)];
      if (p > opt.prob_floor && pred_valid[static_cast<size_t>(i)]) {
        pr_pts.push_back(point_at(pred_P, i));
        pr_w.push_back(static_cast<double>(p));
      }
    }
    if (gt_pts.empty() || pr_pts.empty()) continue;  // prediction side floored away
    const WeightedClusters g = kcenter(gt_pts, gt_w, opt.k);
    const WeightedClusters q = kcenter(pr_pts, pr_w, opt.k);
    out.per_class[static_cast<size_t>(c)] = emd(g, q);
  }
  mean_of_present(out.per_class, out.mean);
  return out;
}

namespace {

// Felzenszwalb & Huttenlocher 1D squared distance transform. Parabolas with
// infinite height are skipped; all-infinite input stays infinite.
void dt1d(const std::vector<double>& f, std::vector<double>& d) {
  const int n = static_cast<int>(f.size());
  d.assign(static_cast<size_t>(n), kInf);
  std::vector<int> v(static_cast<size_t>(n), 0);
  std::vector<double> z(static_cast<size_t>(n) + 1, 0.0);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[static_cast<size_t>(q)] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s;
    while (true) {
      const int p = v[static_cast<size_t>(k)];
      s = ((f[static_cast<size_t>(q)] + static_cast<double>(q) * q) -
           (f[static_cast<size_t>(p)] + static_cast<double>(p) * p)) /
          (2.0 * q - 2.0 * p);
      if (s > z[static_cast<size_t>(k)]) break;
      --k;
      if (k < 0) break;
    }
    ++k;
    v[static_cast<size_t>(k)] = q;
    z[static_cast<size_t>(k)] = s;
    z[static_cast<size_t>(k) + 1] = kInf;
  }
  if (k < 0) return;  // no parabola: all infinite
  int idx = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<size_t>(idx) + 1] < q) ++idx;
    const int p = v[static_cast<size_t>(idx)];
    const double dq = static_cast<double>(q) - p;
    d[static_cast<size_t>(q)] = dq * dq + f[static_cast<size_t>(p)];
  }
}

}  // namespace

std::vector<double> wrap_distance(const std::vector<std::uint8_t>& observed, int w, int h) {
  if (w < 1 || h < 1) throw std::invalid_argument("wrap_distance: empty grid");
  require_mask(observed, static_cast<std::int64_t>(w) * h, "wrap_distance");
  std::vector<double> sq(static_cast<size_t>(w) * h, kInf);
  // horizontal pass on a tripled row realizes circular wraparound exactly:
  // the true nearest column offset never exceeds w
  std::vector<double> f3(static_cast<size_t>(3) * w), d3;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double val = observed[static_cast<size_t>(y) * w + x] ? 0.0 : kInf;
      f3[static_cast<size_t>(x)] = val;
      f3[static_cast<size_t>(w + x)] = val;
      f3[static_cast<size_t>(2 * w + x)] = val;
    }
    dt1d(f3, d3);
    for (int x = 0; x < w; ++x) sq[static_cast<size_t>(y) * w + x] = d3[static_cast<size_t>(w + x)];
  }
  // vertical pass
  std::vector<double> fc(static_cast<size_t>(h)), dc;
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) fc[static_cast<size_t>(y)] = sq[static_cast<size_t>(y) * w + x];
    dt1d(fc, dc);
    for (int y = 0; y < h; ++y) sq[static_cast<size_t>(y) * w + x] = dc[static_cast<size_t>(y)];
  }
  for (double& v : sq) v = std::sqrt(v);
  return sq;
}

std::vector<DistanceBin> iou_vs_distance(const Tensor& pred_s, const std::vector<int>& gt_labels,
                                         const std::vector<std::uint8_t>& observed_mask,
                                         const std::vector<std::uint8_t>& eval_mask, int w, int h,
                                         const std::vector<double>& bin_edges) {
  const Dims d = map_dims(pred_s, kC, "iou_vs_distance");
  if (d.w != w || d.h != h)
    throw std::invalid_argument("iou_vs_distance: grid size disagrees with pred_s");
  require_labels(gt_labels, d.hw, "iou_vs_distance");
  require_mask(observed_mask, d.hw, "iou_vs_distance");
  require_mask(eval_mask, d.hw, "iou_vs_distance");
  if (bin_edges.size() < 2) throw std::invalid_argument("iou_vs_distance: need >= 2 bin edges");
  for (size_t b = 1; b < bin_edges.size(); ++b)
    if (!(bin_edges[b] > bin_edges[b - 1]))
      throw std::invalid_argument("iou_vs_distance: bin edges must be strictly increasing");

  const std::vector<double> dist = wrap_distance(observed_mask, w, h);
  const std::vector<int> pred_labels = argmax_labels(pred_s);
  const double deg_per_px = 360.0 / static_cast<double>(w);

  std::vector<DistanceBin> out;
  for (size_t b = 0; b + 1 < bin_edges.size(); ++b) {
    const double lo = bin_edges[b], hi = bin_edges[b + 1];
    std::array<std::int64_t, kC> inter{}, pred_cnt{}, gt_cnt{};
    std::int64_t pixels = 0;
    for (std::int64_t i = 0; i < d.hw; ++i) {
      if (!eval_mask[static_cast<size_t>(i)]) continue;
      const double x = dist[static_cast<size_t>(i)];
      if (!(x >= lo && x < hi)) continue;
      ++pixels;
      const int g = gt_labels[static_cast<size_t>(i)], p = pred_labels[static_cast<size_t>(i)];
      ++gt_cnt[static_cast<size_t>(g)];
      ++pred_cnt[static_cast<size_t>(p)];
      if (g == p) ++inter[static_cast<size_t>(g)];
    }
    if (pixels == 0) continue;
    DistanceBin bin;
    bin.lo_px = lo;
    bin.hi_px = hi;
    bin.lo_deg = lo * deg_per_px;
    bin.hi_deg = hi * deg_per_px;
    bin.pixels = pixels;
    double iou_sum = 0.0;
    int present = 0;
    for (int c = 0; c < kC; ++c) {
      const std::int64_t uni = gt_cnt[static_cast<size_t>(c)] + pred_cnt[static_cast<size_t>(c)] -
                               inter[static_cast<size_t>(c)];
      if (uni > 0) {
        iou_sum += static_cast<double>(inter[static_cast<size_t>(c)]) / static_cast<double>(uni);
        ++present;
      }
    }
    if (present > 0) bin.mean_iou = iou_sum / present;
    out.push_back(bin);
  }
  return out;
}

MetricReport compute_report(const Panorama& pred, const Panorama& gt,
                            const std::vector<std::uint8_t>& eval_mask,
                            const cam::CameraRig& rig, const ReportOptions& opt) {
  if (pred.face_w != gt.face_w || pred.face_h != gt.face_h)
    throw std::invalid_argument("compute_report: prediction and GT sizes disagree");
  if (rig.face_w != gt.face_w || rig.face_h != gt.face_h)
    throw std::invalid_argument("compute_report: rig does not match panoramas");
  const std::int64_t hw = gt.pixel_count();
  require_mask(eval_mask, hw, "compute_report");

  MetricReport rep;
  for (std::int64_t i = 0; i < hw; ++i) rep.eval_pixels += eval_mask[static_cast<size_t>(i)] ? 1 : 0;

  const std::vector<int> gt_labels = argmax_labels(gt.semantics);

  // depth * ray per pixel; f32 products so whole-face shifts stay exact
  const Tensor rays = cam::rays_tensor(rig);
  auto points_of = [&](const Tensor& depth) {
    Tensor P = Tensor::zeros({3, gt.height(), gt.width()});
    for (int c = 0; c < 3; ++c)
      for (std::int64_t i = 0; i < hw; ++i)
        P.data[static_cast<size_t>(c * hw + i)] =
            depth.data[static_cast<size_t>(i)] * rays.data[static_cast<size_t>(c * hw + i)];
    return P;
  };
  const Tensor pred_P = points_of(pred.depth);
  const Tensor gt_P = points_of(gt.depth);
  std::vector<std::uint8_t> pred_valid(static_cast<size_t>(hw), 0);
  for (std::int64_t i = 0; i < hw; ++i) {
    const float z = pred.depth.data[static_cast<size_t>(i)];
    pred_valid[static_cast<size_t>(i)] = (std::isfinite(z) && z > 0.0f) ? 1 : 0;
  }

  if (opt.semantics) {
    const PerClass pg = pog(pred.semantics, gt_labels, eval_mask);
    rep.pog = pg.per_class;
    rep.pog_mean = pg.mean;
    const ExistReport ex = exist_f1(pred.semantics, gt_labels, eval_mask, opt.threshold_frac);
    rep.gt_exists = ex.gt;
    rep.pred_exists = ex.pred;
    rep.exist_f1 = ex.f1;
    const PerClass sz = class_size(pred.semantics, gt_labels, eval_mask, opt.threshold_frac);
    rep.size_error = sz.per_class;
    rep.size_mean = sz.mean;
    const IouAcc ia = iou_acc(pred.semantics, gt_labels, eval_mask);
    rep.iou = ia.iou;
    rep.iou_mean = ia.mean_iou;
    rep.accuracy = ia.accuracy;
    if (opt.emd) {
      EmdOptions eo;
      eo.k = opt.k;
      eo.prob_floor = opt.prob_floor;
      eo.threshold_frac = opt.threshold_frac;
      const PerClass em =
          emd_per_class(pred.semantics, pred_P, pred_valid, gt_labels, gt_P, eval_mask, eo);
      rep.emd = em.per_class;
      rep.emd_mean = em.mean;
    }
  }

  if (opt.normals || opt.surface) {
    const GeomStats gs = geom_stats(pred.normal, pred_P, pred_valid, gt.normal, gt_P, eval_mask,
                                    opt.normals, opt.surface);
    rep.normal = gs.normal;
    rep.surface = gs.surface;
  }
  return rep;
}

}  // namespace pano::metrics
