#pragma once

#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "panoscene/geometry.hpp"
#include "panoscene/metrics.hpp"
#include "panoscene/rng.hpp"

// Test-only reference implementations, independent of the library code paths
// they check.
namespace pano::oracle {

// Exact square assignment: minimal total cost over permutations
// (O(n^3) Hungarian algorithm with potentials, 1-indexed internals).
inline double hungarian(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  if (n == 0) throw std::invalid_argument("hungarian: empty matrix");
  for (const auto& row : cost)
    if (static_cast<int>(row.size()) != n)
      throw std::invalid_argument("hungarian: matrix must be square");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(n) + 1, 0.0);
  std::vector<int> match(static_cast<size_t>(n) + 1, 0), way(static_cast<size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(n) + 1, kInf);
    std::vector<char> used(static_cast<size_t>(n) + 1, 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = match[static_cast<size_t>(j0)];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = cost[static_cast<size_t>(i0 - 1)][static_cast<size_t>(j - 1)] -
                           u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(match[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      match[static_cast<size_t>(j0)] = match[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j)
    total += cost[static_cast<size_t>(match[static_cast<size_t>(j)] - 1)][static_cast<size_t>(j - 1)];
  return total;
}

// Reference EMD for cluster weights that are integer multiples of 1/units:
// split every cluster into unit atoms of mass 1/units and solve the exact
// assignment problem (atom-splitting preserves the optimal transport cost).
inline double emd_by_assignment(const metrics::WeightedClusters& a,
                                const metrics::WeightedClusters& b, int units,
                                const std::vector<int>& a_units, const std::vector<int>& b_units) {
  std::vector<geom::Vec3> ra, rb;
  for (size_t i = 0; i < a.centers.size(); ++i)
    for (int t = 0; t < a_units[i]; ++t) ra.push_back(a.centers[i]);
  for (size_t j = 0; j < b.centers.size(); ++j)
    for (int t = 0; t < b_units[j]; ++t) rb.push_back(b.centers[j]);
  if (ra.size() != rb.size() || static_cast<int>(ra.size()) != units)
    throw std::invalid_argument("emd_by_assignment: unit totals disagree");
  std::vector<std::vector<double>> cost(ra.size(), std::vector<double>(rb.size()));
  for (size_t i = 0; i < ra.size(); ++i)
    for (size_t j = 0; j < rb.size(); ++j)
      cost[i][j] = metrics::sorted_norm(ra[i].x - rb[j].x, ra[i].y - rb[j].y, ra[i].z - rb[j].z);
  return hungarian(cost) / static_cast<double>(units);
}

// Random transportation instance with weights on a 1/units grid.
struct EmdInstance {
  metrics::WeightedClusters a, b;
  std::vector<int> a_units, b_units;
  int units = 0;
};

inline EmdInstance random_emd_instance(Rng& rng, int max_side, int units) {
  std::uniform_int_distribution<int> side(1, max_side);
  std::uniform_real_distribution<double> coord(-4.0, 4.0);
  EmdInstance inst;
  inst.units = units;
  const int m = side(rng), n = side(rng);
  auto fill = [&](metrics::WeightedClusters& c, std::vector<int>& cu, int count) {
    cu.assign(static_cast<size_t>(count), 1);  // every cluster keeps >= 1 unit
    std::uniform_int_distribution<int> pick(0, count - 1);
    for (int t = count; t < units; ++t) ++cu[static_cast<size_t>(pick(rng))];
    for (int i = 0; i < count; ++i) {
      c.centers.push_back({coord(rng), coord(rng), coord(rng)});
      c.weights.push_back(static_cast<double>(cu[static_cast<size_t>(i)]) / units);
    }
  };
  fill(inst.a, inst.a_units, m);
  fill(inst.b, inst.b_units, n);
  return inst;
}

// Uniformly weighted random cluster set (for the metric-axiom suite).
inline metrics::WeightedClusters random_equal_clusters(Rng& rng, int max_side) {
  std::uniform_int_distribution<int> side(1, max_side);
  std::uniform_real_distribution<double> coord(-4.0, 4.0);
  metrics::WeightedClusters c;
  const int n = side(rng);
  for (int i = 0; i < n; ++i) {
    c.centers.push_back({coord(rng), coord(rng), coord(rng)});
    c.weights.push_back(1.0 / n);
  }
  return c;
}

}  // namespace pano::oracle
