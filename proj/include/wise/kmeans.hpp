#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "wise/core.hpp"
#include "wise/random.hpp"

namespace wise {

struct KMeansResult {
  std::vector<std::vector<double>> centroids;
  std::vector<int> assignment;  // per point
  int iterations = 0;
};

// Lloyd's k-means with k-means++ seeding over row-major points
// (n x dim). Empty clusters keep their previous centroid.
inline KMeansResult kmeans(const std::vector<double>& points, int n, int dim,
                           int k, Rng& rng, int max_iterations = 100,
                           double tolerance = 1e-6) {
  KMeansResult res;
  if (n == 0 || k <= 0) return res;
  auto pt = [&](int i) { return points.data() + static_cast<std::size_t>(i) * dim; };
  auto dist2 = [&](const double* a, const std::vector<double>& c) {
    double s = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double d = a[j] - c[j];
      s += d * d;
    }
    return s;
  };

  // k-means++ initialization.
  const int first = rng.uniform_int(0, n - 1);
  res.centroids.emplace_back(pt(first), pt(first) + dim);
  std::vector<double> d2(n);
  for (int i = 0; i < n; ++i) d2[i] = dist2(pt(i), res.centroids[0]);
  while (static_cast<int>(res.centroids.size()) < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    int pick = n - 1;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += d2[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.uniform_int(0, n - 1);
    }
    res.centroids.emplace_back(pt(pick), pt(pick) + dim);
    for (int i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], dist2(pt(i), res.centroids.back()));
  }

  res.assignment.assign(n, 0);
  std::vector<double> sums(static_cast<std::size_t>(k) * dim);
  std::vector<int> counts(k);
  for (int it = 0; it < max_iterations; ++it) {
    res.iterations = it + 1;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = dist2(pt(i), res.centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      res.assignment[i] = best;
    }
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) {
      const int c = res.assignment[i];
      ++counts[c];
      for (int j = 0; j < dim; ++j) sums[c * dim + j] += pt(i)[j];
    }
    double shift = 0.0;
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      double s = 0.0;
      for (int j = 0; j < dim; ++j) {
        const double v = sums[c * dim + j] / counts[c];
        const double dv = v - res.centroids[c][j];
        s += dv * dv;
        res.centroids[c][j] = v;
      }
      shift = std::max(shift, std::sqrt(s));
    }
    if (shift <= tolerance) break;
  }
  return res;
}

}  // namespace wise
