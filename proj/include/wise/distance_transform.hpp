#pragma once

#include <limits>
#include <vector>

#include "wise/core.hpp"

namespace wise {

namespace detail {

// One-dimensional squared Euclidean distance transform of a sampled
// function (lower envelope of parabolas).
inline void edt_1d(const double* f, double* d, int n, std::vector<int>& v,
                   std::vector<double>& z) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    auto intersect = [&](int p) {
      return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) /
             (2.0 * (q - p));
    };
    double s = intersect(v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const int p = v[k];
    d[q] = double(q - p) * (q - p) + f[p];
  }
}

}  // namespace detail

// Squared Euclidean distance from every pixel to the nearest pixel that is
// not in the mask, where everything outside the image counts as "not in the
// mask". Zero on background pixels. Values are exact integers.
inline std::vector<double> squared_distance_transform(const Mask& mask) {
  // Large enough to dominate any in-image distance, small enough that
  // big + q*q stays exact in double precision.
  constexpr double kBig = 1e12;
  const int h = mask.height() + 2;
  const int w = mask.width() + 2;
  std::vector<double> grid(static_cast<std::size_t>(h) * w, 0.0);
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c)
      if (mask(r, c)) grid[(r + 1) * w + (c + 1)] = kBig;

  std::vector<int> v;
  std::vector<double> z;
  std::vector<double> in(std::max(h, w)), out(std::max(h, w));
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) in[r] = grid[r * w + c];
    detail::edt_1d(in.data(), out.data(), h, v, z);
    for (int r = 0; r < h; ++r) grid[r * w + c] = out[r];
  }
  for (int r = 0; r < h; ++r) {
    detail::edt_1d(&grid[r * w], out.data(), w, v, z);
    std::copy(out.begin(), out.begin() + w, grid.begin() + r * w);
  }

  std::vector<double> result(mask.size());
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c)
      result[r * mask.width() + c] = grid[(r + 1) * w + (c + 1)];
  return result;
}

// The most interior pixel of a mask: maximal distance to the nearest
// outside pixel, ties to the smallest (row, col).
inline Pixel derive_point_annotation(const Mask& mask) {
  if (mask.empty()) throw DomainError("derive_point_annotation: empty mask");
  const auto dist = squared_distance_transform(mask);
  Pixel best{-1, -1};
  double best_d = -1.0;
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask(r, c)) continue;
      const double d = dist[r * mask.width() + c];
      if (d > best_d) {
        best_d = d;
        best = {r, c};
      }
    }
  return best;
}

}  // namespace wise
