#pragma once

#include <limits>
#include <vector>

#include "wise/core.hpp"
#include "wise/inference.hpp"

// Brute-force reference implementations shared by the unit tests and the
// acceptance binary. Written without reuse of the production algorithms.
namespace wise::testing {

// Exhaustive O(N^2) oracle: squared distance from each mask pixel to the
// nearest pixel outside the mask, where the outside includes the one-pixel
// frame around the image.
inline Pixel brute_force_point(const Mask& m) {
  const int H = m.height(), W = m.width();
  std::vector<Pixel> outside;
  for (int r = -1; r <= H; ++r)
    for (int c = -1; c <= W; ++c)
      if (!m.contains({r, c})) outside.push_back({r, c});
  Pixel best{-1, -1};
  long best_d = -1;
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      if (!m(r, c)) continue;
      long d = std::numeric_limits<long>::max();
      for (const Pixel& o : outside)
        d = std::min<long>(d, long(o.row - r) * (o.row - r) + long(o.col - c) * (o.col - c));
      if (d > best_d) {
        best_d = d;
        best = {r, c};
      }
    }
  return best;
}

inline double sq_dist(const EmbeddingMap<double>& e, int r0, int c0, int r1, int c1) {
  double s = 0.0;
  for (int j = 0; j < e.channels(); ++j) {
    const double v = e(j, r0, c0) - e(j, r1, c1);
    s += v * v;
  }
  return s;
}

// Nearest-seed owner per pixel; object seeds first, strict < keeps the lowest
// index on ties.
inline std::vector<int> nearest_seed_oracle(const EmbeddingMap<double>& e,
                                            const std::vector<LocatedObject>& objs,
                                            const std::vector<Pixel>& bg) {
  std::vector<Pixel> seeds;
  for (const auto& o : objs) seeds.push_back(o.pixel());
  seeds.insert(seeds.end(), bg.begin(), bg.end());
  std::vector<int> owner;
  for (int r = 0; r < e.height(); ++r)
    for (int c = 0; c < e.width(); ++c) {
      int best = 0;
      for (int s = 1; s < static_cast<int>(seeds.size()); ++s)
        if (sq_dist(e, r, c, seeds[s].row, seeds[s].col) <
            sq_dist(e, r, c, seeds[best].row, seeds[best].col))
          best = s;
      owner.push_back(best < static_cast<int>(objs.size()) ? best : -1);
    }
  for (std::size_t i = objs.size(); i-- > 0;)
    owner[objs[i].row * e.width() + objs[i].col] = static_cast<int>(i);
  return owner;
}

}  // namespace wise::testing
